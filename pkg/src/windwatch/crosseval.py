"""Every turbine's ensemble evaluated on every turbine's test windows.

Produces the farm-wide RMSE matrix for one timeline tag (good or bad):
rows are the turbine whose model is applied, columns the turbine whose data
is predicted. Each model normalizes foreign data with its own statistics,
exactly as it would in deployment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .ensemble import EnsembleModel, PairedWindow, rmse


@dataclass
class EvalMatrix:
    model_ids: list[int]
    data_ids: list[int]
    values: np.ndarray          # (models, datasets) mean RMSE in kW
    tag: str

    def entry(self, model_id: int, data_id: int) -> float:
        return float(self.values[self.model_ids.index(model_id),
                                 self.data_ids.index(data_id)])

    def column_minima(self) -> dict[int, int]:
        """data turbine -> model turbine with the lowest error on it."""
        return {d: self.model_ids[int(np.argmin(self.values[:, c]))]
                for c, d in enumerate(self.data_ids)}

    def row_minima(self) -> dict[int, int]:
        """model turbine -> data turbine it predicts best."""
        return {m: self.data_ids[int(np.argmin(self.values[r]))]
                for r, m in enumerate(self.model_ids)}

    def row_maxima(self) -> dict[int, int]:
        """model turbine -> data turbine it predicts worst."""
        return {m: self.data_ids[int(np.argmax(self.values[r]))]
                for r, m in enumerate(self.model_ids)}

    def diagonal_is_column_min_count(self) -> int:
        return sum(1 for d, m in self.column_minima().items() if m == d)

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values,
                          index=pd.Index(self.model_ids, name="model_turbine"),
                          columns=[str(d) for d in self.data_ids])
        return df.reset_index()

    def annotations(self) -> dict:
        return {
            "tag": self.tag,
            "column_min_model": {str(k): v for k, v in self.column_minima().items()},
            "row_min_data": {str(k): v for k, v in self.row_minima().items()},
            "row_max_data": {str(k): v for k, v in self.row_maxima().items()},
            "diagonal_column_min_count": self.diagonal_is_column_min_count(),
        }


def cross_evaluate(models: dict[int, EnsembleModel],
                   datasets: dict[int, list[PairedWindow]],
                   tag: str) -> EvalMatrix:
    """Mean per-window RMSE of model i on turbine j's tagged test windows."""
    missing = sorted(set(models) ^ set(datasets))
    if missing:
        raise ValueError(f"model/dataset turbine sets disagree on {missing}")
    ids = sorted(models)
    empty = [tid for tid in ids if not datasets[tid]]
    if empty:
        raise ValueError(f"no {tag} test windows for turbines {empty}")

    values = np.zeros((len(ids), len(ids)))
    targets = {tid: np.stack([p.target for p in datasets[tid]]) for tid in ids}
    for r, model_id in enumerate(ids):
        model = models[model_id]
        for c, data_id in enumerate(ids):
            preds = model.predict(datasets[data_id])
            per_window = [rmse(y, yhat) for y, yhat in zip(targets[data_id], preds)]
            values[r, c] = float(np.mean(per_window))
    return EvalMatrix(ids, ids, values, tag)
