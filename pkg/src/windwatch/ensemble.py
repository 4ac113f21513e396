"""Equal-weight ensemble of the two forecasters plus its error metrics.

The two members consume different feature sets computed from the same
frame, so ensemble inputs always come in (lstm windows, fnn windows) pairs.
RMSPE is implemented exactly as defined for this workflow: the squared
error sum normalized by the plain sum of true outputs (not their squares),
which makes becalmed windows (true sum ~ 0) undefined; those are flagged
and excluded from cutoff statistics rather than zeroed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scada import WindowSample
from .training import TrainedModel


class UndefinedWindowError(ValueError):
    """RMSPE is undefined because the true power sums to <= 0."""


def rmse(y_true, y_pred) -> float:
    """Root mean squared error between two equal-length curves (kW)."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("empty curves")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def rmspe(y_true, y_pred) -> float:
    """Squared-error sum over the sum of true outputs, square-rooted."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    denom = float(y_true.sum())
    if denom <= 0.0:
        raise UndefinedWindowError("true power sums to <= 0 in this window")
    return math.sqrt(float(((y_true - y_pred) ** 2).sum()) / denom)


@dataclass(frozen=True)
class PairedWindow:
    """The same (group, offset) window in both feature layouts."""

    lstm: WindowSample
    fnn: WindowSample

    def __post_init__(self):
        if (self.lstm.group_id, self.lstm.offset) != (self.fnn.group_id, self.fnn.offset):
            raise ValueError("paired windows must share group and offset")
        if not np.array_equal(self.lstm.target, self.fnn.target):
            raise ValueError("paired windows must share the target curve")

    @property
    def target(self) -> np.ndarray:
        return self.lstm.target

    @property
    def split(self) -> str:
        return self.lstm.split


def pair_windows(lstm_samples: list[WindowSample],
                 fnn_samples: list[WindowSample]) -> list[PairedWindow]:
    """Match windows from the two feature layouts by (group, offset)."""
    by_key = {(s.group_id, s.offset): s for s in fnn_samples}
    pairs = []
    for s in lstm_samples:
        other = by_key.get((s.group_id, s.offset))
        if other is not None:
            pairs.append(PairedWindow(s, other))
    return pairs


@dataclass
class EnsembleModel:
    """Two trained members combined pointwise with fixed weights."""

    lstm: TrainedModel
    fnn: TrainedModel
    weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        w1, w2 = self.weights
        if w1 < 0 or w2 < 0 or abs(w1 + w2 - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        if self.lstm.turbine_id != self.fnn.turbine_id:
            raise ValueError("ensemble members must come from the same turbine")

    @property
    def turbine_id(self) -> int:
        return self.lstm.turbine_id

    @property
    def rated_power(self) -> float:
        return self.lstm.rated_power

    def predict_arrays(self, lstm_inputs: np.ndarray,
                       fnn_inputs: np.ndarray) -> np.ndarray:
        """Weighted member average, clamped to the feasible power range."""
        a = self.lstm.predict(lstm_inputs)
        b = self.fnn.predict(fnn_inputs)
        if a.shape != b.shape:
            raise ValueError(f"member curves disagree: {a.shape} vs {b.shape}")
        combined = self.weights[0] * a + self.weights[1] * b
        return np.clip(combined, 0.0, self.rated_power)

    def predict(self, pairs: list[PairedWindow]) -> np.ndarray:
        lstm_x = np.stack([p.lstm.inputs for p in pairs])
        fnn_x = np.stack([p.fnn.inputs for p in pairs])
        return self.predict_arrays(lstm_x, fnn_x)


def ensemble_predict(model: EnsembleModel, pair: PairedWindow) -> np.ndarray:
    """Ensemble power curve for a single window pair."""
    return model.predict([pair])[0]


@dataclass
class WindowMetrics:
    turbine_id: int
    window_start: object                      # datetime64 or hour index
    rmse: float
    rmspe: float                              # NaN when undefined
    rmspe_defined: bool

    @property
    def flags(self) -> str:
        return "" if self.rmspe_defined else "rmspe_undefined"


def score_window(y_true: np.ndarray, y_pred: np.ndarray, turbine_id: int,
                 window_start) -> WindowMetrics:
    """Both error metrics for one window, flagging undefined RMSPE."""
    value_rmse = rmse(y_true, y_pred)
    try:
        value_rmspe = rmspe(y_true, y_pred)
        defined = True
    except UndefinedWindowError:
        value_rmspe = float("nan")
        defined = False
    return WindowMetrics(turbine_id, window_start, value_rmse, value_rmspe, defined)


def metrics_table(metrics: list[WindowMetrics]):
    """Per-window metric rows as a DataFrame ready for CSV emission."""
    import pandas as pd

    return pd.DataFrame({
        "turbine": [m.turbine_id for m in metrics],
        "window_start": [m.window_start for m in metrics],
        "rmse": [m.rmse for m in metrics],
        "rmspe": [m.rmspe for m in metrics],
        "flags": [m.flags for m in metrics],
    })
