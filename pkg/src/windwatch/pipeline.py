"""End-to-end orchestration: synth -> prep -> train -> detect -> cross-eval
-> report, with every stage runnable on its own from persisted artifacts.

All stages are deterministic functions of (RunConfig, input files); rerunning
any stage with the same seed reproduces its outputs byte for byte. Console
progress goes to stdout and never into artifacts.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import scada, synth
from .crosseval import EvalMatrix, cross_evaluate
from .detection import (
    CutoffLimits,
    DetectionReport,
    MODES,
    build_detection_report,
    compute_cutoffs,
    segments_from_datasets,
    segments_from_frames,
    window_errors,
)
from .ensemble import EnsembleModel, pair_windows
from .modelio import load_model, save_model
from .scada import FeatureFrame, MODEL_KINDS, SplitPlan, WindowDataset
from .training import TrainConfig, TrainedModel, train

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def _default_lstm_train() -> TrainConfig:
    # trimmed epoch budget: the full pipeline must stay desk-scale on one core
    return TrainConfig(kind="lstm", max_epochs=20, patience=5)


def _default_fnn_train() -> TrainConfig:
    return TrainConfig(kind="fnn", max_epochs=35, patience=8)


@dataclass
class RunConfig:
    """Everything one reproduction run needs, seeded and serializable."""

    out_root: Path
    seed: int = 42
    farm: synth.FarmConfig = None
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    lstm_train: TrainConfig = field(default_factory=_default_lstm_train)
    fnn_train: TrainConfig = field(default_factory=_default_fnn_train)
    window_hours: int = 24
    stride: int = 1
    turbulence_hours: int = 6
    prune_threshold: float = 0.9
    p_rmse: float = 0.90
    p_rmspe: float = 0.95
    detect_start: str | None = None
    detect_end: str | None = None

    def __post_init__(self):
        self.out_root = Path(self.out_root)
        if self.farm is None:
            self.farm = synth.default_farm_config(self.seed)

    @property
    def data_dir(self) -> Path:
        return self.out_root / "data"

    @property
    def processed_dir(self) -> Path:
        return self.out_root / "processed"

    @property
    def models_dir(self) -> Path:
        return self.out_root / "models"

    @property
    def reports_dir(self) -> Path:
        return self.out_root / "reports"

    @property
    def plotdata_dir(self) -> Path:
        return self.reports_dir / "plotdata"

    @property
    def anchor(self) -> np.datetime64:
        return self.farm.start_timestamp + (self.turbulence_hours - 1) * scada.HOUR

    @property
    def n_tiles(self) -> int:
        usable = self.farm.span_hours - (self.turbulence_hours - 1)
        return usable // scada.GROUP_HOURS

    def train_config(self, kind: str, turbine_id: int) -> TrainConfig:
        base = self.lstm_train if kind == scada.LSTM_KIND else self.fnn_train
        return dataclasses.replace(base, seed=self.seed * 1000 + turbine_id)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "farm": self.farm.to_dict(),
            "ratios": list(self.ratios),
            "lstm_train": self.lstm_train.to_dict(),
            "fnn_train": self.fnn_train.to_dict(),
            "window_hours": self.window_hours,
            "stride": self.stride,
            "turbulence_hours": self.turbulence_hours,
            "prune_threshold": self.prune_threshold,
            "p_rmse": self.p_rmse,
            "p_rmspe": self.p_rmspe,
            "detect_start": self.detect_start,
            "detect_end": self.detect_end,
        }

    @classmethod
    def from_dict(cls, d: dict, out_root) -> "RunConfig":
        kw = dict(d)
        farm = kw.pop("farm", None)
        kw["farm"] = synth.FarmConfig.from_dict(farm) if farm else None
        for key in ("lstm_train", "fnn_train"):
            if key in kw and kw[key] is not None:
                kw[key] = TrainConfig.from_dict(kw[key])
        if "ratios" in kw:
            kw["ratios"] = tuple(kw["ratios"])
        return cls(out_root=out_root, **kw)

    @classmethod
    def from_json(cls, path, out_root) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), out_root)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(cfg: RunConfig) -> None:
    _write_json(cfg.out_root / "run_manifest.json", cfg.to_dict())


# ---------------------------------------------------------------------------
# synth


def stage_synth(cfg: RunConfig) -> list[Path]:
    """Emit one CSV per turbine plus the farm config actually used."""
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    frames = synth.generate_farm(cfg.farm)
    paths = []
    for tid in cfg.farm.turbine_ids:
        path = cfg.data_dir / synth.turbine_csv_name(tid)
        synth.frame_to_csv(frames[tid], path)
        paths.append(path)
    cfg.farm.to_json(cfg.data_dir / "farm_config.json")
    print(f"synth: wrote {len(paths)} turbine files to {cfg.data_dir}")
    return paths


# ---------------------------------------------------------------------------
# prep


def _features_path(cfg: RunConfig, kind: str, tid: int) -> Path:
    return cfg.processed_dir / f"features_{kind}_{tid:02d}.csv"


def save_features(frame: FeatureFrame, path: Path) -> None:
    stamps = pd.DatetimeIndex(frame.timestamps).strftime(TIMESTAMP_FORMAT)
    data = {"timestamp": stamps}
    for i, name in enumerate(frame.feature_names):
        data[name] = frame.inputs[:, i]
    data["target"] = frame.target
    data["label"] = frame.truth_labels
    for name, values in frame.aux.items():
        data[f"aux_{name}"] = values
    pd.DataFrame(data).to_csv(path, index=False)


def load_features(path: Path, turbine_id: int, kind: str) -> FeatureFrame:
    df = pd.read_csv(path)
    feature_names = [c for c in df.columns
                     if c not in ("timestamp", "target", "label")
                     and not c.startswith("aux_")]
    stamps = pd.to_datetime(df["timestamp"], utc=True, format="ISO8601")
    return FeatureFrame(
        turbine_id=turbine_id,
        kind=kind,
        timestamps=stamps.dt.tz_convert(None).values.astype("datetime64[s]"),
        feature_names=feature_names,
        inputs=df[feature_names].to_numpy(dtype=np.float64),
        target=df["target"].to_numpy(dtype=np.float64),
        truth_labels=df["label"].to_numpy(dtype=np.int64),
        aux={c[len("aux_"):]: df[c].to_numpy(dtype=np.float64)
             for c in df.columns if c.startswith("aux_")},
    )


def stage_prep(cfg: RunConfig) -> SplitPlan:
    """Resample, screen channels, engineer both feature sets, fix the splits.

    The correlation screen is applied to the resampled channels and its
    verdict recorded; the model feature recipes themselves are fixed, so a
    screen that would drop a required base channel is a hard error.
    """
    cfg.processed_dir.mkdir(parents=True, exist_ok=True)
    farm = synth.FarmConfig.from_json(cfg.data_dir / "farm_config.json")

    plan = scada.assign_splits(cfg.n_tiles, cfg.seed, cfg.ratios)
    _write_json(cfg.processed_dir / "splits.json", plan.to_dict())

    for tid in farm.turbine_ids:
        raw = scada.load_csv(cfg.data_dir / synth.turbine_csv_name(tid), turbine_id=tid)
        hourly = scada.resample_hourly(raw)
        prune = scada.prune_correlated(hourly, cfg.prune_threshold)
        _write_json(cfg.processed_dir / f"prune_{tid:02d}.json",
                    {"seed": cfg.seed, "dropped_rows": raw.dropped_rows,
                     **prune.to_dict()})
        for required in (scada.WIND_SPEED, scada.GENERATOR_SPEED,
                         scada.PITCH_ANGLE, scada.WIND_DIRECTION):
            if required not in prune.kept:
                raise ValueError(
                    f"turbine {tid}: screen dropped required channel {required!r}")
        for kind in MODEL_KINDS:
            frame = scada.engineer_features(hourly, kind, cfg.turbulence_hours)
            save_features(frame, _features_path(cfg, kind, tid))
    print(f"prep: features for {len(farm.turbine_ids)} turbines in {cfg.processed_dir}")
    return plan


# ---------------------------------------------------------------------------
# train


def load_plan(cfg: RunConfig) -> SplitPlan:
    with open(cfg.processed_dir / "splits.json") as fh:
        return SplitPlan.from_dict(json.load(fh))


def load_dataset(cfg: RunConfig, kind: str, tid: int,
                 plan: SplitPlan | None = None) -> WindowDataset:
    path = _features_path(cfg, kind, tid)
    if not path.exists():
        raise FileNotFoundError(f"prepared features missing: {path} (run prep first)")
    frame = load_features(path, tid, kind)
    return scada.build_window_dataset(frame, plan or load_plan(cfg),
                                      window_hours=cfg.window_hours,
                                      stride=cfg.stride, anchor=cfg.anchor)


def _model_path(cfg: RunConfig, kind: str, tid: int) -> Path:
    return cfg.models_dir / f"turbine_{tid:02d}_{kind}.wwm"


def _rated_power(cfg: RunConfig, tid: int) -> float:
    farm = synth.FarmConfig.from_json(cfg.data_dir / "farm_config.json")
    for t in farm.turbines:
        if t.turbine_id == tid:
            return t.rated_power
    raise ValueError(f"unknown turbine id {tid}")


def train_one(cfg: RunConfig, kind: str, tid: int,
              plan: SplitPlan | None = None) -> TrainedModel:
    ds = load_dataset(cfg, kind, tid, plan)
    train_samples = ds.select("train", "good")
    val_samples = ds.select("val", "good")
    model = train(train_samples, val_samples, cfg.train_config(kind, tid),
                  tid, _rated_power(cfg, tid))

    cfg.models_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, _model_path(cfg, kind, tid))
    _write_json(cfg.models_dir / f"turbine_{tid:02d}_{kind}_normalizer.json",
                {"seed": cfg.seed, **model.normalizer.to_dict()})
    pd.DataFrame(
        [(h.epoch, h.train_loss, h.val_loss) for h in model.history],
        columns=["epoch", "train_mse", "val_mse"],
    ).to_csv(cfg.models_dir / f"turbine_{tid:02d}_{kind}_history.csv", index=False)
    return model


def stage_train(cfg: RunConfig, turbine_ids: list[int] | None = None,
                kinds=MODEL_KINDS) -> dict[int, dict[str, TrainedModel]]:
    plan = load_plan(cfg)
    if turbine_ids is None:
        turbine_ids = cfg.farm.turbine_ids
    models: dict[int, dict[str, TrainedModel]] = {}
    for tid in sorted(turbine_ids):
        models[tid] = {}
        for kind in kinds:
            t0 = time.perf_counter()
            model = train_one(cfg, kind, tid, plan)
            best = np.sqrt(model.best_val_loss)
            print(f"train: turbine {tid} {kind}: {len(model.history)} epochs, "
                  f"best val RMSE {best:.1f} kW ({time.perf_counter() - t0:.1f}s)")
            models[tid][kind] = model
    return models


def load_ensemble(cfg: RunConfig, tid: int,
                  models: dict[int, dict[str, TrainedModel]] | None = None) -> EnsembleModel:
    if models is not None and tid in models:
        pair = models[tid]
        return EnsembleModel(pair["lstm"], pair["fnn"])
    lstm_path = _model_path(cfg, "lstm", tid)
    fnn_path = _model_path(cfg, "fnn", tid)
    for p in (lstm_path, fnn_path):
        if not p.exists():
            raise FileNotFoundError(f"model file missing: {p} (run train first)")
    return EnsembleModel(load_model(lstm_path), load_model(fnn_path))


# ---------------------------------------------------------------------------
# detect


def compute_turbine_cutoffs(cfg: RunConfig, tid: int, ens: EnsembleModel,
                            plan: SplitPlan | None = None) -> CutoffLimits:
    plan = plan or load_plan(cfg)
    lstm_ds = load_dataset(cfg, "lstm", tid, plan)
    fnn_ds = load_dataset(cfg, "fnn", tid, plan)
    segments = segments_from_datasets(lstm_ds, fnn_ds, "val", "good")
    if not segments:
        raise ValueError(f"turbine {tid}: no good validation groups for cutoffs")
    errors = window_errors(segments, ens, cfg.window_hours)
    cut = compute_cutoffs(errors, tid, cfg.p_rmse, cfg.p_rmspe)
    _write_json(cfg.reports_dir / f"cutoffs_{tid:02d}.json",
                {"seed": cfg.seed, **cut.to_dict()})
    return cut


def detect_one(cfg: RunConfig, tid: int, ens: EnsembleModel,
               plan: SplitPlan | None = None,
               start=None, end=None) -> DetectionReport:
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    cut = compute_turbine_cutoffs(cfg, tid, ens, plan)

    lstm_frame = load_features(_features_path(cfg, "lstm", tid), tid, "lstm")
    fnn_frame = load_features(_features_path(cfg, "fnn", tid), tid, "fnn")
    segments = segments_from_frames(lstm_frame, fnn_frame,
                                    start or cfg.detect_start,
                                    end or cfg.detect_end)
    if not segments:
        raise ValueError(f"turbine {tid}: detection range contains no data")
    errors = window_errors(segments, ens, cfg.window_hours)
    report = build_detection_report(errors, cut, tid)

    rows = pd.DataFrame({
        "window_start": pd.DatetimeIndex(
            [e.start for e in errors]).strftime(TIMESTAMP_FORMAT),
        "rmse": [e.rmse for e in errors],
        "rmspe": [e.rmspe for e in errors],
        "rmspe_defined": [e.rmspe_defined for e in errors],
        "truth_bad_fraction": [e.truth_bad_fraction for e in errors],
        "truth": report.truth,
        **{f"pred_{m}": report.modes[m].predictions for m in MODES},
    })
    rows.to_csv(cfg.reports_dir / f"detect_{tid:02d}_windows.csv", index=False)
    return report


def stage_detect(cfg: RunConfig, turbine_ids: list[int] | None = None,
                 models: dict[int, dict[str, TrainedModel]] | None = None,
                 start=None, end=None) -> dict[int, DetectionReport]:
    if turbine_ids is None:
        turbine_ids = cfg.farm.turbine_ids
    plan = load_plan(cfg)
    reports = {}
    confusion_rows = []
    summary_rows = []
    for tid in sorted(turbine_ids):
        ens = load_ensemble(cfg, tid, models)
        report = detect_one(cfg, tid, ens, plan, start, end)
        reports[tid] = report
        for mode in MODES:
            mr = report.modes[mode]
            confusion_rows.append((tid, mode, mr.matrix.tn, mr.matrix.fp,
                                   mr.matrix.fn, mr.matrix.tp))
            bad = mr.result.per_class[1]
            summary_rows.append((tid, mode, mr.result.weighted_f1,
                                 bad.precision, bad.recall, bad.f1,
                                 mr.matrix.total))
        print(f"detect: turbine {tid}: weighted F1 "
              + " ".join(f"{m}={report.weighted_f1(m):.3f}" for m in MODES))

    pd.DataFrame(confusion_rows,
                 columns=["turbine", "mode", "tn", "fp", "fn", "tp"]).to_csv(
        cfg.reports_dir / "detection_confusions.csv", index=False)
    summary = pd.DataFrame(summary_rows, columns=[
        "turbine", "mode", "weighted_f1", "precision_bad", "recall_bad",
        "f1_bad", "n_windows"])
    summary.to_csv(cfg.reports_dir / "detection_summary.csv", index=False)
    pivot = summary.pivot(index="turbine", columns="mode", values="weighted_f1")
    pivot[["rmse", "rmspe", "mixed"]].reset_index().to_csv(
        cfg.reports_dir / "f1_table.csv", index=False)
    return reports


# ---------------------------------------------------------------------------
# cross-eval


def _paired_test_windows(cfg: RunConfig, tid: int, plan: SplitPlan, timeline: str):
    lstm_ds = load_dataset(cfg, "lstm", tid, plan)
    fnn_ds = load_dataset(cfg, "fnn", tid, plan)
    return pair_windows(lstm_ds.select("test", timeline),
                        fnn_ds.select("test", timeline))


def stage_crosseval(cfg: RunConfig,
                    models: dict[int, dict[str, TrainedModel]] | None = None
                    ) -> dict[str, EvalMatrix]:
    plan = load_plan(cfg)
    ids = cfg.farm.turbine_ids
    ensembles = {tid: load_ensemble(cfg, tid, models) for tid in ids}
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)

    matrices = {}
    for timeline in ("good", "bad"):
        datasets = {tid: _paired_test_windows(cfg, tid, plan, timeline)
                    for tid in ids}
        matrix = cross_evaluate(ensembles, datasets, timeline)
        matrix.to_dataframe().to_csv(
            cfg.reports_dir / f"crosseval_{timeline}.csv", index=False)
        _write_json(cfg.reports_dir / f"crosseval_{timeline}_annotations.json",
                    {"seed": cfg.seed, **matrix.annotations()})
        matrices[timeline] = matrix
        print(f"cross-eval: {timeline} matrix, diagonal best in "
              f"{matrix.diagonal_is_column_min_count()}/{len(ids)} columns")
    return matrices


# ---------------------------------------------------------------------------
# report (plot-ready data bundle)


def stage_report(cfg: RunConfig,
                 models: dict[int, dict[str, TrainedModel]] | None = None) -> Path:
    """Tidy CSVs for figure analogs: hourly prediction traces, power-curve
    scatter, per-window error timelines with cutoff overlays, cutoff table."""
    plan = load_plan(cfg)
    cfg.plotdata_dir.mkdir(parents=True, exist_ok=True)
    cutoff_rows = []
    for tid in sorted(cfg.farm.turbine_ids):
        windows_path = cfg.reports_dir / f"detect_{tid:02d}_windows.csv"
        cutoffs_path = cfg.reports_dir / f"cutoffs_{tid:02d}.json"
        if not windows_path.exists() or not cutoffs_path.exists():
            raise FileNotFoundError(
                f"turbine {tid}: run detect before report ({windows_path})")
        with open(cutoffs_path) as fh:
            cut = json.load(fh)
        cutoff_rows.append((tid, cut["rmse_cutoff"], cut["rmspe_cutoff"],
                            cut["n_validation_windows"], cut["low_sample_warning"]))

        ens = load_ensemble(cfg, tid, models)
        lstm_frame = load_features(_features_path(cfg, "lstm", tid), tid, "lstm")
        fnn_frame = load_features(_features_path(cfg, "fnn", tid), tid, "fnn")
        segments = segments_from_frames(lstm_frame, fnn_frame,
                                        cfg.detect_start, cfg.detect_end)

        stamps, truth, lstm_kw, fnn_kw, ens_kw, wind, labels = [], [], [], [], [], [], []
        w = cfg.window_hours
        for seg in segments:
            n_win = len(seg) // w
            if n_win == 0:
                continue
            cutoff = n_win * w
            lx = seg.lstm_inputs[:cutoff].reshape(n_win, w, -1)
            fx = seg.fnn_inputs[:cutoff].reshape(n_win, w, -1)
            a = ens.lstm.predict(lx).reshape(-1)
            b = ens.fnn.predict(fx).reshape(-1)
            c = np.clip(0.5 * a + 0.5 * b, 0.0, ens.rated_power)
            stamps.extend(seg.start + np.arange(cutoff) * scada.HOUR)
            truth.extend(seg.target[:cutoff])
            labels.extend(seg.labels[:cutoff])
            wind.extend(seg.lstm_inputs[:cutoff, 0])
            lstm_kw.extend(a)
            fnn_kw.extend(b)
            ens_kw.extend(c)

        stamp_strings = pd.DatetimeIndex(stamps).strftime(TIMESTAMP_FORMAT)
        pd.DataFrame({
            "timestamp": stamp_strings,
            "true_kw": truth,
            "lstm_kw": lstm_kw,
            "fnn_kw": fnn_kw,
            "ensemble_kw": ens_kw,
            "label": labels,
        }).to_csv(cfg.plotdata_dir / f"traces_{tid:02d}.csv", index=False)

        pd.DataFrame({
            "wind_speed": wind,
            "true_kw": truth,
            "ensemble_kw": ens_kw,
            "timeline": ["bad" if l else "good" for l in labels],
        }).to_csv(cfg.plotdata_dir / f"powercurve_{tid:02d}.csv", index=False)

        windows = pd.read_csv(windows_path)
        windows["rmse_cutoff"] = cut["rmse_cutoff"]
        windows["rmspe_cutoff"] = cut["rmspe_cutoff"]
        windows.to_csv(cfg.plotdata_dir / f"error_timeline_{tid:02d}.csv", index=False)

    pd.DataFrame(cutoff_rows, columns=[
        "turbine", "rmse_cutoff", "rmspe_cutoff", "n_validation_windows",
        "low_sample_warning"]).to_csv(
        cfg.plotdata_dir / "cutoffs_overview.csv", index=False)
    print(f"report: plot data bundle in {cfg.plotdata_dir}")
    return cfg.plotdata_dir


# ---------------------------------------------------------------------------
# one-shot


@dataclass
class PipelineResult:
    models: dict[int, dict[str, TrainedModel]]
    reports: dict[int, DetectionReport]
    matrices: dict[str, EvalMatrix]
    stage_seconds: dict[str, float]


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    """synth -> prep -> train -> detect -> cross-eval -> report."""
    write_manifest(cfg)
    timings = {}

    t0 = time.perf_counter()
    stage_synth(cfg)
    timings["synth"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stage_prep(cfg)
    timings["prep"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    models = stage_train(cfg)
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reports = stage_detect(cfg, models=models)
    timings["detect"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    matrices = stage_crosseval(cfg, models=models)
    timings["crosseval"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stage_report(cfg, models=models)
    timings["report"] = time.perf_counter() - t0

    total = sum(timings.values())
    print("pipeline: done in %.1fs (%s)" % (
        total, ", ".join(f"{k}={v:.1f}s" for k, v in timings.items())))
    return PipelineResult(models, reports, matrices, timings)
