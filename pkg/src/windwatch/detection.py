"""Deterioration detection: error cutoffs from validation windows, then
good/bad classification of non-overlapping 24-hour test windows.

Per turbine, the 90th percentile of validation RMSE and the 95th percentile
of validation RMSPE become cutoff limits; a test window is flagged bad when
its error exceeds the cutoff (in mixed mode, when either metric does).
Windows whose RMSPE is undefined fall back to the RMSE rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleModel, score_window
from .scada import HOUR, FeatureFrame, WindowDataset

MODES = ("rmse", "rmspe", "mixed")
GOOD, BAD = 0, 1


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile (frozen rule; cutoffs are persisted).

    Sort ascending, take rank r = p*(n-1) and interpolate between the
    bracketing order statistics.
    """
    values = sorted(float(v) for v in values)
    if not values:
        raise ValueError("cannot take a percentile of an empty list")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    n = len(values)
    if n == 1:
        return values[0]
    r = p * (n - 1)
    lo = math.floor(r)
    if lo >= n - 1:
        return values[-1]
    return values[lo] + (r - lo) * (values[lo + 1] - values[lo])


@dataclass
class CutoffLimits:
    turbine_id: int
    rmse_cutoff: float
    rmspe_cutoff: float
    n_validation_windows: int

    @property
    def low_sample_warning(self) -> bool:
        return self.n_validation_windows < 10

    def to_dict(self) -> dict:
        return {
            "turbine_id": self.turbine_id,
            "rmse_cutoff": self.rmse_cutoff,
            "rmspe_cutoff": self.rmspe_cutoff,
            "n_validation_windows": self.n_validation_windows,
            "low_sample_warning": self.low_sample_warning,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CutoffLimits":
        return cls(int(d["turbine_id"]), float(d["rmse_cutoff"]),
                   float(d["rmspe_cutoff"]), int(d["n_validation_windows"]))


@dataclass
class SegmentPair:
    """One contiguous hourly run carrying both feature layouts."""

    start: np.datetime64
    lstm_inputs: np.ndarray
    fnn_inputs: np.ndarray
    target: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.target)


@dataclass
class WindowError:
    start: np.datetime64
    rmse: float
    rmspe: float
    rmspe_defined: bool
    truth_bad_fraction: float

    @property
    def truth(self) -> int:
        """Majority of hourly truth labels, ties going to bad."""
        return BAD if self.truth_bad_fraction >= 0.5 else GOOD


def segments_from_frames(lstm_frame: FeatureFrame, fnn_frame: FeatureFrame,
                         start=None, end=None) -> list[SegmentPair]:
    """Split a continuous timeline into gap-free segments.

    The two layouts drop the same hours (shared turbulence warm-up and
    outages), so their timestamp axes must agree. Optional [start, end)
    bounds restrict the timeline.
    """
    if not np.array_equal(lstm_frame.timestamps, fnn_frame.timestamps):
        raise ValueError("feature frames disagree on timestamps")
    ts = lstm_frame.timestamps
    keep = np.ones(len(ts), dtype=bool)
    if start is not None:
        keep &= ts >= np.datetime64(start)
    if end is not None:
        keep &= ts < np.datetime64(end)
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return []

    breaks = np.flatnonzero(np.diff(ts[idx]) != HOUR)
    segments = []
    for chunk in np.split(idx, breaks + 1):
        segments.append(SegmentPair(
            start=ts[chunk[0]],
            lstm_inputs=lstm_frame.inputs[chunk],
            fnn_inputs=fnn_frame.inputs[chunk],
            target=lstm_frame.target[chunk],
            labels=lstm_frame.truth_labels[chunk],
        ))
    return segments


def segments_from_datasets(lstm_ds: WindowDataset, fnn_ds: WindowDataset,
                           split: str, timeline: str | None = "good") -> list[SegmentPair]:
    """Treat each selected 3-day group as its own segment."""
    segments = []
    for gid in sorted(lstm_ds.groups):
        if lstm_ds.plan.assignment.get(gid) != split:
            continue
        lg = lstm_ds.groups[gid]
        if timeline is not None and lg.timeline != timeline:
            continue
        fg = fnn_ds.groups[gid]
        segments.append(SegmentPair(lg.start, lg.inputs, fg.inputs,
                                    lg.target, lg.truth_labels))
    return segments


def window_errors(segments: list[SegmentPair], model: EnsembleModel,
                  window_hours: int = 24) -> list[WindowError]:
    """Score non-overlapping windows aligned to each segment start.

    Partial trailing windows are dropped. Each window is predicted by the
    ensemble and scored with both metrics.
    """
    usable = [s for s in segments if len(s) >= window_hours]
    if not usable:
        raise ValueError(f"no segment is as long as one {window_hours}h window")

    errors = []
    for seg in usable:
        n_win = len(seg) // window_hours
        cut = n_win * window_hours
        lstm_x = seg.lstm_inputs[:cut].reshape(n_win, window_hours, -1)
        fnn_x = seg.fnn_inputs[:cut].reshape(n_win, window_hours, -1)
        preds = model.predict_arrays(lstm_x, fnn_x)
        targets = seg.target[:cut].reshape(n_win, window_hours)
        labels = seg.labels[:cut].reshape(n_win, window_hours)
        for w in range(n_win):
            start = seg.start + np.timedelta64(w * window_hours, "h")
            m = score_window(targets[w], preds[w], model.turbine_id, start)
            errors.append(WindowError(start, m.rmse, m.rmspe, m.rmspe_defined,
                                      float(labels[w].mean())))
    return errors


def compute_cutoffs(val_errors: list[WindowError], turbine_id: int,
                    p_rmse: float = 0.90, p_rmspe: float = 0.95) -> CutoffLimits:
    """Percentile cutoffs from good-timeline validation windows.

    Windows with undefined RMSPE are excluded from the RMSPE percentile.
    """
    if not val_errors:
        raise ValueError("no validation windows to derive cutoffs from")
    rmse_values = [e.rmse for e in val_errors]
    rmspe_values = [e.rmspe for e in val_errors if e.rmspe_defined]
    if not rmspe_values:
        raise ValueError("every validation window has undefined RMSPE")
    return CutoffLimits(
        turbine_id=turbine_id,
        rmse_cutoff=percentile(rmse_values, p_rmse),
        rmspe_cutoff=percentile(rmspe_values, p_rmspe),
        n_validation_windows=len(val_errors),
    )


def label_windows(errors: list[WindowError], cutoffs: CutoffLimits,
                  mode: str) -> np.ndarray:
    """Binary bad-labels per window for one detection mode."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    by_rmse = np.array([e.rmse > cutoffs.rmse_cutoff for e in errors])
    by_rmspe = np.array([
        (e.rmspe > cutoffs.rmspe_cutoff) if e.rmspe_defined
        else (e.rmse > cutoffs.rmse_cutoff)
        for e in errors
    ])
    if mode == "rmse":
        flags = by_rmse
    elif mode == "rmspe":
        flags = by_rmspe
    else:
        flags = by_rmse | by_rmspe
    return flags.astype(np.int64)


@dataclass
class ConfusionMatrix:
    """Counts indexed (truth, prediction) over {good, bad}."""

    tn: int   # truth good, predicted good
    fp: int   # truth good, predicted bad
    fn: int   # truth bad, predicted good
    tp: int   # truth bad, predicted bad

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def support(self, cls: int) -> int:
        return (self.tn + self.fp) if cls == GOOD else (self.fn + self.tp)


def confusion(pred, truth) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError("label vectors differ in length")
    return ConfusionMatrix(
        tn=int(np.sum((truth == GOOD) & (pred == GOOD))),
        fp=int(np.sum((truth == GOOD) & (pred == BAD))),
        fn=int(np.sum((truth == BAD) & (pred == GOOD))),
        tp=int(np.sum((truth == BAD) & (pred == BAD))),
    )


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class DetectionScores:
    per_class: dict[int, ClassScores]
    weighted_f1: float


def scores(cm: ConfusionMatrix) -> DetectionScores:
    """Precision/recall/F1 per class plus the support-weighted F1.

    Undefined ratios (zero denominators) are reported as 0; a class with no
    support contributes zero weight, so an all-good period perfectly
    labelled still scores 1.
    """
    per_class = {}
    weighted = 0.0
    n = cm.total
    for cls in (GOOD, BAD):
        if cls == GOOD:
            tp, fp, fn = cm.tn, cm.fn, cm.fp
        else:
            tp, fp, fn = cm.tp, cm.fp, cm.fn
        support = cm.support(cls)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per_class[cls] = ClassScores(prec, rec, f1, support)
        if n:
            weighted += (support / n) * f1
    return DetectionScores(per_class, weighted)


@dataclass
class ModeResult:
    mode: str
    predictions: np.ndarray
    matrix: ConfusionMatrix
    result: DetectionScores


@dataclass
class DetectionReport:
    turbine_id: int
    errors: list[WindowError]
    cutoffs: CutoffLimits
    modes: dict[str, ModeResult]

    @property
    def truth(self) -> np.ndarray:
        return np.array([e.truth for e in self.errors], dtype=np.int64)

    def weighted_f1(self, mode: str) -> float:
        return self.modes[mode].result.weighted_f1


def build_detection_report(errors: list[WindowError], cutoffs: CutoffLimits,
                           turbine_id: int) -> DetectionReport:
    """Classify windows under all three modes and score against truth."""
    if not errors:
        raise ValueError("no windows to report on")
    truth = np.array([e.truth for e in errors], dtype=np.int64)
    modes = {}
    for mode in MODES:
        pred = label_windows(errors, cutoffs, mode)
        cm = confusion(pred, truth)
        modes[mode] = ModeResult(mode, pred, cm, scores(cm))
    return DetectionReport(turbine_id, errors, cutoffs, modes)
