"""SCADA ingestion and dataset construction.

Raw per-turbine CSVs are resampled to an hourly grid, screened for highly
correlated channels, turned into model-specific feature frames, and cut into
non-overlapping 3-day groups from which sliding windows and aligned
train/val/test splits are built. Hours lost to collection outages are never
imputed: frames simply omit those timestamps and any 3-day group touching a
hole is discarded.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

HOUR = np.timedelta64(1, "h")

POWER = "WTUR.W.mag.f"
WIND_SPEED = "wind_speed"
GENERATOR_SPEED = "generator_speed"
PITCH_ANGLE = "pitch_angle"
WIND_DIRECTION = "wind_direction"

DEFAULT_CHANNELS = [WIND_SPEED, GENERATOR_SPEED, PITCH_ANGLE, WIND_DIRECTION, POWER]

LSTM_KIND = "lstm"
FNN_KIND = "fnn"
MODEL_KINDS = (LSTM_KIND, FNN_KIND)

GROUP_HOURS = 72
WINDOW_HOURS = 24
TURBULENCE_HOURS = 6


class SchemaError(ValueError):
    """Input file does not match the expected column layout."""


@dataclass
class ScadaFrame:
    """Multivariate telemetry for one turbine.

    All channel arrays share the timestamp axis. NaN marks an hour lost to a
    collection gap (only present after resampling; raw loads drop bad rows).
    """

    turbine_id: int
    timestamps: np.ndarray                      # datetime64[s], strictly increasing
    channels: dict[str, np.ndarray]             # name -> float64 values
    truth_labels: np.ndarray | None = None      # 0 good / 1 bad per timestamp
    dropped_rows: int = 0

    def __post_init__(self):
        n = len(self.timestamps)
        for name, values in self.channels.items():
            if len(values) != n:
                raise ValueError(f"channel {name!r} length {len(values)} != {n}")
        if self.truth_labels is not None and len(self.truth_labels) != n:
            raise ValueError("truth_labels length mismatch")
        if n > 1 and not (np.diff(self.timestamps) > np.timedelta64(0, "s")).all():
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.timestamps)

    def gap_mask(self) -> np.ndarray:
        """True where any channel is missing."""
        mask = np.zeros(len(self), dtype=bool)
        for values in self.channels.values():
            mask |= np.isnan(values)
        return mask


@dataclass
class FeatureFrame:
    """Model-ready features for one turbine and one model kind.

    Rows exist only for fully observed hours; outages show up as holes in the
    timestamp axis rather than as NaNs.
    """

    turbine_id: int
    kind: str
    timestamps: np.ndarray
    feature_names: list[str]
    inputs: np.ndarray                          # (n, 4)
    target: np.ndarray                          # (n,) power in kW
    truth_labels: np.ndarray                    # (n,) 0/1
    aux: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.inputs.shape != (len(self.timestamps), len(self.feature_names)):
            raise ValueError("inputs shape mismatch")
        if np.isnan(self.inputs).any() or np.isnan(self.target).any():
            raise ValueError("feature frame must not contain missing values")

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class WindowSample:
    """One sliding window: 4 input curves and the matching power curve."""

    inputs: np.ndarray                          # (W, 4)
    target: np.ndarray                          # (W,)
    group_id: int
    offset: int
    split: str = "train"


@dataclass
class DayGroup:
    """One contiguous, fully observed 3-day block."""

    group_id: int
    start: np.datetime64
    inputs: np.ndarray                          # (72, 4)
    target: np.ndarray                          # (72,)
    truth_labels: np.ndarray                    # (72,)

    @property
    def bad_fraction(self) -> float:
        return float(self.truth_labels.mean())

    @property
    def timeline(self) -> str:
        """"good" if untouched by deterioration, "bad" if mostly bad."""
        frac = self.bad_fraction
        if frac == 0.0:
            return "good"
        return "bad" if frac >= 0.5 else "mixed"


@dataclass
class SplitPlan:
    """Deterministic group -> split assignment shared by every turbine."""

    seed: int
    ratios: tuple[float, float, float]
    assignment: dict[int, str]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "assignment": {str(k): v for k, v in sorted(self.assignment.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(
            seed=int(d["seed"]),
            ratios=tuple(float(r) for r in d["ratios"]),
            assignment={int(k): v for k, v in d["assignment"].items()},
        )


# ---------------------------------------------------------------------------
# ingestion


def load_csv(path, schema: list[str] | None = None, turbine_id: int | None = None) -> ScadaFrame:
    """Read one turbine CSV into a ScadaFrame.

    The file must carry a ``timestamp`` column (RFC 3339) plus one column per
    schema channel; a ``label`` column is optional. Rows with unparsable
    timestamps or channel values are dropped and counted in ``dropped_rows``;
    remaining rows are sorted by timestamp.
    """
    schema = list(schema) if schema is not None else list(DEFAULT_CHANNELS)
    try:
        raw = pd.read_csv(path, dtype=str)
    except FileNotFoundError:
        raise
    missing = [c for c in ["timestamp"] + schema if c not in raw.columns]
    if missing:
        raise SchemaError(f"{path}: missing required columns {missing}")

    ts = pd.to_datetime(raw["timestamp"], errors="coerce", utc=True, format="ISO8601")
    ok = ts.notna()
    values = {}
    for name in schema:
        col = pd.to_numeric(raw[name], errors="coerce")
        values[name] = col
        ok &= col.notna()
    has_label = "label" in raw.columns
    if has_label:
        lab = pd.to_numeric(raw["label"], errors="coerce")
        ok &= lab.notna() & lab.isin([0, 1])

    dropped = int((~ok).sum())
    if ok.sum() == 0:
        raise ValueError(f"{path}: no usable rows")

    order = np.argsort(ts[ok].values, kind="stable")
    stamps = ts[ok].dt.tz_convert(None).values.astype("datetime64[s]")[order]
    channels = {name: values[name][ok].to_numpy(dtype=np.float64)[order] for name in schema}
    labels = lab[ok].to_numpy(dtype=np.int64)[order] if has_label else None

    if turbine_id is None:
        turbine_id = -1
    return ScadaFrame(turbine_id, stamps, channels, labels, dropped)


def resample_hourly(frame: ScadaFrame) -> ScadaFrame:
    """Average each channel over [h, h+1h) bins on a complete hourly grid.

    Hours with no samples between the first and last observation become NaN
    gaps. The truth label per hour is the majority vote of that hour's sample
    labels, ties going to bad.
    """
    if len(frame) == 0:
        raise ValueError("cannot resample an empty frame")
    stamps = frame.timestamps
    if len(stamps) > 1:
        # gaps legitimately create long spacings; judge resolution by the
        # typical step instead
        step = np.median(np.diff(stamps).astype("timedelta64[s]"))
        if step > np.timedelta64(3600, "s"):
            raise ValueError("native resolution must be <= 1 hour")

    hours = stamps.astype("datetime64[h]")
    first, last = hours[0], hours[-1]
    n = int((last - first) / HOUR) + 1
    idx = ((hours - first) / HOUR).astype(np.int64)
    counts = np.bincount(idx, minlength=n)

    channels = {}
    with np.errstate(invalid="ignore"):
        for name, values in frame.channels.items():
            sums = np.bincount(idx, weights=values, minlength=n)
            channels[name] = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    labels = None
    if frame.truth_labels is not None:
        bad = np.bincount(idx, weights=frame.truth_labels.astype(np.float64), minlength=n)
        labels = np.where(bad * 2 >= counts, 1, 0).astype(np.int64)
        labels[counts == 0] = 0

    new_stamps = (first + np.arange(n) * HOUR).astype("datetime64[s]")
    return ScadaFrame(frame.turbine_id, new_stamps, channels, labels, frame.dropped_rows)


# ---------------------------------------------------------------------------
# channel screening


@dataclass
class PruneResult:
    kept: list[str]
    dropped: list[tuple[str, str, float]]       # (channel, partner, correlation)
    zero_variance: list[str]

    def to_dict(self) -> dict:
        return {
            "kept": self.kept,
            "dropped": [[c, p, corr] for c, p, corr in self.dropped],
            "zero_variance": self.zero_variance,
        }


def prune_correlated(frame: ScadaFrame, threshold: float = 0.9,
                     target: str = POWER) -> PruneResult:
    """Greedy correlation screen in fixed channel order.

    A channel is dropped when its absolute Pearson correlation with any
    earlier kept channel exceeds ``threshold``. The target channel is always
    kept. Channels with (numerically) zero variance are reported separately
    and take no part in the correlation pass.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    names = list(frame.channels)
    if len(names) < 2:
        raise ValueError("need at least two channels")

    kept: list[str] = []
    dropped: list[tuple[str, str, float]] = []
    zero_variance: list[str] = []
    for name in names:
        x = frame.channels[name]
        valid_x = ~np.isnan(x)
        if np.nanstd(x) < 1e-12:
            zero_variance.append(name)
            continue
        if name == target:
            kept.append(name)
            continue
        verdict = None
        for other in kept:
            y = frame.channels[other]
            both = valid_x & ~np.isnan(y)
            if both.sum() < 3:
                raise ValueError(f"fewer than 3 overlapping samples for {name}/{other}")
            corr = float(np.corrcoef(x[both], y[both])[0, 1])
            if abs(corr) > threshold:
                verdict = (name, other, corr)
                break
        if verdict is None:
            kept.append(name)
        else:
            dropped.append(verdict)
    return PruneResult(kept, dropped, zero_variance)


# ---------------------------------------------------------------------------
# feature engineering


def rolling_std(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing standard deviation over the last ``window`` samples.

    The first window-1 entries are NaN (not enough history); NaNs in the
    input poison every window they touch.
    """
    n = len(values)
    out = np.full(n, np.nan)
    if n < window:
        return out
    sw = np.lib.stride_tricks.sliding_window_view(values, window)
    out[window - 1:] = sw.std(axis=1)
    # guard tiny negative variances from cancellation
    return np.where(out < 0, 0.0, out)


def engineer_features(frame: ScadaFrame, kind: str,
                      turbulence_hours: int = TURBULENCE_HOURS) -> FeatureFrame:
    """Build the 4-feature input frame for one model kind.

    Wind-speed turbulence is the trailing ``turbulence_hours`` rolling
    standard deviation of wind speed; hours without full history (the leading
    warm-up and any hour whose trailing window touches a gap) are dropped.
    The sine of the wind direction is carried along as an auxiliary channel.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    for required in (WIND_SPEED, GENERATOR_SPEED, PITCH_ANGLE, WIND_DIRECTION, POWER):
        if required not in frame.channels:
            raise SchemaError(f"missing base channel {required!r}")

    wind = frame.channels[WIND_SPEED]
    gen = frame.channels[GENERATOR_SPEED]
    pitch = frame.channels[PITCH_ANGLE]
    turbulence = rolling_std(wind, turbulence_hours)

    if kind == LSTM_KIND:
        names = [WIND_SPEED, GENERATOR_SPEED, "pitch_x_generator_speed",
                 "pitch_x_turbulence"]
        columns = [wind, gen, pitch * gen, pitch * turbulence]
    else:
        names = [WIND_SPEED, GENERATOR_SPEED, "wind_x_generator_speed", "turbulence"]
        columns = [wind, gen, wind * gen, turbulence]

    inputs = np.column_stack(columns)
    target = frame.channels[POWER]
    direction_sin = np.sin(np.radians(frame.channels[WIND_DIRECTION]))
    labels = frame.truth_labels if frame.truth_labels is not None \
        else np.zeros(len(frame), dtype=np.int64)

    keep = ~(np.isnan(inputs).any(axis=1) | np.isnan(target) | np.isnan(direction_sin))
    return FeatureFrame(
        turbine_id=frame.turbine_id,
        kind=kind,
        timestamps=frame.timestamps[keep],
        feature_names=names,
        inputs=inputs[keep],
        target=target[keep],
        truth_labels=labels[keep],
        aux={"wind_direction_sin": direction_sin[keep],
             WIND_SPEED: wind[keep]},
    )


# ---------------------------------------------------------------------------
# groups, windows, splits


def make_day_groups(frame: FeatureFrame, group_hours: int = GROUP_HOURS,
                    anchor: np.datetime64 | None = None) -> list[DayGroup]:
    """Tile the timeline into consecutive non-overlapping 3-day groups.

    Tiles are anchored at ``anchor`` (default: the frame's first timestamp)
    so group ids are comparable across turbines. A tile survives only if all
    its hours are present; the partial trailing tile is discarded.
    """
    if len(frame) == 0:
        return []
    if anchor is None:
        anchor = frame.timestamps[0]
    offsets = ((frame.timestamps - anchor) / HOUR).astype(np.int64)
    if (offsets < 0).any():
        raise ValueError("anchor is later than some frame timestamps")
    index_of = dict(zip(offsets.tolist(), range(len(frame))))

    n_tiles = (int(offsets[-1]) + 1) // group_hours
    groups = []
    for k in range(n_tiles):
        rows = [index_of.get(k * group_hours + i) for i in range(group_hours)]
        if any(r is None for r in rows):
            continue
        rows = np.asarray(rows)
        groups.append(DayGroup(
            group_id=k,
            start=anchor + np.timedelta64(k * group_hours, "h"),
            inputs=frame.inputs[rows],
            target=frame.target[rows],
            truth_labels=frame.truth_labels[rows],
        ))
    return groups


def slide_windows(group: DayGroup, window_hours: int = WINDOW_HOURS,
                  stride: int = 1, split: str = "train") -> list[WindowSample]:
    """All windows of length ``window_hours`` inside one group.

    Offsets run 0, stride, 2*stride, ... and never cross the group boundary,
    giving floor((G - W) / stride) + 1 samples.
    """
    g = len(group.target)
    if window_hours > g:
        raise ValueError(f"window of {window_hours}h exceeds group length {g}h")
    samples = []
    for offset in range(0, g - window_hours + 1, stride):
        samples.append(WindowSample(
            inputs=group.inputs[offset:offset + window_hours],
            target=group.target[offset:offset + window_hours],
            group_id=group.group_id,
            offset=offset,
            split=split,
        ))
    return samples


def assign_splits(group_count: int, seed: int,
                  ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)) -> SplitPlan:
    """Shuffle group ids deterministically and partition them by ratio.

    The assignment depends only on (seed, group_count, ratios), so turbines
    sharing those inputs share the plan exactly. Fractional counts are
    floored per split with the remainder going to train.
    """
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    if group_count < 3:
        raise ValueError("need at least 3 groups to split")

    order = np.random.default_rng(seed).permutation(group_count)
    n_val = int(np.floor(ratios[1] * group_count))
    n_test = int(np.floor(ratios[2] * group_count))
    n_train = group_count - n_val - n_test

    assignment = {}
    for pos, gid in enumerate(order.tolist()):
        if pos < n_train:
            assignment[gid] = "train"
        elif pos < n_train + n_val:
            assignment[gid] = "val"
        else:
            assignment[gid] = "test"
    return SplitPlan(seed=seed, ratios=tuple(ratios), assignment=assignment)


# ---------------------------------------------------------------------------
# normalization


@dataclass
class Normalizer:
    """Per-feature standardization fitted on the training split only."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, sample: WindowSample) -> WindowSample:
        return replace(sample, inputs=(sample.inputs - self.mean) / self.std)

    def apply_array(self, inputs: np.ndarray) -> np.ndarray:
        return (inputs - self.mean) / self.std

    def invert_array(self, normalized: np.ndarray) -> np.ndarray:
        return normalized * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))


def fit_normalizer(train_samples: list[WindowSample]) -> Normalizer:
    """Feature-wise mean/std over every hour of every training window."""
    if not train_samples:
        raise ValueError("cannot fit a normalizer on an empty training set")
    stacked = np.concatenate([s.inputs for s in train_samples], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), 1e-8)
    return Normalizer(mean, std)


def apply_normalizer(sample: WindowSample, stats: Normalizer) -> WindowSample:
    return stats.apply(sample)


# ---------------------------------------------------------------------------
# dataset assembly


@dataclass
class WindowDataset:
    """Windows plus group metadata for one turbine and one model kind."""

    turbine_id: int
    kind: str
    samples: list[WindowSample]
    groups: dict[int, DayGroup]
    plan: SplitPlan

    def select(self, split: str | None = None, timeline: str | None = None) -> list[WindowSample]:
        picked = []
        for s in self.samples:
            if split is not None and s.split != split:
                continue
            if timeline is not None and self.groups[s.group_id].timeline != timeline:
                continue
            picked.append(s)
        return picked


def build_window_dataset(frame: FeatureFrame, plan: SplitPlan,
                         window_hours: int = WINDOW_HOURS, stride: int = 1,
                         anchor: np.datetime64 | None = None) -> WindowDataset:
    """Cut a feature frame into split-tagged sliding windows."""
    groups = make_day_groups(frame, anchor=anchor)
    samples = []
    kept_groups = {}
    for group in groups:
        split = plan.assignment.get(group.group_id)
        if split is None:
            continue
        kept_groups[group.group_id] = group
        samples.extend(slide_windows(group, window_hours, stride, split=split))
    return WindowDataset(frame.turbine_id, frame.kind, samples, kept_groups, plan)
