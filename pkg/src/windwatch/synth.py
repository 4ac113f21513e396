"""Synthetic multi-turbine SCADA farm generator.

Stands in for the proprietary farm data: one shared weather realization
drives 13 turbines whose power curves are individually perturbed, with
injectable degradation episodes (multiplicative output loss, labelled bad)
and farm-wide collection outages (all channels blanked).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit

from .scada import (
    GENERATOR_SPEED,
    PITCH_ANGLE,
    POWER,
    WIND_DIRECTION,
    WIND_SPEED,
    HOUR,
    ScadaFrame,
)

MIN_SPAN_HOURS = 90 * 24

DEFAULT_TURBINE_IDS = [2, 3, 4, 5, 6, 7, 8, 9, 13, 14, 15, 16, 17]
DEFAULT_SPAN_HOURS = 5184                # 216 days, late October to late May
DEFAULT_START = "2022-10-25T00:00:00Z"

# tile layout used by the default episode placement: the feature pipeline
# loses turbulence_hours-1 leading hours, so 3-day tiles start at raw hour 5
TILE_OFFSET = 5
TILE_HOURS = 72


@dataclass
class TurbineConfig:
    """Static description of one turbine and its injected failures."""

    turbine_id: int
    rated_power: float = 2000.0              # kW
    cut_in: float = 3.0                      # m/s
    rated_speed: float = 12.0                # m/s
    cut_out: float = 25.0                    # m/s
    curve_steepness: float = 1.5             # 1/(m/s)
    noise_std: float = 50.0                  # kW
    seed: int = 0
    degradation_episodes: list[tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.cut_in < self.rated_speed < self.cut_out:
            raise ValueError("need 0 < cut_in < rated_speed < cut_out")
        if self.rated_power <= 0:
            raise ValueError("rated_power must be positive")
        for start, end, factor in self.degradation_episodes:
            if not 0.0 < factor < 1.0:
                raise ValueError("episode output_factor must lie in (0, 1)")
            if end <= start:
                raise ValueError("episode end must exceed start")
        spans = sorted((s, e) for s, e, _ in self.degradation_episodes)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            if s2 < e1:
                raise ValueError("degradation episodes must not overlap")

    def to_dict(self) -> dict:
        return {
            "turbine_id": self.turbine_id,
            "rated_power": self.rated_power,
            "cut_in": self.cut_in,
            "rated_speed": self.rated_speed,
            "cut_out": self.cut_out,
            "curve_steepness": self.curve_steepness,
            "noise_std": self.noise_std,
            "seed": self.seed,
            "degradation_episodes": [list(e) for e in self.degradation_episodes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TurbineConfig":
        d = dict(d)
        d["degradation_episodes"] = [
            (int(s), int(e), float(f)) for s, e, f in d.get("degradation_episodes", [])
        ]
        return cls(**d)


@dataclass
class FarmConfig:
    """Whole-farm simulation settings."""

    turbines: list[TurbineConfig]
    start: str = DEFAULT_START
    span_hours: int = DEFAULT_SPAN_HOURS
    weather_seed: int = 0
    gap_episodes: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.span_hours < MIN_SPAN_HOURS:
            raise ValueError(
                f"span must cover at least 90 days, got {self.span_hours} hours")
        ids = [t.turbine_id for t in self.turbines]
        if len(set(ids)) != len(ids):
            raise ValueError("turbine ids must be unique")
        for s, e in self.gap_episodes:
            if not 0 <= s < e <= self.span_hours:
                raise ValueError("gap episode outside the simulation span")

    @property
    def turbine_ids(self) -> list[int]:
        return [t.turbine_id for t in self.turbines]

    @property
    def start_timestamp(self) -> np.datetime64:
        return np.datetime64(self.start.replace("Z", ""), "s")

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "span_hours": self.span_hours,
            "weather_seed": self.weather_seed,
            "gap_episodes": [list(g) for g in self.gap_episodes],
            "turbines": [t.to_dict() for t in self.turbines],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FarmConfig":
        return cls(
            turbines=[TurbineConfig.from_dict(t) for t in d["turbines"]],
            start=d.get("start", DEFAULT_START),
            span_hours=int(d.get("span_hours", DEFAULT_SPAN_HOURS)),
            weather_seed=int(d.get("weather_seed", 0)),
            gap_episodes=[(int(s), int(e)) for s, e in d.get("gap_episodes", [])],
        )

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "FarmConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def tile_span(tile: int) -> tuple[int, int]:
    """Raw-hour span of one 3-day tile in the default layout."""
    start = TILE_OFFSET + tile * TILE_HOURS
    return start, start + TILE_HOURS


def default_farm_config(seed: int = 42,
                        turbine_ids: list[int] | None = None,
                        span_hours: int = DEFAULT_SPAN_HOURS,
                        start: str = DEFAULT_START) -> FarmConfig:
    """The stock 13-turbine farm with a farm-wide soiling episode.

    Every turbine degrades to 70% output for tiles 7-16 (a 30-day stretch
    starting about three weeks in) and additionally gets two short private
    episodes at seed-chosen tiles later in the span.
    """
    if turbine_ids is None:
        turbine_ids = list(DEFAULT_TURBINE_IDS)
    farm_episode_tiles = set(range(7, 17))
    gap_episodes = [(s, e) for s, e in [(760, 790), (2500, 2512), (3901, 3943)]
                    if e <= span_hours]
    gap_tiles = {(h - TILE_OFFSET) // TILE_HOURS
                 for s, e in gap_episodes for h in (s, e - 1)}

    last_full_tile = (span_hours - TILE_OFFSET) // TILE_HOURS - 1
    candidates = [t for t in range(18, last_full_tile - 1)
                  if t not in gap_tiles and t not in farm_episode_tiles]
    if not candidates:
        raise ValueError("span too short for the default episode layout")

    farm_start, _ = tile_span(min(farm_episode_tiles))
    _, farm_end = tile_span(max(farm_episode_tiles))

    turbines = []
    for tid in turbine_ids:
        rng = np.random.default_rng([seed, tid])
        shift = 0.55 * rng.uniform(-1, 1)
        steepness = 1.5 * (1 + 0.1 * rng.uniform(-1, 1))
        noise = 55 + 15 * rng.uniform(-1, 1)

        episodes = [(farm_start, farm_end, 0.7)]
        taken = []
        while len(taken) < 2:
            tile = int(rng.choice(candidates))
            if all(abs(tile - t) >= 4 for t in taken):
                taken.append(tile)
        for tile in sorted(taken):
            length = int(rng.integers(1, 3))
            s, _ = tile_span(tile)
            _, e = tile_span(tile + length - 1)
            factor = float(np.round(rng.uniform(0.72, 0.85), 3))
            episodes.append((s, min(e, span_hours), factor))

        turbines.append(TurbineConfig(
            turbine_id=tid,
            cut_in=3.0 + shift,
            rated_speed=12.0 + shift,
            curve_steepness=steepness,
            noise_std=noise,
            seed=int(rng.integers(0, 2**31 - 1)),
            degradation_episodes=episodes,
        ))
    return FarmConfig(
        turbines=turbines,
        start=start,
        span_hours=span_hours,
        weather_seed=seed,
        gap_episodes=gap_episodes,
    )


# ---------------------------------------------------------------------------
# weather


def simulate_weather(span_hours: int, seed: int,
                     mean_speed: float = 8.5,
                     diurnal_amplitude: float = 2.0,
                     seasonal_amplitude: float = 1.2,
                     reversion: float = 0.12,
                     innovation_std: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Hourly wind speed and direction for the whole farm.

    Speed follows a mean-reverting walk around a diurnally and seasonally
    modulated level, clipped to [0, 30] m/s; direction is a slow random walk
    on the circle. Fully determined by the seed.
    """
    if span_hours < 1:
        raise ValueError("span must be at least one hour")
    rng = np.random.default_rng(seed)
    t = np.arange(span_hours)
    level = (mean_speed
             + diurnal_amplitude * np.sin(2 * np.pi * (t % 24) / 24 - 0.8)
             + seasonal_amplitude * np.sin(2 * np.pi * t / (24 * 73) + 0.5))
    eps = rng.standard_normal(span_hours)

    speed = np.empty(span_hours)
    speed[0] = np.clip(level[0] + eps[0], 0.0, 30.0)
    for i in range(1, span_hours):
        step = speed[i - 1] + reversion * (level[i] - speed[i - 1]) + innovation_std * eps[i]
        speed[i] = min(max(step, 0.0), 30.0)

    direction = (rng.uniform(0, 360) + np.cumsum(8.0 * rng.standard_normal(span_hours))) % 360.0
    return speed, direction


# ---------------------------------------------------------------------------
# turbine response


def power_curve(v, cfg: TurbineConfig):
    """Expected clean power output at wind speed v.

    Sigmoid between cut-in and cut-out, shifted so output is continuous
    (zero) at cut-in, zero outside the operating range. Works elementwise on
    arrays.
    """
    v = np.asarray(v, dtype=np.float64)
    v_mid = 0.5 * (cfg.cut_in + cfg.rated_speed)
    k = cfg.curve_steepness
    floor = expit(k * (cfg.cut_in - v_mid))
    raw = expit(k * (v - v_mid))
    p = cfg.rated_power * (raw - floor) / (1.0 - floor)
    p = np.where((v < cfg.cut_in) | (v > cfg.cut_out), 0.0, np.maximum(p, 0.0))
    return p if p.ndim else float(p)


def _generator_speed(v: np.ndarray, cfg: TurbineConfig) -> np.ndarray:
    s = np.clip((v - cfg.cut_in) / (cfg.rated_speed - cfg.cut_in), 0.0, 1.0)
    return 700.0 + 900.0 * s ** 0.9


def _pitch_angle(v: np.ndarray, cfg: TurbineConfig) -> np.ndarray:
    return np.minimum(2.2 * np.maximum(v - cfg.rated_speed, 0.0), 28.0)


def generate_turbine(cfg: TurbineConfig, wind_speed: np.ndarray,
                     wind_direction: np.ndarray,
                     start: np.datetime64,
                     gap_episodes: list[tuple[int, int]] | None = None) -> ScadaFrame:
    """Simulate one turbine's hourly SCADA channels against shared weather.

    Degradation episodes multiply the clean power output by their factor and
    set the truth label; the other channels keep reflecting normal operation
    so the defect is only visible in the output. Gap episodes blank every
    channel.
    """
    n = len(wind_speed)
    if len(wind_direction) != n:
        raise ValueError("weather arrays disagree on span")
    for s, e, _ in cfg.degradation_episodes:
        if not 0 <= s < e <= n:
            raise ValueError("degradation episode outside the weather span")

    rng = np.random.default_rng(cfg.seed)
    factor = np.ones(n)
    labels = np.zeros(n, dtype=np.int64)
    for s, e, f in cfg.degradation_episodes:
        factor[s:e] = f
        labels[s:e] = 1

    clean = power_curve(wind_speed, cfg)
    power = clean * factor
    if cfg.noise_std > 0:
        power = power + cfg.noise_std * rng.standard_normal(n)
    power = np.clip(power, 0.0, cfg.rated_power)

    gen = _generator_speed(wind_speed, cfg) + 130.0 * rng.standard_normal(n)
    pitch = np.maximum(_pitch_angle(wind_speed, cfg) + 0.5 * rng.standard_normal(n), 0.0)
    direction = (wind_direction + 2.0 * rng.standard_normal(n)) % 360.0

    channels = {
        WIND_SPEED: wind_speed.astype(np.float64).copy(),
        GENERATOR_SPEED: gen,
        PITCH_ANGLE: pitch,
        WIND_DIRECTION: direction,
        POWER: power,
    }
    for s, e in gap_episodes or []:
        for values in channels.values():
            values[s:e] = np.nan

    timestamps = (start + np.arange(n) * HOUR).astype("datetime64[s]")
    return ScadaFrame(cfg.turbine_id, timestamps, channels, labels)


def generate_farm(cfg: FarmConfig) -> dict[int, ScadaFrame]:
    """All turbines against one shared weather realization."""
    speed, direction = simulate_weather(cfg.span_hours, cfg.weather_seed)
    start = cfg.start_timestamp
    return {
        t.turbine_id: generate_turbine(t, speed, direction, start, cfg.gap_episodes)
        for t in cfg.turbines
    }


# ---------------------------------------------------------------------------
# CSV emission (same format scada.load_csv consumes)


def frame_to_csv(frame: ScadaFrame, path) -> None:
    """Write one turbine frame; hours blanked by gaps are omitted entirely."""
    keep = ~frame.gap_mask()
    stamps = pd.DatetimeIndex(frame.timestamps[keep]).strftime("%Y-%m-%dT%H:%M:%SZ")
    data = {"timestamp": stamps}
    for name, values in frame.channels.items():
        data[name] = values[keep]
    if frame.truth_labels is not None:
        data["label"] = frame.truth_labels[keep]
    pd.DataFrame(data).to_csv(path, index=False)


def turbine_csv_name(turbine_id: int) -> str:
    return f"turbine_{turbine_id:02d}.csv"
