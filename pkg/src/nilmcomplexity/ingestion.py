"""Loading, resampling, aggregating and synthesizing power traces."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd
import tomli

from .domain import ApplianceSet, PowerTrace, ValidationError

log = logging.getLogger(__name__)

AGGREGATE = "aggregate"
_UNIT_SCALE = {"w": 1.0, "kw": 1000.0, "mw": 1e6}


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for one dataset flavour.

    ``channels`` maps source column -> channel name; empty means every
    non-time column, names unchanged.
    """

    time_column: str = "timestamp"
    channels: Mapping[str, str] = field(default_factory=dict)
    unit: str = "W"
    delimiter: str = ","

    def __post_init__(self):
        if self.unit.lower() not in _UNIT_SCALE:
            raise ValidationError(f"unsupported unit {self.unit!r}")

    @classmethod
    def load(cls, path) -> CsvSchema:
        path = Path(path)
        raw = path.read_bytes()
        data = tomli.loads(raw.decode()) if path.suffix == ".toml" else json.loads(raw)
        return cls(**data)


@dataclass(frozen=True)
class LoadReport:
    gap_count: int
    zero_filled_samples: int


def _exact_floats(col: pd.Series) -> np.ndarray:
    """Parse decimal strings exactly; unparseable entries become NaN."""
    try:
        return col.to_numpy(dtype=np.float64)
    except (TypeError, ValueError):
        # pandas' fast parser is not round-trip exact, so only use it to find bad rows
        bad = pd.to_numeric(col, errors="coerce").isna().to_numpy()
        out = np.full(len(col), np.nan)
        out[~bad] = col[~bad].to_numpy(dtype=np.float64)
        return out


def _parse_times(col: pd.Series) -> np.ndarray:
    numeric = _exact_floats(col)
    if np.all(np.isfinite(numeric)):
        return numeric
    parsed = pd.to_datetime(col, errors="coerce", utc=True, format="mixed")
    bad = parsed.isna()
    if bad.any():
        lines = (np.flatnonzero(bad.to_numpy()) + 2).tolist()
        raise IngestionError(f"unparseable timestamp on line(s) {lines[:20]}")
    return (parsed - pd.Timestamp(0, tz="UTC")).dt.total_seconds().to_numpy()


def load_csv(path, schema: CsvSchema | None = None, target_period: float = 1.0,
             max_gap: float = 300.0, with_report: bool = False):
    """Read a timestamped power CSV into a uniformly sampled PowerTrace.

    Values are forward-filled onto a grid of ``target_period`` seconds that
    starts at the first timestamp and ends one native period after the last.
    Where consecutive readings are more than ``max_gap`` seconds apart the
    held value lasts one native period and the rest of the gap is 0 W.
    Line numbers in errors are 1-based and count the header.
    """
    schema = schema or CsvSchema()
    if target_period <= 0:
        raise ValidationError("target_period must be > 0")
    try:
        frame = pd.read_csv(path, sep=schema.delimiter, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{path}: empty file") from None
    if frame.empty:
        raise IngestionError(f"{path}: no data rows")
    if schema.time_column not in frame.columns:
        raise IngestionError(f"{path}: missing time column {schema.time_column!r}")

    mapping = dict(schema.channels) or {c: c for c in frame.columns if c != schema.time_column}
    missing = [c for c in mapping if c not in frame.columns]
    if missing:
        raise IngestionError(f"{path}: missing channel columns {missing}")

    times = _parse_times(frame[schema.time_column])
    if np.any(np.diff(times) < 0):
        line = int(np.flatnonzero(np.diff(times) < 0)[0]) + 3
        raise IngestionError(f"{path}: timestamps decrease at line {line}")

    scale = _UNIT_SCALE[schema.unit.lower()]
    values = {}
    for src, name in mapping.items():
        col = _exact_floats(frame[src])
        bad = ~np.isfinite(col)
        if bad.any():
            raise IngestionError(
                f"{path}: column {src!r} unparseable/NaN on line(s) {(np.flatnonzero(bad) + 2).tolist()[:20]}")
        neg = col < 0
        if neg.any():
            raise IngestionError(
                f"{path}: column {src!r} negative power on line(s) {(np.flatnonzero(neg) + 2).tolist()[:20]}")
        values[name] = col * scale

    # duplicate timestamps: the last reading wins
    keep = np.concatenate((times[1:] != times[:-1], [True]))
    times = times[keep]
    values = {k: v[keep] for k, v in values.items()}

    steps = np.diff(times)
    native = float(np.median(steps)) if steps.size else target_period
    end = times[-1] + native
    n = max(1, int(np.floor((end - times[0]) / target_period + 1e-9)))
    grid = times[0] + target_period * np.arange(n)
    src_idx = np.searchsorted(times, grid + 1e-9, side="right") - 1

    gap_after = np.concatenate((steps, [native])) > max_gap
    stale = gap_after[src_idx] & (grid - times[src_idx] >= native - 1e-9)
    gap_count = int(gap_after.sum())
    if gap_count:
        log.warning("%s: %d gap(s) longer than %.0f s zero-filled (%d samples)",
                    path, gap_count, max_gap, int(stale.sum()))

    channels = {}
    for name, col in values.items():
        out = col[src_idx].copy()
        out[stale] = 0.0
        channels[name] = out
    trace = PowerTrace(float(target_period), float(times[0]), channels)
    if with_report:
        return trace, LoadReport(gap_count, int(stale.sum()))
    return trace


def save_csv(trace: PowerTrace, path, float_format: str | None = None):
    frame = pd.DataFrame({"timestamp": trace.times(), **trace.channels})
    frame.to_csv(path, index=False, float_format=float_format)


def aggregate(trace: PowerTrace, name: str = AGGREGATE, channels=None) -> PowerTrace:
    """Per-sample sum across channels."""
    if channels is None:
        # an existing aggregate channel is never summed into itself
        channels = [n for n in trace.names if n != AGGREGATE] or list(trace.names)
    names = list(channels)
    stack = np.vstack([trace.channel(n) for n in names])
    return PowerTrace(trace.sample_period, trace.start_time, {name: stack.sum(axis=0)})


def synthesize(appliances: ApplianceSet, schedule: Mapping[str, np.ndarray],
               noise_sigma: float = 0.0, period: float = 1.0, seed: int | None = None,
               start_time: float = 0.0) -> PowerTrace:
    """Ground-truth channels from state timelines plus a noisy aggregate.

    ``schedule[name]`` is the per-sample state index of that appliance.
    The noisy aggregate is clipped at 0 W, as a meter would report it.
    """
    lengths = set()
    channels = {}
    for app in appliances:
        if app.name not in schedule:
            raise ValidationError(f"no schedule for appliance {app.name!r}")
        idx = np.asarray(schedule[app.name])
        if not np.issubdtype(idx.dtype, np.integer):
            raise ValidationError(f"{app.name}: schedule must hold integer state indices")
        if idx.size and (idx.min() < 0 or idx.max() >= app.state_count):
            raise ValidationError(
                f"{app.name}: state index out of range 0..{app.state_count - 1}")
        channels[app.name] = np.asarray(app.state_powers, dtype=np.float64)[idx]
        lengths.add(idx.size)
    if len(lengths) != 1:
        raise ValidationError("all schedules must have the same length")
    total = np.sum(np.vstack(list(channels.values())), axis=0)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        total = np.maximum(total + rng.normal(0.0, noise_sigma, size=total.size), 0.0)
    channels[AGGREGATE] = total
    return PowerTrace(float(period), float(start_time), channels)


def activation_schedule(appliances: ApplianceSet, length: int, seed: int | None = None,
                        min_dwell: int = 10, mean_on: float = 20.0,
                        mean_off: float = 150.0) -> dict[str, np.ndarray]:
    """Per-appliance on/off timelines with dwell times of at least ``min_dwell`` samples.

    Each activation holds one non-off state drawn uniformly at random.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for app in appliances:
        states = np.zeros(length, dtype=np.int64)
        t = min_dwell + int(rng.geometric(1.0 / mean_off))
        while t < length:
            dur = min_dwell + int(rng.geometric(1.0 / mean_on))
            states[t:t + dur] = rng.integers(1, app.state_count)
            t += dur + min_dwell + int(rng.geometric(1.0 / mean_off))
        out[app.name] = states
    return out


def square_wave(length: int, on: int, off: int, level: int = 1, phase: int = 0) -> np.ndarray:
    """Periodic on/off state timeline: ``on`` samples at ``level`` then ``off`` at 0."""
    t = (np.arange(length) + phase) % (on + off)
    return np.where(t < on, level, 0).astype(np.int64)
