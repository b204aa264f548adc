"""Automatic power-state identification from power traces.

Pipeline: median filter -> edge detection with ramp coalescing -> greedy
rising/falling edge pairing -> histogram vote over pair magnitudes.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import median_filter

from .domain import ApplianceSet, DetectedStateSet, PowerTrace, ValidationError

log = logging.getLogger(__name__)

SUBMETERED = "submetered"
AGGREGATED = "aggregated"
DEFAULT_PAIR_GAP_SECONDS = 4 * 3600


@dataclass(frozen=True)
class DetectionConfig:
    median_window: int = 9
    edge_threshold: float = 25.0
    pair_magnitude_tolerance: float = 0.15
    histogram_bin: float = 10.0
    commonness_fraction: float = 0.15
    # None -> four hours worth of samples at the trace's period
    max_pair_gap: int | None = None
    # consecutive differences below this do not extend a ramp
    ramp_floor: float | None = None

    def __post_init__(self):
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ValidationError("median_window must be a positive odd integer")
        for name in ("edge_threshold", "pair_magnitude_tolerance", "histogram_bin"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if not 0 < self.commonness_fraction <= 1:
            raise ValidationError("commonness_fraction must be in (0, 1]")
        if self.max_pair_gap is not None and self.max_pair_gap < 1:
            raise ValidationError("max_pair_gap must be >= 1 sample")
        if self.ramp_floor is None:
            object.__setattr__(self, "ramp_floor", 0.2 * self.edge_threshold)
        if self.ramp_floor < 0:
            raise ValidationError("ramp_floor must be >= 0")

    def resolved(self, sample_period: float) -> DetectionConfig:
        """Copy with ``max_pair_gap`` filled in for the given sample period."""
        if self.max_pair_gap is not None:
            return self
        gap = max(1, int(round(DEFAULT_PAIR_GAP_SECONDS / sample_period)))
        return DetectionConfig(**{**asdict(self), "max_pair_gap": gap})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data) -> DetectionConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown detection settings: {sorted(unknown)}")
        return cls(**data)


class EdgeEvent(NamedTuple):
    index: int
    magnitude: float


class EdgePair(NamedTuple):
    rising: EdgeEvent
    falling: EdgeEvent

    @property
    def magnitude(self) -> float:
        return 0.5 * (self.rising.magnitude - self.falling.magnitude)


def denoise(channel, config: DetectionConfig) -> np.ndarray:
    """Sliding median of ``median_window`` samples; ends use replicated samples."""
    x = np.asarray(channel, dtype=np.float64)
    if x.size < config.median_window:
        raise ValidationError(
            f"trace of {x.size} samples is shorter than the median window {config.median_window}")
    return median_filter(x, size=config.median_window, mode="nearest")


def detect_edges(filtered, config: DetectionConfig) -> list[EdgeEvent]:
    """Threshold consecutive differences, merging monotone ramps into one edge.

    A ramp is a run of consecutive differences of one sign, each at least
    ``ramp_floor`` in size. The event sits at the first sample after the
    ramp's start and carries the total change across the ramp.
    """
    x = np.asarray(filtered, dtype=np.float64)
    if x.size < 2:
        return []
    d = np.diff(x)
    sign = np.where(d >= config.ramp_floor, 1, np.where(d <= -config.ramp_floor, -1, 0))
    if not sign.any():
        return []
    # run boundaries wherever the sign changes
    change = np.flatnonzero(np.diff(sign) != 0) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [sign.size]))
    csum = np.concatenate(([0.0], np.cumsum(d)))
    events = []
    for s, e in zip(starts, stops):
        if sign[s] == 0:
            continue
        total = csum[e] - csum[s]
        if abs(total) >= config.edge_threshold:
            events.append(EdgeEvent(int(s) + 1, float(total)))
    return events


def pair_edges(events, config: DetectionConfig) -> list[EdgePair]:
    """Greedy matching of each rising edge to the earliest compatible falling edge.

    Compatible means later in time, within ``max_pair_gap`` samples and with
    a magnitude within ``pair_magnitude_tolerance`` of the rise.
    """
    gap = config.max_pair_gap if config.max_pair_gap is not None else math.inf
    tol = config.pair_magnitude_tolerance
    falling = [e for e in events if e.magnitude < 0]
    used = [False] * len(falling)
    pairs = []
    for rise in sorted((e for e in events if e.magnitude > 0), key=lambda e: e.index):
        for i, fall in enumerate(falling):
            if used[i] or fall.index <= rise.index:
                continue
            if fall.index - rise.index > gap:
                break
            if abs(-fall.magnitude - rise.magnitude) <= tol * rise.magnitude:
                used[i] = True
                pairs.append(EdgePair(rise, fall))
                break
    return pairs


def vote_states(pairs, config: DetectionConfig) -> list[tuple[float, int]]:
    """Histogram vote over pair magnitudes.

    Bins are centred on multiples of ``histogram_bin``. Bins holding at
    least ``commonness_fraction`` of the largest bin count survive;
    adjacent surviving bins form one state at their count-weighted mean.
    """
    mags = np.array([p.magnitude for p in pairs], dtype=np.float64)
    if mags.size == 0:
        return []
    idx = np.rint(mags / config.histogram_bin).astype(np.int64)
    base = idx.min()
    counts = np.bincount(idx - base)
    keep = counts >= config.commonness_fraction * counts.max()

    states = []
    b = 0
    while b < counts.size:
        if not keep[b]:
            b += 1
            continue
        e = b
        while e + 1 < counts.size and keep[e + 1]:
            e += 1
        sel = (idx - base >= b) & (idx - base <= e)
        states.append((float(np.mean(mags[sel])), int(sel.sum())))
        b = e + 1
    return [(p, n) for p, n in states if p >= config.edge_threshold]


def detect_channel(channel, config: DetectionConfig) -> list[tuple[float, int]]:
    """Run the full pipeline on one channel; returns (level_w, count) pairs."""
    filtered = denoise(channel, config)
    events = detect_edges(filtered, config)
    pairs = pair_edges(events, config)
    states = vote_states(pairs, config)
    log.debug("edges=%d pairs=%d states=%s", len(events), len(pairs), states)
    return states


def detect(trace: PowerTrace, config: DetectionConfig | None = None,
           mode: str = SUBMETERED, channels=None) -> ApplianceSet | DetectedStateSet:
    """Detect power states from a trace.

    ``submetered``: every channel is one appliance; returns an ApplianceSet
    with 0 W prepended to each appliance's levels. Channels without any
    detected level are left out.
    ``aggregated``: the single aggregate channel (or ``channels[0]``) yields
    a flat DetectedStateSet without appliance attribution.

    An empty DetectedStateSet is returned when nothing is detected.
    """
    config = (config or DetectionConfig()).resolved(trace.sample_period)
    if mode == SUBMETERED:
        names = list(channels) if channels is not None else list(trace.names)
    elif mode == AGGREGATED:
        if channels is not None:
            names = [list(channels)[0]]
        elif len(trace.names) == 1:
            names = list(trace.names)
        elif "aggregate" in trace.channels:
            names = ["aggregate"]
        else:
            raise ValidationError("aggregated mode needs a single channel or an 'aggregate' channel")
    else:
        raise ValidationError(f"unknown detection mode {mode!r}")

    found = {name: tuple(detect_channel(trace.channel(name), config)) for name in names}
    result = DetectedStateSet(found, edge_threshold=config.edge_threshold)
    if result.is_empty():
        warnings.warn("no power states detected", stacklevel=2)
        return result
    if mode == AGGREGATED:
        return result
    for name, levels in found.items():
        if not levels:
            warnings.warn(f"channel {name!r}: no power states detected; skipped", stacklevel=2)
    return result.to_appliance_set()
