"""Overlapping-coefficient complexity of appliance sets and power traces.

Every aggregated power value is modelled as a normal density N(P, sigma)
truncated to the domain [0, P_M]. The complexity of a value is the sum of
its overlaps with all M aggregated values, the self term included; the
complexity of a trace is the mean of that sum over its samples.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks
from scipy.special import erfc, ndtr

from .domain import (AggregatedValueSet, ComplexitySpectrum, PowerTrace,
                     ValidationError)

log = logging.getLogger(__name__)

DEFAULT_SIGMA = 5.0
# Both means at least this many sigmas inside [0, P_M] -> untruncated erfc form.
INTERIOR_SIGMAS = 6.0
# Pairs farther apart than this are skipped; 2*Phi(-7) ~ 2.6e-12 per skipped pair.
PRUNE_SIGMAS = 14.0
_MAX_CELLS = 1 << 21

ANALYTIC = "analytic"
NUMERIC = "numeric"


@dataclass(frozen=True)
class OverlapKernel:
    """Gaussian overlap settings: width, truncation domain and evaluation mode.

    ``mode="analytic"`` evaluates overlaps in closed form (erfc for interior
    pairs, normal-CDF differences near the domain bounds). ``mode="numeric"``
    integrates min(f1, f2) with the trapezoid rule at ``grid_step`` and is
    meant as a slow reference.
    """

    sigma: float = DEFAULT_SIGMA
    domain_max: float = 1.0
    grid_step: float | None = None
    mode: str = ANALYTIC
    prune_sigmas: float = PRUNE_SIGMAS

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"sigma must be > 0, got {self.sigma}")
        if not (self.domain_max > 0 and math.isfinite(self.domain_max)):
            raise ValidationError(f"domain_max must be > 0, got {self.domain_max}")
        if self.mode not in (ANALYTIC, NUMERIC):
            raise ValidationError(f"unknown overlap mode {self.mode!r}")
        if self.grid_step is None:
            object.__setattr__(self, "grid_step", self.sigma / 1000)
        if self.grid_step <= 0:
            raise ValidationError("grid_step must be > 0")
        if self.mode == NUMERIC and self.grid_step > self.sigma / 10:
            raise ValidationError("numeric mode needs grid_step <= sigma/10")

    @classmethod
    def for_values(cls, values: AggregatedValueSet, sigma: float = DEFAULT_SIGMA,
                   **kwargs) -> OverlapKernel:
        """Kernel truncated to [0, P_M] of ``values``."""
        p_max = values.p_max
        if p_max <= 0:
            raise ValidationError("value set has no positive power level")
        return cls(sigma=sigma, domain_max=p_max, **kwargs)

    @property
    def prune_radius(self) -> float:
        return self.prune_sigmas * self.sigma

    def is_interior(self, mu) -> np.ndarray | bool:
        margin = INTERIOR_SIGMAS * self.sigma
        return (mu >= margin) & (mu <= self.domain_max - margin)


def ovl_erfc(mu1, mu2, sigma):
    """Overlap of two untruncated equal-variance normals."""
    return erfc(np.abs(np.asarray(mu1) - np.asarray(mu2)) / (2.0 * math.sqrt(2.0) * sigma))


def ovl_truncated(mu1, mu2, sigma, domain_max):
    """Overlap integral of min(f1, f2) over [0, domain_max], closed form.

    With equal widths the lower envelope is the right-hand density left of
    the midpoint and the left-hand density right of it.
    """
    a = np.asarray(mu1, dtype=np.float64)
    b = np.asarray(mu2, dtype=np.float64)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    cut = np.clip(0.5 * (lo + hi), 0.0, domain_max)
    left = ndtr((cut - hi) / sigma) - ndtr(-hi / sigma)
    right = ndtr((lo - cut) / sigma) - ndtr((lo - domain_max) / sigma)
    return np.clip(left + right, 0.0, 1.0)


def ovl_trapezoid(mu1: float, mu2: float, sigma: float, domain_max: float,
                  step: float | None = None) -> float:
    """Trapezoid-rule reference for the truncated overlap integral.

    The grid covers [0, domain_max] intersected with 12 sigma around the
    two means; the density mass outside that window is below 1e-30.
    """
    step = sigma / 1000 if step is None else step
    a = max(0.0, min(mu1, mu2) - 12 * sigma)
    b = min(domain_max, max(mu1, mu2) + 12 * sigma)
    if b <= a:
        return 0.0
    n = int(math.ceil((b - a) / step)) + 1
    p = np.linspace(a, b, n)
    norm = 1.0 / (sigma * math.sqrt(2 * math.pi))
    f1 = norm * np.exp(-0.5 * ((p - mu1) / sigma) ** 2)
    f2 = norm * np.exp(-0.5 * ((p - mu2) / sigma) ** 2)
    return float(np.trapezoid(np.minimum(f1, f2), p))


def _pair_overlaps(centers, levels, kernel: OverlapKernel) -> np.ndarray:
    """Overlap for broadcast arrays of centers and levels (analytic mode)."""
    sigma, pmax = kernel.sigma, kernel.domain_max
    both_inside = kernel.is_interior(centers) & kernel.is_interior(levels)
    fast = ovl_erfc(centers, levels, sigma)
    if np.all(both_inside):
        return fast
    return np.where(both_inside, fast, ovl_truncated(centers, levels, sigma, pmax))


def ovl(mu1: float, mu2: float, kernel: OverlapKernel) -> float:
    """Overlapping coefficient of N(mu1, sigma) and N(mu2, sigma) on [0, P_M]."""
    # canonical argument order keeps ovl(a, b) == ovl(b, a) bit for bit
    lo, hi = sorted((float(mu1), float(mu2)))
    if kernel.mode == NUMERIC:
        return ovl_trapezoid(lo, hi, kernel.sigma, kernel.domain_max, kernel.grid_step)
    return float(_pair_overlaps(np.float64(lo), np.float64(hi), kernel))


def _overlap_sums(centers: np.ndarray, levels: np.ndarray, weights: np.ndarray,
                  kernel: OverlapKernel) -> np.ndarray:
    """sum_j weights[j] * ovl(center, levels[j]) for every center.

    ``levels`` must be sorted ascending. Only levels within the prune radius
    of a center contribute; each center's terms are added in ascending j.
    """
    centers = np.asarray(centers, dtype=np.float64)
    out = np.zeros(centers.size)
    if centers.size == 0:
        return out
    if kernel.mode == NUMERIC:
        for i, c in enumerate(centers):
            terms = [ovl(c, lv, kernel) for lv in levels]
            out[i] = float(np.dot(weights, terms))
        return out

    radius = kernel.prune_radius
    order = np.argsort(centers, kind="stable")
    sorted_c = centers[order]
    lo_idx = np.searchsorted(levels, sorted_c - radius, side="left")
    hi_idx = np.searchsorted(levels, sorted_c + radius, side="right")
    wts = weights.astype(np.float64)

    def fill(start, stop):
        j0, j1 = lo_idx[start], hi_idx[stop - 1]
        if j1 <= j0:
            return
        if (j1 - j0) * (stop - start) > _MAX_CELLS and stop - start > 1:
            mid = (start + stop) // 2
            fill(start, mid)
            fill(mid, stop)
            return
        c = sorted_c[start:stop, None]
        lv = levels[None, j0:j1]
        terms = _pair_overlaps(c, lv, kernel)
        terms = np.where(np.abs(c - lv) <= radius, terms, 0.0)
        out[order[start:stop]] = terms @ wts[j0:j1]

    block = max(1, min(centers.size, 4096))
    for start in range(0, centers.size, block):
        fill(start, min(start + block, centers.size))
    return out


def _levels(values: AggregatedValueSet) -> tuple[np.ndarray, np.ndarray]:
    levels, mult = values.unique()
    return levels.astype(np.float64), mult


def _check_kernel(values: AggregatedValueSet, kernel: OverlapKernel):
    if not math.isclose(kernel.domain_max, values.p_max, rel_tol=0, abs_tol=1e-9):
        raise ValidationError(
            f"kernel domain_max {kernel.domain_max} W != value set P_M {values.p_max} W")


def complexity_of_value(power: float, values: AggregatedValueSet,
                        kernel: OverlapKernel) -> float:
    """C_k = sum over all M aggregated values of ovl(power, P_j)."""
    _check_kernel(values, kernel)
    levels, mult = _levels(values)
    return float(_overlap_sums(np.array([power], dtype=np.float64), levels, mult, kernel)[0])


def spectrum(values: AggregatedValueSet, kernel: OverlapKernel) -> ComplexitySpectrum:
    """Complexity of every aggregated value (one entry per combination)."""
    _check_kernel(values, kernel)
    levels, mult = _levels(values)
    per_level = _overlap_sums(levels, levels, mult, kernel)
    return ComplexitySpectrum(
        powers=values.powers,
        complexity=per_level[values.group],
        multiplicity=mult[values.group],
        sigma=kernel.sigma,
    )


@dataclass(frozen=True, eq=False)
class TimeSeriesComplexity:
    per_sample: np.ndarray
    c_total: float
    sigma: float

    @property
    def max(self) -> float:
        return float(np.max(self.per_sample))

    @property
    def summary(self) -> dict:
        return {"c_total": self.c_total, "max": self.max, "T": int(self.per_sample.size),
                "sigma": self.sigma}


def _samples(trace) -> np.ndarray:
    if isinstance(trace, PowerTrace):
        return trace.channel()
    arr = np.asarray(trace, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError("expected a single-channel series")
    return arr


def timeseries_complexity(trace, values: AggregatedValueSet,
                          kernel: OverlapKernel) -> TimeSeriesComplexity:
    """Per-sample complexity C_t and its plain mean over the trace."""
    _check_kernel(values, kernel)
    samples = _samples(trace)
    if samples.size == 0:
        raise ValidationError("trace has no samples")
    levels, mult = _levels(values)
    distinct, inverse = np.unique(samples, return_inverse=True)
    per_sample = _overlap_sums(distinct, levels, mult, kernel)[inverse.ravel()]
    per_sample.setflags(write=False)
    return TimeSeriesComplexity(per_sample, float(np.mean(per_sample)), kernel.sigma)


def histogram_states(trace, bin_width: float = 10.0, floor_threshold: float = 25.0,
                     min_fraction: float = 0.01) -> AggregatedValueSet:
    """Aggregated states inferred from the modes of a trace's power histogram.

    Bins are centred on multiples of ``bin_width``. Samples below
    ``floor_threshold`` are ignored; a mode must be a local maximum holding
    at least ``min_fraction`` of the tallest bin. Modes closer than one bin
    width are merged. The result always contains 0 W and is flagged as
    metadata-free.
    """
    if bin_width <= 0:
        raise ValidationError("bin_width must be > 0")
    x = _samples(trace)
    x = x[x >= floor_threshold]
    if x.size == 0:
        warnings.warn(f"no samples above the {floor_threshold} W floor; no states inferred",
                      stacklevel=2)
        return AggregatedValueSet.from_levels([], name="histogram")

    idx = np.rint(x / bin_width).astype(np.int64)
    base = idx.min()
    counts = np.bincount(idx - base)
    padded = np.concatenate(([0], counts, [0]))
    peaks, _ = find_peaks(padded, height=max(1.0, min_fraction * counts.max()))
    peaks -= 1

    modes = []
    for pk in peaks:
        sel = np.abs(idx - base - pk) <= 1
        modes.append((float(np.mean(x[sel])), int(sel.sum())))
    modes.sort()
    merged: list[list[float]] = []
    for level, n in modes:
        if merged and level - merged[-1][0] < bin_width:
            prev_level, prev_n = merged[-1]
            merged[-1] = [(prev_level * prev_n + level * n) / (prev_n + n), prev_n + n]
        else:
            merged.append([level, n])
    if not merged:
        warnings.warn("no histogram mode passed the count threshold", stacklevel=2)
    log.debug("histogram modes: %s", merged)
    return AggregatedValueSet.from_levels([m[0] for m in merged], name="histogram")
