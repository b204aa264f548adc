"""Bootstrap particle filter over a factorial HMM of the appliance set.

A reference disaggregator used to check that the complexity scores track
how hard a trace is to break down; it is a baseline, not a tuned method.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .complexity import DEFAULT_SIGMA
from .domain import ApplianceSet, DisaggregationResult, PowerTrace, ValidationError
from .ingestion import AGGREGATE

log = logging.getLogger(__name__)

JOULES_PER_KWH = 3.6e6


@dataclass(frozen=True)
class PFConfig:
    particle_count: int = 1000
    # None -> the complexity kernel's default sigma
    sigma_obs: float | None = None
    p_stay: float = 0.95
    ess_fraction: float = 0.5
    decision_threshold: float = 0.5
    seed: int | None = 0

    def __post_init__(self):
        if self.particle_count < 1:
            raise ValidationError("particle_count must be >= 1")
        if self.sigma_obs is None:
            object.__setattr__(self, "sigma_obs", DEFAULT_SIGMA)
        if not self.sigma_obs > 0:
            raise ValidationError("sigma_obs must be > 0")
        for name in ("p_stay", "ess_fraction", "decision_threshold"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValidationError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True, eq=False)
class ApplianceHMM:
    name: str
    state_powers: np.ndarray
    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=np.float64)
        z = len(self.state_powers)
        if t.shape != (z, z):
            raise ValidationError(f"{self.name}: transition matrix must be {z}x{z}")
        if np.any(t < 0) or not np.allclose(t.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValidationError(f"{self.name}: transition rows must be stochastic")
        init = np.asarray(self.initial, dtype=np.float64)
        if init.shape != (z,) or np.any(init < 0) or not math.isclose(init.sum(), 1.0, abs_tol=1e-9):
            raise ValidationError(f"{self.name}: bad initial distribution")
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "state_powers", np.asarray(self.state_powers, dtype=np.float64))


def build_fhmm(appliances: ApplianceSet, config: PFConfig | None = None) -> list[ApplianceHMM]:
    """One chain per appliance: p_stay on the diagonal, the rest spread evenly."""
    config = config or PFConfig()
    if config.p_stay == 1.0:
        warnings.warn("p_stay = 1: transition matrices are identities, states never change",
                      stacklevel=2)
    hmms = []
    for app in appliances:
        z = app.state_count
        t = np.full((z, z), (1.0 - config.p_stay) / (z - 1))
        np.fill_diagonal(t, config.p_stay)
        hmms.append(ApplianceHMM(app.name, np.asarray(app.state_powers), t, np.full(z, 1.0 / z)))
    return hmms


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by systematic resampling (one uniform offset)."""
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right")


def _sample_states(cdfs, states, u):
    # cdfs: (Z, Z) cumulative rows; pick first column whose cdf exceeds u
    rows = cdfs[states]
    return np.minimum((u[:, None] >= rows).sum(axis=1), rows.shape[1] - 1)


class ParticleFilter:
    """Bootstrap filter; one instance runs one trace (single writer)."""

    def __init__(self, hmms, config: PFConfig):
        if not hmms:
            raise ValidationError("at least one appliance model is required")
        self.hmms = list(hmms)
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self._cdfs = [np.cumsum(h.transition, axis=1) for h in self.hmms]
        self._powers = [h.state_powers for h in self.hmms]
        n = config.particle_count
        self.states = np.column_stack([
            self.rng.choice(len(h.initial), size=n, p=h.initial) for h in self.hmms])
        self.weights = np.full(n, 1.0 / n)
        self.degenerate_steps = 0

    def predict(self):
        n = self.config.particle_count
        for i, cdf in enumerate(self._cdfs):
            u = self.rng.random(n)
            self.states[:, i] = _sample_states(cdf, self.states[:, i], u)

    def update(self, observation: float):
        total = np.zeros(self.config.particle_count)
        for i, p in enumerate(self._powers):
            total += p[self.states[:, i]]
        loglik = -0.5 * ((observation - total) / self.config.sigma_obs) ** 2
        logw = np.log(self.weights, where=self.weights > 0,
                      out=np.full_like(self.weights, -np.inf)) + loglik
        peak = logw.max()
        if not np.isfinite(peak):
            self.degenerate_steps += 1
            log.warning("all particle weights vanished; reinitialising uniformly")
            self.weights = np.full_like(self.weights, 1.0 / self.weights.size)
            return
        w = np.exp(logw - peak)
        self.weights = w / w.sum()

    def decide(self) -> np.ndarray:
        """Per appliance: a state whose marginal exceeds the threshold, else the argmax."""
        decided = np.empty(len(self.hmms), dtype=np.int64)
        for i, h in enumerate(self.hmms):
            marginal = np.bincount(self.states[:, i], weights=self.weights,
                                   minlength=len(h.state_powers))
            above = np.flatnonzero(marginal > self.config.decision_threshold)
            decided[i] = above[np.argmax(marginal[above])] if above.size else np.argmax(marginal)
        return decided

    def maybe_resample(self):
        ess = 1.0 / np.sum(self.weights ** 2)
        if ess < self.config.ess_fraction * self.weights.size:
            idx = systematic_resample(self.weights, self.rng)
            self.states = self.states[idx]
            self.weights = np.full_like(self.weights, 1.0 / self.weights.size)

    def step(self, observation: float, first: bool = False) -> np.ndarray:
        if not first:
            self.predict()
        self.update(observation)
        decided = self.decide()
        self.maybe_resample()
        return decided


def _energy_kwh(power: np.ndarray, period: float) -> float:
    return math.fsum(power) * period / JOULES_PER_KWH


def disaggregate(trace, hmms, config: PFConfig | None = None,
                 sample_period: float | None = None,
                 truth: PowerTrace | None = None) -> DisaggregationResult:
    """Run the particle filter over an aggregate series.

    ``trace`` is a PowerTrace (its ``aggregate`` channel, or its only
    channel) or a plain array together with ``sample_period``. When
    ``truth`` holds one channel per appliance the real energies are filled in.
    """
    config = config or PFConfig()
    if isinstance(trace, PowerTrace):
        obs = trace.channel(AGGREGATE) if AGGREGATE in trace.channels else trace.channel()
        period = trace.sample_period
    else:
        obs = np.asarray(trace, dtype=np.float64)
        if sample_period is None:
            raise ValidationError("sample_period is required for array input")
        period = float(sample_period)
    if obs.size == 0:
        raise ValidationError("cannot disaggregate an empty trace")

    pf = ParticleFilter(hmms, config)
    states = np.empty((obs.size, len(pf.hmms)), dtype=np.int64)
    for t, y in enumerate(obs):
        states[t] = pf.step(float(y), first=(t == 0))
    if pf.degenerate_steps:
        warnings.warn(f"particle weights degenerated at {pf.degenerate_steps} step(s)",
                      stacklevel=2)

    power = np.column_stack([h.state_powers[states[:, i]] for i, h in enumerate(pf.hmms)])
    names = tuple(h.name for h in pf.hmms)
    est = tuple(_energy_kwh(power[:, i], period) for i in range(len(names)))
    real = None
    if truth is not None:
        real = tuple(_energy_kwh(truth.channel(n), truth.sample_period) for n in names)
    return DisaggregationResult(names, states, power, period, est, real)


@dataclass(frozen=True)
class EnergyScore:
    names: tuple[str, ...]
    real_kwh: tuple[float, ...]
    estimated_kwh: tuple[float, ...]

    @property
    def total_real_kwh(self) -> float:
        return math.fsum(self.real_kwh)

    @property
    def total_estimated_kwh(self) -> float:
        return math.fsum(self.estimated_kwh)

    def abs_errors(self) -> np.ndarray:
        return np.abs(np.subtract(self.estimated_kwh, self.real_kwh))

    def rows(self) -> list[dict]:
        out = [{"appliance": n, "real_kwh": r, "estimated_kwh": e}
               for n, r, e in zip(self.names, self.real_kwh, self.estimated_kwh)]
        out.append({"appliance": "total", "real_kwh": self.total_real_kwh,
                    "estimated_kwh": self.total_estimated_kwh})
        return out


def score(result: DisaggregationResult, truth: PowerTrace | None = None) -> EnergyScore:
    """Real vs estimated energy per appliance (kWh)."""
    if truth is not None:
        missing = [n for n in result.appliance_names if n not in truth.channels]
        if missing:
            raise ValidationError(f"ground truth missing channels {missing}")
        real = tuple(_energy_kwh(truth.channel(n), truth.sample_period)
                     for n in result.appliance_names)
    elif result.real_kwh is not None:
        real = result.real_kwh
    else:
        raise ValidationError("no ground truth available for scoring")
    return EnergyScore(result.appliance_names, real, result.estimated_kwh)
