"""Shared domain types for appliance models, aggregated value sets and traces.

Power levels are held internally as integer centiwatts (0.01 W) so that
sums of state powers compare exactly and deduplication is deterministic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping, Sequence

import numpy as np

CENTIWATTS_PER_WATT = 100


class ValidationError(ValueError):
    """Raised when an input violates a domain invariant."""


def to_centiwatts(power) -> int:
    """Convert a watt value with at most two decimals to integer centiwatts."""
    if isinstance(power, bool):
        raise ValidationError(f"power must be a number, got {power!r}")
    try:
        dec = Decimal(str(power))
    except (InvalidOperation, ValueError):
        raise ValidationError(f"power must be a number, got {power!r}") from None
    if not dec.is_finite():
        raise ValidationError(f"power must be finite, got {power!r}")
    scaled = dec * CENTIWATTS_PER_WATT
    if scaled != scaled.to_integral_value():
        raise ValidationError(
            f"power {power!r} has more than 2 decimal places")
    return int(scaled)


def quantize_watts(power: float) -> float:
    """Round a measured power to the 0.01 W grid used by the domain types."""
    return round(float(power) * CENTIWATTS_PER_WATT) / CENTIWATTS_PER_WATT


@dataclass(frozen=True)
class ApplianceModel:
    """An appliance described by its steady-state power levels.

    State 0 is the off state and must be exactly 0 W.
    """

    name: str
    state_centiwatts: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError("appliance name must be a non-empty string")
        states = tuple(int(s) for s in self.state_centiwatts)
        object.__setattr__(self, "state_centiwatts", states)
        if len(states) < 2:
            raise ValidationError(
                f"appliance {self.name!r} needs at least 2 states (off + on)")
        if states[0] != 0:
            raise ValidationError(
                f"appliance {self.name!r}: missing off state (first state must be 0 W)")
        if any(s < 0 for s in states):
            raise ValidationError(f"appliance {self.name!r}: negative power level")
        # keeps the all-off and all-on aggregated values unique
        if any(s == 0 for s in states[1:]):
            raise ValidationError(f"appliance {self.name!r}: on-states must be > 0 W")
        if len(set(states)) != len(states):
            raise ValidationError(f"appliance {self.name!r}: duplicate state levels")

    @classmethod
    def from_watts(cls, name: str, state_powers: Iterable) -> ApplianceModel:
        return cls(name, tuple(to_centiwatts(p) for p in state_powers))

    @property
    def state_powers(self) -> tuple[float, ...]:
        return tuple(s / CENTIWATTS_PER_WATT for s in self.state_centiwatts)

    @property
    def state_count(self) -> int:
        return len(self.state_centiwatts)

    def to_dict(self) -> dict:
        return {"name": self.name, "states_w": [_json_power(s) for s in self.state_centiwatts]}


@dataclass(frozen=True)
class ApplianceSet:
    appliances: tuple[ApplianceModel, ...]

    def __post_init__(self):
        apps = tuple(self.appliances)
        object.__setattr__(self, "appliances", apps)
        if not apps:
            raise ValidationError("appliance set is empty")
        for app in apps:
            if not isinstance(app, ApplianceModel):
                raise ValidationError(f"not an ApplianceModel: {app!r}")
        names = [a.name for a in apps]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValidationError(f"duplicate appliance names: {', '.join(dupes)}")

    @classmethod
    def from_watts(cls, spec: Mapping[str, Sequence] | Sequence[Sequence]) -> ApplianceSet:
        """Build a set from ``{name: [0, p1, ...]}`` or an unnamed list of state lists."""
        if isinstance(spec, Mapping):
            items = spec.items()
        else:
            items = ((f"app{i + 1}", states) for i, states in enumerate(spec))
        return cls(tuple(ApplianceModel.from_watts(n, s) for n, s in items))

    def __len__(self) -> int:
        return len(self.appliances)

    def __iter__(self):
        return iter(self.appliances)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.appliances)

    def to_dict(self) -> dict:
        return {"appliances": [a.to_dict() for a in self.appliances]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data) -> ApplianceSet:
        if not isinstance(data, Mapping) or "appliances" not in data:
            raise ValidationError("expected an object with an 'appliances' list")
        apps = data["appliances"]
        if not isinstance(apps, list):
            raise ValidationError("'appliances' must be a list")
        models = []
        for i, entry in enumerate(apps):
            if not isinstance(entry, Mapping):
                raise ValidationError(f"appliance #{i} is not an object")
            if "name" not in entry or "states_w" not in entry:
                raise ValidationError(f"appliance #{i} needs 'name' and 'states_w'")
            states = entry["states_w"]
            if not isinstance(states, list):
                raise ValidationError(f"appliance #{i}: 'states_w' must be a list")
            models.append(ApplianceModel.from_watts(entry["name"], states))
        return cls(tuple(models))

    @classmethod
    def from_json(cls, text: str) -> ApplianceSet:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)


def validate_appliance_set(candidate) -> ApplianceSet:
    """Return ``candidate`` as a validated ApplianceSet or raise ValidationError.

    Accepts an ApplianceSet, the JSON-schema dict, or a JSON string.
    """
    if isinstance(candidate, ApplianceSet):
        # frozen + validated at construction; re-run checks on the models anyway
        return ApplianceSet(tuple(ApplianceModel(a.name, a.state_centiwatts)
                                  for a in candidate.appliances))
    if isinstance(candidate, str):
        return ApplianceSet.from_json(candidate)
    return ApplianceSet.from_dict(candidate)


def _json_power(centiwatts: int):
    if centiwatts % CENTIWATTS_PER_WATT == 0:
        return centiwatts // CENTIWATTS_PER_WATT
    return centiwatts / CENTIWATTS_PER_WATT


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GaussianSpec:
    sigma: float
    domain_max: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"sigma must be > 0, got {self.sigma}")
        if not (self.domain_max > 0 and math.isfinite(self.domain_max)):
            raise ValidationError(f"domain_max must be > 0, got {self.domain_max}")


@dataclass(frozen=True, eq=False)
class AggregatedValueSet:
    """All M aggregated power values of an appliance set, sorted ascending.

    ``combinations[i]`` holds the per-appliance state indices that produce
    ``powers_cw[i]``; ``group[i]`` identifies entries sharing the same power.
    Sets inferred without appliance metadata carry ``metadata_free=True``.
    """

    powers_cw: np.ndarray
    combinations: np.ndarray
    appliance_names: tuple[str, ...]
    metadata_free: bool = False
    group: np.ndarray = field(init=False)

    def __post_init__(self):
        powers = np.asarray(self.powers_cw, dtype=np.int64)
        combos = np.asarray(self.combinations)
        if powers.ndim != 1 or powers.size == 0:
            raise ValidationError("aggregated value set must be a non-empty 1-D array")
        if combos.shape != (powers.size, len(self.appliance_names)):
            raise ValidationError("combinations shape does not match powers/appliances")
        if np.any(np.diff(powers) < 0):
            raise ValidationError("aggregated powers must be sorted ascending")
        group = np.concatenate(([0], np.cumsum(np.diff(powers) != 0)))
        object.__setattr__(self, "powers_cw", _readonly(powers))
        object.__setattr__(self, "combinations", _readonly(combos))
        object.__setattr__(self, "group", _readonly(group.astype(np.int64)))

    @property
    def m_total(self) -> int:
        return int(self.powers_cw.size)

    @property
    def powers(self) -> np.ndarray:
        return self.powers_cw / CENTIWATTS_PER_WATT

    @property
    def p_max(self) -> float:
        return float(self.powers_cw[-1]) / CENTIWATTS_PER_WATT

    def unique(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct powers in watts and their multiplicities."""
        values, counts = np.unique(self.powers_cw, return_counts=True)
        return values / CENTIWATTS_PER_WATT, counts

    def multiplicity(self) -> np.ndarray:
        """Per-entry multiplicity of that entry's power value."""
        counts = np.bincount(self.group)
        return counts[self.group]

    def entries(self) -> list[dict]:
        mult = self.multiplicity()
        return [
            {"power": float(p) / CENTIWATTS_PER_WATT,
             "combination": tuple(int(z) for z in combo),
             "group": int(g),
             "multiplicity": int(m)}
            for p, combo, g, m in zip(self.powers_cw, self.combinations, self.group, mult)
        ]

    def __eq__(self, other):
        if not isinstance(other, AggregatedValueSet):
            return NotImplemented
        return (self.appliance_names == other.appliance_names
                and self.metadata_free == other.metadata_free
                and np.array_equal(self.powers_cw, other.powers_cw)
                and np.array_equal(self.combinations, other.combinations))

    __hash__ = None

    @classmethod
    def from_levels(cls, levels_w: Iterable[float], name: str = "levels",
                    metadata_free: bool = True) -> AggregatedValueSet:
        """Value set whose entries are given power levels directly (0 W prepended).

        Used for traces without appliance metadata: each level is one
        aggregated state, attributed to a single pseudo-appliance.
        """
        cw = sorted({to_centiwatts(quantize_watts(p)) for p in levels_w} | {0})
        combos = np.arange(len(cw), dtype=np.int64).reshape(-1, 1)
        return cls(np.asarray(cw, dtype=np.int64), combos, (name,), metadata_free)


@dataclass(frozen=True, eq=False)
class ComplexitySpectrum:
    powers: np.ndarray
    complexity: np.ndarray
    multiplicity: np.ndarray
    sigma: float

    def __post_init__(self):
        for name in ("powers", "complexity", "multiplicity"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name))))
        if not (self.powers.shape == self.complexity.shape == self.multiplicity.shape):
            raise ValidationError("spectrum arrays must have equal length")
        if np.any(self.complexity < 0):
            raise ValidationError("complexity values must be >= 0")

    def __len__(self) -> int:
        return int(self.powers.size)

    @property
    def mean(self) -> float:
        return float(np.mean(self.complexity))

    @property
    def max(self) -> float:
        return float(np.max(self.complexity))

    @property
    def summary(self) -> dict:
        return {"mean": self.mean, "max": self.max, "M": len(self), "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class PowerTrace:
    """Uniformly sampled power readings, one or more named channels (watts)."""

    sample_period: float
    start_time: float
    channels: Mapping[str, np.ndarray]

    def __post_init__(self):
        if not (self.sample_period > 0 and math.isfinite(self.sample_period)):
            raise ValidationError(f"sample_period must be > 0, got {self.sample_period}")
        if not self.channels:
            raise ValidationError("trace has no channels")
        chans = {}
        length = None
        for name, values in self.channels.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.ndim != 1 or arr.size == 0:
                raise ValidationError(f"channel {name!r} must be a non-empty 1-D series")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"channel {name!r} contains non-finite samples")
            if length is None:
                length = arr.size
            elif arr.size != length:
                raise ValidationError(
                    f"channel {name!r} has {arr.size} samples, expected {length}")
            chans[str(name)] = _readonly(arr)
        object.__setattr__(self, "channels", chans)

    def __len__(self) -> int:
        return next(iter(self.channels.values())).size

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.channels)

    def channel(self, name: str | None = None) -> np.ndarray:
        """Return a channel by name; with no name the trace must be single-channel."""
        if name is None:
            if len(self.channels) != 1:
                raise ValidationError(
                    f"trace has {len(self.channels)} channels; name one of {list(self.channels)}")
            return next(iter(self.channels.values()))
        try:
            return self.channels[name]
        except KeyError:
            raise ValidationError(f"no channel {name!r} in trace") from None

    def times(self) -> np.ndarray:
        return self.start_time + self.sample_period * np.arange(len(self))

    def select(self, names: Iterable[str]) -> PowerTrace:
        return PowerTrace(self.sample_period, self.start_time,
                          {n: self.channel(n) for n in names})


@dataclass(frozen=True)
class DetectedStateSet:
    """Detected power levels (watts) with occurrence counts, keyed by channel."""

    levels: Mapping[str, tuple[tuple[float, int], ...]]
    edge_threshold: float = 0.0

    def __post_init__(self):
        clean = {}
        for chan, entries in self.levels.items():
            entries = tuple((float(p), int(c)) for p, c in entries)
            for p, c in entries:
                if p < self.edge_threshold:
                    raise ValidationError(
                        f"{chan}: level {p} W below edge threshold {self.edge_threshold} W")
                if c < 1:
                    raise ValidationError(f"{chan}: occurrence count must be >= 1")
            clean[chan] = entries
        object.__setattr__(self, "levels", clean)

    def is_empty(self) -> bool:
        return not any(self.levels.values())

    def powers(self, channel: str) -> list[float]:
        return [p for p, _ in self.levels[channel]]

    def to_appliance_set(self) -> ApplianceSet:
        """One multi-state appliance per non-empty channel, 0 W prepended."""
        models = [ApplianceModel.from_watts(chan, [0] + sorted(quantize_watts(p) for p, _ in entries))
                  for chan, entries in self.levels.items() if entries]
        return ApplianceSet(tuple(models))

    def as_on_off_set(self) -> ApplianceSet:
        """Every detected level as its own on/off appliance (no attribution)."""
        models = []
        for chan, entries in self.levels.items():
            for i, (p, _) in enumerate(sorted(entries)):
                models.append(ApplianceModel.from_watts(f"{chan}_{i + 1}", [0, quantize_watts(p)]))
        return ApplianceSet(tuple(models))

    def to_dict(self) -> dict:
        return {chan: [{"power_w": p, "count": c} for p, c in entries]
                for chan, entries in self.levels.items()}


@dataclass(frozen=True, eq=False)
class DisaggregationResult:
    """Per-appliance decided states and energies from one disaggregation run.

    Real energies are present only when ground truth was supplied.
    """

    appliance_names: tuple[str, ...]
    states: np.ndarray  # (T, N) decided state indices
    estimated_power: np.ndarray  # (T, N) watts
    sample_period: float
    estimated_kwh: tuple[float, ...]
    real_kwh: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "states", _readonly(np.asarray(self.states)))
        object.__setattr__(self, "estimated_power", _readonly(np.asarray(self.estimated_power)))
        if any(e < 0 for e in self.estimated_kwh):
            raise ValidationError("estimated energies must be >= 0")
        if self.real_kwh is not None and any(e < 0 for e in self.real_kwh):
            raise ValidationError("real energies must be >= 0")

    @property
    def total_estimated_kwh(self) -> float:
        return math.fsum(self.estimated_kwh)

    @property
    def total_real_kwh(self) -> float | None:
        return None if self.real_kwh is None else math.fsum(self.real_kwh)

    def to_dict(self) -> dict:
        out = {
            "appliances": list(self.appliance_names),
            "sample_period": self.sample_period,
            "estimated_kwh": list(self.estimated_kwh),
            "total_estimated_kwh": self.total_estimated_kwh,
            "states": self.states.T.tolist(),
        }
        if self.real_kwh is not None:
            out["real_kwh"] = list(self.real_kwh)
            out["total_real_kwh"] = self.total_real_kwh
        return out

    @classmethod
    def from_dict(cls, data: Mapping, appliances: ApplianceSet | None = None) -> DisaggregationResult:
        states = np.asarray(data["states"], dtype=np.int64).T
        names = tuple(data["appliances"])
        if appliances is not None:
            power = np.column_stack([
                np.asarray(app.state_powers)[states[:, i]]
                for i, app in enumerate(appliances)])
        else:
            power = np.zeros(states.shape)
        real = data.get("real_kwh")
        return cls(names, states, power, float(data["sample_period"]),
                   tuple(data["estimated_kwh"]), None if real is None else tuple(real))
