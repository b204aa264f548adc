"""Enumeration of all aggregated power values of an appliance set."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .domain import AggregatedValueSet, ApplianceSet, ValidationError, validate_appliance_set

DEFAULT_MAX_COMBINATIONS = 2 ** 24
# index arithmetic below runs in int64
_INT64_MAX = np.iinfo(np.int64).max
_CHUNK = 1 << 20


class EnumerationError(ValueError):
    pass


@dataclass(frozen=True)
class EnumerationBudget:
    max_combinations: int = DEFAULT_MAX_COMBINATIONS
    force: bool = False

    def __post_init__(self):
        if int(self.max_combinations) < 1:
            raise ValidationError("max_combinations must be >= 1")


def count_combinations(appliances: ApplianceSet) -> int:
    """Number of state combinations M = prod over Z of Z**N_Z."""
    by_states = Counter(app.state_count for app in appliances)
    m = 1
    for z, n_z in sorted(by_states.items()):
        m *= z ** n_z
    if m > _INT64_MAX:
        raise EnumerationError(
            f"combination count {m} exceeds the representable range (2**63 - 1)")
    return m


def enumerate_values(appliances: ApplianceSet,
                     budget: EnumerationBudget | None = None) -> AggregatedValueSet:
    """All M aggregated values, sorted ascending with their state combinations.

    Combination ``i`` is decoded as a mixed-radix number with the last
    appliance as the fastest-changing digit; the stable sort keeps that
    order within groups of equal power.
    """
    appliances = validate_appliance_set(appliances)
    budget = budget or EnumerationBudget()
    m = count_combinations(appliances)
    if m > budget.max_combinations and not budget.force:
        raise EnumerationError(
            f"M = {m} combinations exceeds the cap of {budget.max_combinations}; "
            "raise the cap or force enumeration")

    radices = np.array([a.state_count for a in appliances], dtype=np.int64)
    states = [np.asarray(a.state_centiwatts, dtype=np.int64) for a in appliances]
    if sum(int(s.max()) for s in states) > _INT64_MAX:
        raise EnumerationError("aggregated power overflows int64 centiwatts")

    # place value of each digit, last appliance fastest
    strides = np.ones(len(radices), dtype=np.int64)
    for i in range(len(radices) - 2, -1, -1):
        strides[i] = strides[i + 1] * radices[i + 1]

    combo_dtype = np.min_scalar_type(int(radices.max()) - 1)
    powers = np.empty(m, dtype=np.int64)
    combos = np.empty((m, len(radices)), dtype=combo_dtype)
    for start in range(0, m, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, m), dtype=np.int64)
        digits = (idx[:, None] // strides[None, :]) % radices[None, :]
        combos[start:start + idx.size] = digits
        total = np.zeros(idx.size, dtype=np.int64)
        for col, levels in enumerate(states):
            total += levels[digits[:, col]]
        powers[start:start + idx.size] = total

    order = np.argsort(powers, kind="stable")
    return AggregatedValueSet(powers[order], combos[order], appliances.names)


def enumerate_recursive(appliances: ApplianceSet) -> list[tuple[int, tuple[int, ...]]]:
    """Plain recursive enumeration of (centiwatts, combination); a test oracle."""
    apps = list(appliances)
    out: list[tuple[int, tuple[int, ...]]] = []

    def walk(i, acc, combo):
        if i == len(apps):
            out.append((acc, tuple(combo)))
            return
        for z, p in enumerate(apps[i].state_centiwatts):
            combo.append(z)
            walk(i + 1, acc + p, combo)
            combo.pop()

    walk(0, 0, [])
    return out


def value_table(values: AggregatedValueSet) -> list[tuple[float, int]]:
    """Distinct (power_w, multiplicity) rows in ascending power order."""
    powers, counts = values.unique()
    return [(float(p), int(c)) for p, c in zip(powers, counts)]
