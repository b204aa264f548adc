"""Plot-ready tables and grids: spectrum summaries, colormaps, energy tables.

Every artifact carries a provenance block (sigma, seeds, config hashes) and
renders byte-identically for identical inputs.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import ComplexitySpectrum, ValidationError

ABSENT = 0.0


def config_hash(obj) -> str:
    """Short stable hash of a JSON-serialisable config."""
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _plain(value):
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    provenance: Mapping = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.provenance):
            buf.write(f"# {key}={_fmt(self.provenance[key])}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        records = [{c: _plain(v) for c, v in zip(self.columns, row)} for row in self.rows]
        return json.dumps({"provenance": {k: _plain(v) for k, v in self.provenance.items()},
                           "rows": records}, indent=2, sort_keys=True) + "\n"

    def render(self, fmt: str = "csv") -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValidationError(f"unknown report format {fmt!r}")

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]


def spectrum_report(spectra: Mapping[str, ComplexitySpectrum],
                    provenance: Mapping | None = None) -> Table:
    """One row per labelled spectrum: (label, max C, mean C, M)."""
    if not spectra:
        raise ValidationError("spectrum report needs at least one spectrum")
    rows = tuple((label, s.max, s.mean, len(s)) for label, s in spectra.items())
    prov = dict(provenance or {})
    sigmas = sorted({s.sigma for s in spectra.values()})
    prov.setdefault("sigma", sigmas[0] if len(sigmas) == 1 else ",".join(map(_fmt, sigmas)))
    return Table(("label", "max", "mean", "M"), rows, prov)


def spectrum_table(spec: ComplexitySpectrum, provenance: Mapping | None = None) -> Table:
    """Distinct power values of one spectrum with complexity and multiplicity."""
    powers, first = np.unique(spec.powers, return_index=True)
    rows = tuple((float(p), float(spec.complexity[i]), int(spec.multiplicity[i]))
                 for p, i in zip(powers, first))
    prov = {"sigma": spec.sigma, **(provenance or {})}
    return Table(("power_w", "complexity", "multiplicity"), rows, prov)


@dataclass(frozen=True, eq=False)
class Grid:
    """Complexities normalised by their global maximum.

    Absent cells (impossible power values) hold ``sentinel``.
    """

    normalized: np.ndarray
    raw_max: float
    row_labels: tuple[str, ...]
    column_labels: tuple
    sentinel: float = ABSENT
    provenance: Mapping = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        prov = {**self.provenance, "raw_max": self.raw_max, "sentinel": self.sentinel}
        for key in sorted(prov):
            buf.write(f"# {key}={_fmt(prov[key])}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row", *[_fmt(c) for c in self.column_labels]])
        for label, row in zip(self.row_labels, self.normalized):
            writer.writerow([label, *[_fmt(v) for v in row]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "provenance": {k: _plain(v) for k, v in self.provenance.items()},
            "raw_max": self.raw_max, "sentinel": self.sentinel,
            "rows": list(self.row_labels),
            "columns": [_plain(c) for c in self.column_labels],
            "values": self.normalized.tolist(),
        }, indent=2, sort_keys=True) + "\n"

    def render(self, fmt: str = "csv") -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValidationError(f"unknown report format {fmt!r}")


def colormap_grid(values, row_labels: Sequence[str] | None = None,
                  column_labels: Sequence | None = None, sentinel: float = ABSENT,
                  provenance: Mapping | None = None) -> Grid:
    """Normalise complexities to [0, 1] by the largest present value.

    ``values`` is 1-D (one row) or 2-D; NaN marks absent cells.
    """
    arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
    present = ~np.isnan(arr)
    if not present.any():
        raise ValidationError("colormap needs at least one value")
    raw_max = float(np.max(arr[present]))
    if raw_max <= 0:
        raise ValidationError("colormap values must include a positive maximum")
    norm = np.where(present, arr / raw_max, sentinel)
    rows = tuple(row_labels) if row_labels is not None else tuple(str(i) for i in range(arr.shape[0]))
    cols = tuple(column_labels) if column_labels is not None else tuple(range(arr.shape[1]))
    if len(rows) != arr.shape[0] or len(cols) != arr.shape[1]:
        raise ValidationError("label counts do not match the grid shape")
    return Grid(norm, raw_max, rows, cols, sentinel, dict(provenance or {}))


def spectrum_grid(spectra: Mapping[str, ComplexitySpectrum], **kwargs) -> Grid:
    """Houses x union-of-power-values grid; powers a house cannot produce are absent."""
    if not spectra:
        raise ValidationError("spectrum grid needs at least one spectrum")
    columns = np.unique(np.concatenate([s.powers for s in spectra.values()]))
    grid = np.full((len(spectra), columns.size), np.nan)
    for r, s in enumerate(spectra.values()):
        grid[r, np.searchsorted(columns, s.powers)] = s.complexity
    return colormap_grid(grid, tuple(spectra), tuple(float(c) for c in columns), **kwargs)


def timeseries_table(times, power, per_sample, provenance: Mapping | None = None) -> Table:
    """(t, power_w, C_t, normalised C_t) rows for a per-sample colormap."""
    per_sample = np.asarray(per_sample, dtype=np.float64)
    peak = float(per_sample.max())
    norm = per_sample / peak if peak > 0 else np.zeros_like(per_sample)
    rows = tuple(zip(np.asarray(times, dtype=np.float64).tolist(),
                     np.asarray(power, dtype=np.float64).tolist(),
                     per_sample.tolist(), norm.tolist()))
    prov = {"raw_max": peak, **(provenance or {})}
    return Table(("t", "power_w", "C_t", "normalized"), rows, prov)


def energy_table(scores: Mapping, ac: Mapping, tc: Mapping,
                 provenance: Mapping | None = None) -> Table:
    """Real/estimated kWh per appliance and total, with AC and TC mean/max.

    ``scores`` maps label -> EnergyScore; ``ac`` label -> ComplexitySpectrum;
    ``tc`` label -> TimeSeriesComplexity. Labels must match across all three.
    """
    labels = list(scores)
    if not labels:
        raise ValidationError("energy table needs at least one result")
    for name, other in (("appliance-set complexity", ac), ("time-series complexity", tc)):
        if set(other) != set(labels):
            missing = sorted(set(labels) ^ set(other))
            raise ValidationError(f"{name} labels do not match results: {missing}")
    width = max(len(scores[label].names) for label in labels)
    columns = ["label"]
    for i in range(width):
        columns += [f"app{i + 1}_name", f"app{i + 1}_real_kwh", f"app{i + 1}_est_kwh"]
    columns += ["total_real_kwh", "total_est_kwh", "ac_mean", "ac_max", "tc_mean", "tc_max"]
    rows = []
    for label in labels:
        s = scores[label]
        row = [label]
        for i in range(width):
            if i < len(s.names):
                row += [s.names[i], s.real_kwh[i], s.estimated_kwh[i]]
            else:
                row += ["", math.nan, math.nan]
        row += [s.total_real_kwh, s.total_estimated_kwh,
                ac[label].mean, ac[label].max, tc[label].c_total, tc[label].max]
        rows.append(tuple(row))
    return Table(tuple(columns), tuple(rows), dict(provenance or {}))
