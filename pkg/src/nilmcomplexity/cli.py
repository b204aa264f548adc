"""Command-line interface: ``nilm-complexity <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import tomli

from . import complexity as cx
from .detection import AGGREGATED, SUBMETERED, DetectionConfig, detect
from .disaggregator import PFConfig, build_fhmm, disaggregate, score
from .domain import ApplianceSet, DisaggregationResult, ValidationError
from .enumeration import EnumerationBudget, EnumerationError, enumerate_values, value_table
from .ingestion import AGGREGATE, CsvSchema, IngestionError, load_csv
from .pipeline import PipelineConfig, run_pipeline
from .reporting import (Table, config_hash, spectrum_grid, spectrum_report, spectrum_table,
                        timeseries_table)

log = logging.getLogger("nilmcomplexity")


def _load_set(path) -> ApplianceSet:
    return ApplianceSet.from_json(Path(path).read_text())


def _load_trace(args):
    schema = CsvSchema.load(args.schema) if getattr(args, "schema", None) else None
    return load_csv(args.trace, schema, target_period=args.period, max_gap=args.max_gap)


def _write(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _budget(args) -> EnumerationBudget:
    return EnumerationBudget(args.max_combinations, args.force)


def cmd_enumerate(args):
    values = enumerate_values(_load_set(args.appliances), _budget(args))
    print(values.m_total)
    if args.out:
        table = Table(("power_w", "multiplicity"), tuple(value_table(values)))
        _write(table.to_csv(), args.out)


def cmd_set_complexity(args):
    values = enumerate_values(_load_set(args.appliances), _budget(args))
    kernel = cx.OverlapKernel.for_values(values, sigma=args.sigma)
    spec = cx.spectrum(values, kernel)
    if args.out:
        _write(spectrum_table(spec).to_csv(), args.out)
    summary = json.dumps(spec.summary, sort_keys=True)
    if args.summary:
        Path(args.summary).write_text(summary + "\n")
    print(summary)


def cmd_ts_complexity(args):
    trace = _load_trace(args)
    channel = args.channel or (AGGREGATE if AGGREGATE in trace.channels else None)
    samples = trace.channel(channel)
    provenance = {"sigma": args.sigma}
    if args.appliances:
        values = enumerate_values(_load_set(args.appliances), _budget(args))
    else:
        values = cx.histogram_states(samples, args.bin, args.floor)
        provenance["states"] = "histogram (no appliance metadata)"
        if values.m_total < 2:
            raise ValidationError("no histogram states above the floor; nothing to score")
    kernel = cx.OverlapKernel.for_values(values, sigma=args.sigma)
    tc = cx.timeseries_complexity(samples, values, kernel)
    if args.out:
        _write(timeseries_table(trace.times(), samples, tc.per_sample, provenance).to_csv(),
               args.out)
    print(json.dumps({**tc.summary, "metadata_free": values.metadata_free}, sort_keys=True))


def cmd_detect(args):
    trace = _load_trace(args)
    settings = {}
    if args.config:
        raw = Path(args.config).read_bytes()
        settings = tomli.loads(raw.decode()) if args.config.endswith(".toml") else json.loads(raw)
    config = DetectionConfig.from_mapping(settings).resolved(trace.sample_period)
    found = detect(trace, config, mode=args.mode)
    doc = found.to_dict() if isinstance(found, ApplianceSet) else {"states": found.to_dict()}
    doc["provenance"] = {"mode": args.mode, "detection": config.to_dict(),
                         "config_hash": config_hash(config.to_dict())}
    _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)


def cmd_disaggregate(args):
    trace = _load_trace(args)
    appliances = _load_set(args.appliances)
    config = PFConfig(particle_count=args.particles, sigma_obs=args.sigma_obs, seed=args.seed)
    result = disaggregate(trace, build_fhmm(appliances, config), config)
    doc = result.to_dict()
    doc["provenance"] = {"particles": config.particle_count, "sigma_obs": config.sigma_obs,
                         "seed": config.seed, "p_stay": config.p_stay}
    _write(json.dumps(doc, sort_keys=True) + "\n", args.out)


def cmd_score(args):
    result = DisaggregationResult.from_dict(json.loads(Path(args.result).read_text()))
    truth = load_csv(args.truth, target_period=result.sample_period, max_gap=args.max_gap)
    energy = score(result, truth)
    rows = tuple((r["appliance"], r["real_kwh"], r["estimated_kwh"]) for r in energy.rows())
    table = Table(("appliance", "real_kwh", "estimated_kwh"), rows)
    _write(table.render(args.format), args.out)


def cmd_report(args):
    spectra = {}
    for path in args.appliances:
        values = enumerate_values(_load_set(path), _budget(args))
        kernel = cx.OverlapKernel.for_values(values, sigma=args.sigma)
        spectra[Path(path).stem] = cx.spectrum(values, kernel)
    if args.kind == "spectrum":
        out = spectrum_report(spectra, {"sigma": args.sigma})
    else:
        out = spectrum_grid(spectra, provenance={"sigma": args.sigma})
    _write(out.render(args.format), args.out)


def cmd_pipeline(args):
    config = PipelineConfig(seed=args.seed, length=args.length, period=args.period,
                            noise_sigma=args.noise, sigma=args.sigma, particles=args.particles)
    for name, path in run_pipeline(args.out_dir, config).items():
        print(f"{name}: {path}")


def _add_trace_args(p):
    p.add_argument("--trace", required=True, help="CSV with a timestamp column")
    p.add_argument("--schema", help="TOML/JSON column mapping")
    p.add_argument("--period", type=float, default=1.0, help="target sample period [s]")
    p.add_argument("--max-gap", type=float, default=300.0, help="zero-fill gaps longer than this [s]")


def _add_budget_args(p):
    p.add_argument("--max-combinations", type=int, default=EnumerationBudget().max_combinations)
    p.add_argument("--force", action="store_true", help="ignore the combination cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nilm-complexity",
                                     description="Load-disaggregation complexity toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="count/list aggregated power values")
    p.add_argument("--appliances", required=True)
    p.add_argument("--out", help="CSV of (power_w, multiplicity)")
    _add_budget_args(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("set-complexity", help="appliance-set complexity spectrum")
    p.add_argument("--appliances", required=True)
    p.add_argument("--sigma", type=float, default=cx.DEFAULT_SIGMA)
    p.add_argument("--out")
    p.add_argument("--summary", help="write the JSON summary here too")
    _add_budget_args(p)
    p.set_defaults(func=cmd_set_complexity)

    p = sub.add_parser("ts-complexity", help="time-series complexity")
    _add_trace_args(p)
    p.add_argument("--channel")
    p.add_argument("--appliances", help="appliance set; omit to infer states from the histogram")
    p.add_argument("--sigma", type=float, default=cx.DEFAULT_SIGMA)
    p.add_argument("--bin", type=float, default=10.0)
    p.add_argument("--floor", type=float, default=25.0)
    p.add_argument("--out")
    _add_budget_args(p)
    p.set_defaults(func=cmd_ts_complexity)

    p = sub.add_parser("detect", help="detect appliance power states")
    _add_trace_args(p)
    p.add_argument("--mode", choices=[SUBMETERED, AGGREGATED], default=SUBMETERED)
    p.add_argument("--config", help="TOML/JSON detection settings")
    p.add_argument("--out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("disaggregate", help="particle-filter disaggregation")
    _add_trace_args(p)
    p.add_argument("--appliances", required=True)
    p.add_argument("--particles", type=int, default=1000)
    p.add_argument("--sigma-obs", type=float, default=cx.DEFAULT_SIGMA)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=cmd_disaggregate)

    p = sub.add_parser("score", help="real vs estimated energy table")
    p.add_argument("--result", required=True)
    p.add_argument("--truth", required=True, help="submetered CSV, one column per appliance")
    p.add_argument("--max-gap", type=float, default=300.0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="spectrum summary table or colormap grid")
    p.add_argument("--appliances", nargs="+", required=True)
    p.add_argument("--kind", choices=["spectrum", "grid"], default="spectrum")
    p.add_argument("--sigma", type=float, default=cx.DEFAULT_SIGMA)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")
    _add_budget_args(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="seeded end-to-end run on a synthetic house")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--length", type=int, default=2880)
    p.add_argument("--period", type=float, default=30.0)
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--sigma", type=float, default=cx.DEFAULT_SIGMA)
    p.add_argument("--particles", type=int, default=1000)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValidationError, EnumerationError, IngestionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
