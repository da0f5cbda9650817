"""Command line entry point: ``selfreg run|grid|diff|entropy-scan|diversity|correlate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .engine import SelectionFunction
from .errors import SelfRegError
from .ingest import DataSource, Scenario, entropy_window_search, long_price_series, read_series_csv, write_series_csv
from .pipeline import (
    ExperimentGrid,
    ScenarioConfig,
    correlate,
    diff_selections,
    read_selections_csv,
    read_summary_csv,
    run_grid,
    run_pipeline,
    write_run,
)
from .plangen import STUDY_SCHEMES, GenerationScheme, diversity_distribution

log = logging.getLogger("selfreg")

# flag dest -> config key
_CONFIG_FLAGS = {
    "scenario": "scenario",
    "scheme": "scheme",
    "selection": "selection",
    "agents": "agents",
    "arity": "arity",
    "plans": "plans",
    "horizon": "horizon",
    "epsilon": "epsilon",
    "seed": "seed",
    "source": "source",
    "literal_appendix_c": "literal_appendix_c",
}


def _add_config_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    nargs = "+" if multi else None
    p.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    p.add_argument("--scenario", nargs=nargs, help="ramp-down, generation-failure, max-entropy, min-entropy")
    p.add_argument("--scheme", nargs=nargs, help="shuffle, shift:<d>, swap:<m>")
    p.add_argument("--selection", nargs=nargs, help="min-rmse-ub1, min-rmse-ub2, min-cost")
    p.add_argument("--source", nargs=nargs, help="synthetic, synthetic-daily, csv-aggregate:<path>, csv-agents:<path>, csv-daily:<path>")
    p.add_argument("--agents", type=int)
    p.add_argument("--arity", type=int)
    p.add_argument("--plans", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--literal-appendix-c",
        action="store_true",
        default=None,
        help="disaggregate with the share formula as transcribed (biased above the uniform share)",
    )
    p.add_argument("--workers", type=int, default=1, help="threads for parents within a tree level")
    p.add_argument("--out", type=Path, help="output directory")


def _load_file(path: Path | None) -> dict:
    if path is None:
        return {}
    with path.open() as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _merged(args, file_cfg: dict, skip=()) -> dict:
    merged = {k: v for k, v in file_cfg.items() if k not in skip}
    for dest, key in _CONFIG_FLAGS.items():
        if key in skip:
            continue
        value = getattr(args, dest, None)
        if value is not None:
            merged[key] = value
    return merged


def cmd_run(args) -> int:
    cfg = ScenarioConfig.from_dict(_merged(args, _load_file(args.config)))
    record = run_pipeline(cfg, workers=args.workers)
    if args.out:
        write_run(record, args.out)
        print(f"wrote {args.out}")
    summary = {
        "config_tag": record.config_tag,
        "ub1": record.report_ub1.to_dict(),
        "ub2": record.report_ub2.to_dict(),
        "ub2_has_negative": record.diagnostics["ub2"]["has_negative"],
    }
    print(json.dumps(summary, indent=2))
    return 0 if record.constraints_ok else 1


_GRID_KEYS = {"scenario": "scenarios", "scheme": "schemes", "selection": "selections", "source": "sources"}


def _as_list(value):
    if value is None:
        return None
    return list(value) if isinstance(value, (list, tuple)) else [value]


def cmd_grid(args) -> int:
    file_cfg = _load_file(args.config)
    grid_file = file_cfg.pop("grid", {})
    base = ScenarioConfig.from_dict(_merged(args, file_cfg, skip=tuple(_GRID_KEYS)))
    axes = {}
    parsers = {
        "scenario": Scenario.parse,
        "scheme": GenerationScheme.parse,
        "selection": SelectionFunction.parse,
        "source": DataSource.parse,
    }
    for key, field_name in _GRID_KEYS.items():
        values = _as_list(getattr(args, key)) or _as_list(grid_file.get(field_name)) or _as_list(file_cfg.get(key))
        if values:
            axes[field_name] = tuple(parsers[key](str(v)) for v in values)
    replications = args.replications if args.replications is not None else int(grid_file.get("replications", 1))
    grid = ExperimentGrid(base=base, replications=replications, **axes)
    out = args.out or Path("grid-out")
    result = run_grid(grid, out_dir=out, workers=args.grid_workers, level_workers=args.workers)
    print(f"{len(result.rows)} runs, {len(result.failures)} failures -> {out}")
    for aspect, corr in result.correlations.items():
        if "error" in corr:
            print(f"  {aspect:<10} correlation unavailable: {corr['error']}")
        else:
            print(
                f"  {aspect:<10} r(resp,sav)={corr['r_response_savings']:+.3f} "
                f"r(err,resp)={corr['r_error_response']:+.3f} r(err,sav)={corr['r_error_savings']:+.3f}"
            )
    return 0 if result.ok else 1


def cmd_diff(args) -> int:
    a = read_selections_csv(args.a)
    b = read_selections_csv(args.b)
    frac = diff_selections(a, b)
    print(f"{frac:.6f}")
    return 0


def cmd_entropy_scan(args) -> int:
    if args.input is not None:
        series = read_series_csv(args.input)
    else:
        series = long_price_series(args.length, np.random.default_rng(args.seed))
    found = entropy_window_search(series, args.horizon)
    print(
        json.dumps(
            {
                "length": int(series.size),
                "horizon": args.horizon,
                "min_start": found.min_start,
                "min_entropy": found.min_entropy,
                "max_start": found.max_start,
                "max_entropy": found.max_entropy,
            },
            indent=2,
        )
    )
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_series_csv(found.min_window, args.out / "min_entropy_tis.csv")
        write_series_csv(found.max_window, args.out / "max_entropy_tis.csv")
    return 0


def cmd_diversity(args) -> int:
    schemes = [GenerationScheme.parse(s) for s in args.scheme] if args.scheme else list(STUDY_SCHEMES)
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'scheme':<10} {'mean':>10} {'std':>10} {'min':>8} {'max':>8}")
    for scheme in schemes:
        d = diversity_distribution(scheme, args.horizon, args.samples, rng)
        rows.extend((str(scheme), int(v)) for v in d)
        print(f"{str(scheme):<10} {d.mean():>10.2f} {d.std():>10.2f} {d.min():>8d} {d.max():>8d}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with args.out.open("w") as fh:
            fh.write("scheme,diversity\n")
            fh.writelines(f"{s},{v}\n" for s, v in rows)
    return 0


def cmd_correlate(args) -> int:
    rows = read_summary_csv(args.summary)
    corr, pooled = correlate(rows)
    print(json.dumps({"aspects": corr, "pooled": pooled}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfreg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one pipeline")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="run an experiment grid")
    _add_config_flags(p, multi=True)
    p.add_argument("--replications", type=int)
    p.add_argument("--grid-workers", type=int, default=1, help="cells run in parallel")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("diff", help="fraction of agents with different selections")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("entropy-scan", help="find the min/max entropy windows of a long series")
    p.add_argument("input", type=Path, nargs="?", help="t,value CSV; synthetic series if omitted")
    p.add_argument("--horizon", type=int, default=144)
    p.add_argument("--length", type=int, default=2000, help="synthetic series length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_entropy_scan)

    p = sub.add_parser("diversity", help="informational diversity distribution per scheme")
    p.add_argument("--scheme", nargs="+")
    p.add_argument("--horizon", type=int, default=144)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="CSV of all samples")
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("correlate", help="aspect correlations from a grid summary.csv")
    p.add_argument("summary", type=Path)
    p.set_defaults(func=cmd_correlate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SelfRegError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
