"""Four-stage experiment pipeline and experiment grids.

disaggregate -> generate plans -> tree selection -> aggregate and evaluate.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .engine import SelectionFunction, build_tree, run_epos, sum_plans
from .errors import MismatchError, PipelineError, SelfRegError, UndefinedCorrelationError
from .ingest import (
    DataSource,
    Scenario,
    SourceKind,
    disaggregate_daily,
    disaggregate_uniform,
    read_per_agent_csv,
    read_series_csv,
    synth_aggregate,
    synth_daily_series,
    synth_tis,
)
from .metrics import (
    Aspect,
    EvaluationReport,
    aspect_correlation,
    evaluate,
)
from .plangen import STUDY_SCHEMES, GenerationScheme, agent_rng, generate, stack
from .provision import UpperBoundKind, residuals, upper_bound_1, upper_bound_2
from .signals import SignalKind, TransactiveSignal

logger = logging.getLogger(__name__)

# stream identifiers mixed into the run seed
_TIS_STREAM = 0x544953
_LOAD_STREAM = 0x4C4F4144


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario = Scenario.RAMP_DOWN
    horizon: int = 144
    agents: int = 40
    arity: int = 3
    plans: int = 4
    scheme: GenerationScheme = GenerationScheme.shuffle()
    selection: SelectionFunction = SelectionFunction.MIN_RMSE_UB2
    epsilon: float = 0.1
    seed: int = 0
    source: DataSource = DataSource(SourceKind.SYNTHETIC)
    literal_appendix_c: bool = False

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        if self.agents < 1:
            raise ValueError("agents must be >= 1")
        if self.arity < 1:
            raise ValueError("arity must be >= 1")
        if self.plans < 1:
            raise ValueError("plans must be >= 1")
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must be in [0, 1)")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.scheme.validate(self.horizon)

    @property
    def tag(self) -> str:
        return (
            f"{self.scenario.value}|{self.scheme}|{self.selection.value}|{self.source}"
            f"|n{self.agents}|k{self.arity}|p{self.plans}|T{self.horizon}|e{self.epsilon}|s{self.seed}"
            + ("|literal" if self.literal_appendix_c else "")
        )

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "horizon": self.horizon,
            "agents": self.agents,
            "arity": self.arity,
            "plans": self.plans,
            "scheme": str(self.scheme),
            "selection": self.selection.value,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "source": str(self.source),
            "literal_appendix_c": self.literal_appendix_c,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioConfig":
        kw = {}
        for key, value in d.items():
            if key not in _CONFIG_PARSERS:
                raise ValueError(f"unknown config key {key!r}")
            kw[key] = _CONFIG_PARSERS[key](value)
        return cls(**kw)


def _parse_bool(value) -> bool:
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return bool(value)


def _enum_or_parse(cls):
    def parse(value):
        return value if isinstance(value, cls) else cls.parse(str(value))

    return parse


_CONFIG_PARSERS = {
    "scenario": _enum_or_parse(Scenario),
    "scheme": _enum_or_parse(GenerationScheme),
    "selection": _enum_or_parse(SelectionFunction),
    "source": _enum_or_parse(DataSource),
    "horizon": int,
    "agents": int,
    "arity": int,
    "plans": int,
    "seed": int,
    "epsilon": float,
    "literal_appendix_c": _parse_bool,
}


@dataclass
class RunRecord:
    config: ScenarioConfig
    tis: TransactiveSignal
    itfs: TransactiveSignal
    etfs: TransactiveSignal
    ub1: TransactiveSignal
    ub2: TransactiveSignal
    report_ub1: EvaluationReport
    report_ub2: EvaluationReport
    selections: dict[int, int]
    diagnostics: dict
    wall_time: float = 0.0

    @property
    def config_tag(self) -> str:
        return self.config.tag

    @property
    def constraints_ok(self) -> bool:
        return bool(self.diagnostics["ub1"]["ok"] and self.diagnostics["ub2"]["ok"])

    def report_dict(self) -> dict:
        """Everything deterministic about the run (wall time excluded)."""
        return {
            "config_tag": self.config_tag,
            "config": self.config.to_dict(),
            "report_ub1": self.report_ub1.to_dict(),
            "report_ub2": self.report_ub2.to_dict(),
            "diagnostics": self.diagnostics,
            "signals": {
                "tis": self.tis.tolist(),
                "itfs": self.itfs.tolist(),
                "etfs": self.etfs.tolist(),
                "ub1": self.ub1.tolist(),
                "ub2": self.ub2.tolist(),
            },
        }


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except (SelfRegError, ValueError, ArithmeticError) as exc:
        raise PipelineError(name, exc) from exc


def load_seed_plans(config: ScenarioConfig) -> np.ndarray:
    """Per-agent seed plans ``(n, T)`` for the configured data source."""
    src = config.source
    rng = np.random.default_rng([config.seed, _LOAD_STREAM])
    T = config.horizon
    if src.kind is SourceKind.SYNTHETIC:
        agg = synth_aggregate(T, config.agents, rng)
        return disaggregate_uniform(agg, config.agents, config.epsilon, rng, literal=config.literal_appendix_c)
    if src.kind is SourceKind.CSV_AGGREGATE:
        agg = read_series_csv(src.path)
        if agg.size != T:
            raise ValueError(f"aggregate in {src.path} has {agg.size} steps, horizon is {T}")
        return disaggregate_uniform(agg, config.agents, config.epsilon, rng, literal=config.literal_appendix_c)
    if src.kind is SourceKind.SYNTHETIC_DAILY:
        return disaggregate_daily(synth_daily_series(T, config.agents, rng), T)
    if src.kind is SourceKind.CSV_DAILY:
        return disaggregate_daily(read_series_csv(src.path), T)
    plans = read_per_agent_csv(src.path, T)
    return np.stack([plans[a] for a in sorted(plans)])


def run_pipeline(config: ScenarioConfig, workers: int = 1) -> RunRecord:
    started = time.perf_counter()
    T = config.horizon
    tis = _stage("ingest", synth_tis, config.scenario, T, np.random.default_rng([config.seed, _TIS_STREAM]))
    seeds = _stage("ingest", load_seed_plans, config)
    n = seeds.shape[0]
    itfs = _stage("ingest", lambda: TransactiveSignal(sum_plans(seeds), SignalKind.ITFS))

    def _plans():
        return {
            i + 1: stack(generate(seeds[i], config.scheme, config.plans, agent_rng(config.seed, i + 1)))
            for i in range(n)
        }

    plans = _stage("plangen", _plans)

    def _select():
        tree = build_tree(n, config.arity)
        tree.attach_plans(plans)
        return run_epos(tree, config.selection, tis, workers=workers)

    result = _stage("engine", _select)

    def _evaluate():
        ub1 = upper_bound_1(tis, itfs)
        ub2 = upper_bound_2(tis, itfs)
        rep1 = evaluate(tis, itfs, result.etfs, ub1, UpperBoundKind.UB1, config.tag)
        rep2 = evaluate(tis, itfs, result.etfs, ub2, UpperBoundKind.UB2, config.tag)
        diag = {}
        for key, kind, ub in (("ub1", UpperBoundKind.UB1, ub1), ("ub2", UpperBoundKind.UB2, ub2)):
            res = residuals(kind, ub, itfs)
            diag[key] = {
                "mean_residual": res.mean,
                "volatility_residual": res.volatility,
                "min_value": res.min_value,
                "has_negative": res.has_negative,
                "ok": res.ok(),
            }
        diag["agents"] = n
        return ub1, ub2, rep1, rep2, diag

    ub1, ub2, rep1, rep2, diag = _stage("metrics", _evaluate)
    if diag["ub2"]["has_negative"]:
        logger.info("%s: UB2 has negative values (min %.6g)", config.tag, diag["ub2"]["min_value"])
    return RunRecord(
        config=config,
        tis=tis,
        itfs=itfs,
        etfs=result.etfs,
        ub1=ub1,
        ub2=ub2,
        report_ub1=rep1,
        report_ub2=rep2,
        selections=result.selections,
        diagnostics=diag,
        wall_time=time.perf_counter() - started,
    )


# --- output files -----------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def signals_csv(record: RunRecord) -> str:
    cols = [record.itfs.values, record.etfs.values, record.ub1.values, record.ub2.values, record.tis.values]
    rows = [[t] + [repr(float(c[t])) for c in cols] for t in range(record.config.horizon)]
    return _csv_text(["t", "itfs", "etfs", "ub1", "ub2", "tis"], rows)


def selections_csv(selections: Mapping[int, int]) -> str:
    return _csv_text(["agent_id", "selected_plan_index"], [[a, selections[a]] for a in sorted(selections)])


def plans_csv(plans: Mapping[int, np.ndarray]) -> str:
    rows = []
    for a in sorted(plans):
        for j, plan in enumerate(plans[a]):
            rows.extend([a, j, t, repr(float(v))] for t, v in enumerate(plan))
    return _csv_text(["agent_id", "plan_index", "t", "value"], rows)


def write_run(record: RunRecord, out_dir) -> Path:
    out = Path(out_dir)
    _atomic_write(out / "config.json", json.dumps(record.config.to_dict(), indent=2) + "\n")
    _atomic_write(out / "signals.csv", signals_csv(record))
    _atomic_write(out / "selections.csv", selections_csv(record.selections))
    _atomic_write(out / "report.json", json.dumps(record.report_dict(), indent=2) + "\n")
    _atomic_write(out / "timing.json", json.dumps({"wall_time_s": record.wall_time}) + "\n")
    return out


def read_selections_csv(path) -> dict[int, int]:
    out = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out[int(row["agent_id"])] = int(row["selected_plan_index"])
    return out


def diff_selections(a: Mapping[int, int], b: Mapping[int, int]) -> float:
    """Fraction of agents whose selected plan differs between two runs."""
    if set(a) != set(b):
        raise MismatchError("selection maps cover different agents")
    if not a:
        raise MismatchError("no agents to compare")
    return sum(a[i] != b[i] for i in a) / len(a)


# --- grids ------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentGrid:
    schemes: tuple[GenerationScheme, ...] = STUDY_SCHEMES
    selections: tuple[SelectionFunction, ...] = tuple(SelectionFunction)
    scenarios: tuple[Scenario, ...] = tuple(Scenario)
    sources: tuple[DataSource, ...] = (DataSource(SourceKind.SYNTHETIC),)
    replications: int = 1
    base: ScenarioConfig = ScenarioConfig()

    def __post_init__(self):
        for name in ("schemes", "selections", "scenarios", "sources"):
            if not getattr(self, name):
                raise ValueError(f"grid needs at least one entry in {name}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    def cells(self) -> list[tuple[int, ScenarioConfig]]:
        out = []
        for rep in range(self.replications):
            for src, scen, scheme, sel in itertools.product(self.sources, self.scenarios, self.schemes, self.selections):
                cfg = replace(self.base, source=src, scenario=scen, scheme=scheme, selection=sel, seed=self.base.seed + rep)
                out.append((rep, cfg))
        return out


SUMMARY_HEADER = [
    "scheme",
    "selection",
    "scenario",
    "source",
    "replication",
    "seed",
    "response",
    "savings",
    "mean_error",
    "volatility_error",
    "response_ub1",
    "savings_ub1",
    "constraints_ok",
]


@dataclass
class GridResult:
    rows: list[dict]
    failures: list[dict]
    aspect_means: dict[str, dict[str, dict[str, float]]]
    correlations: dict[str, dict]
    pooled: dict | None

    @property
    def ok(self) -> bool:
        return not self.failures and all(r["constraints_ok"] for r in self.rows)


def _row(rep: int, rec: RunRecord) -> dict:
    c = rec.config
    return {
        "scheme": str(c.scheme),
        "selection": c.selection.value,
        "scenario": c.scenario.value,
        "source": str(c.source),
        "replication": rep,
        "seed": c.seed,
        "response": rec.report_ub2.response,
        "savings": rec.report_ub2.savings,
        "mean_error": rec.report_ub2.mean_error,
        "volatility_error": rec.report_ub2.volatility_error,
        "response_ub1": rec.report_ub1.response,
        "savings_ub1": rec.report_ub1.savings,
        "constraints_ok": rec.constraints_ok,
    }


def aspect_means(rows: Sequence[dict]) -> dict[str, dict[str, dict[str, float]]]:
    """Mean response/savings/volatility error per value of each aspect."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    for aspect in Aspect:
        groups: dict[str, list[dict]] = {}
        for r in rows:
            groups.setdefault(str(r[aspect.value]), []).append(r)
        out[aspect.value] = {
            value: {
                m: float(np.mean([float(r[m]) for r in members]))
                for m in ("response", "savings", "volatility_error")
            }
            | {"count": len(members)}
            for value, members in groups.items()
        }
    return out


def _as_report(metrics: Mapping[str, float], tag: str) -> EvaluationReport:
    return EvaluationReport(
        response=float(metrics["response"]),
        savings=float(metrics["savings"]),
        mean_error=float(metrics.get("mean_error", 0.0)),
        volatility_error=float(metrics["volatility_error"]),
        ub_kind=UpperBoundKind.UB2,
        config_tag=tag,
    )


def correlate(rows: Sequence[dict]) -> tuple[dict[str, dict], dict | None]:
    """Per-aspect correlations over the aspect-value means, plus the pooled correlation.

    Errors (fewer than two aspect values, constant metrics) are recorded in
    place of that aspect's coefficients.
    """
    means = aspect_means(rows)
    out: dict[str, dict] = {}
    for aspect in Aspect:
        reports = [_as_report(m, f"{aspect.value}={v}") for v, m in sorted(means[aspect.value].items())]
        try:
            out[aspect.value] = aspect_correlation(aspect, reports).to_dict()
        except UndefinedCorrelationError as exc:
            out[aspect.value] = {"aspect": aspect.value, "error": str(exc)}
    pooled = None
    try:
        pooled_reports = [_as_report(r, "") for r in rows]
        c = aspect_correlation(Aspect.GENERATION_SCHEME, pooled_reports).to_dict()
        c["aspect"] = "all"
        pooled = c
    except UndefinedCorrelationError as exc:
        pooled = {"aspect": "all", "error": str(exc)}
    return out, pooled


def run_grid(grid: ExperimentGrid, out_dir=None, workers: int = 1, level_workers: int = 1) -> GridResult:
    cells = grid.cells()

    def _one(item):
        idx, (rep, cfg) = item
        try:
            rec = run_pipeline(cfg, workers=level_workers)
        except SelfRegError as exc:
            logger.error("cell %d (%s) failed: %s", idx, cfg.tag, exc)
            return idx, rep, cfg, None, exc
        if out_dir is not None:
            write_run(rec, Path(out_dir) / "runs" / f"{idx:04d}")
        return idx, rep, cfg, rec, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, enumerate(cells)))
    else:
        results = [_one(item) for item in enumerate(cells)]

    rows, failures = [], []
    for idx, rep, cfg, rec, exc in sorted(results, key=lambda r: r[0]):
        if rec is None:
            failures.append({"cell": idx, "config_tag": cfg.tag, "error": str(exc)})
        else:
            rows.append(_row(rep, rec))
    correlations, pooled = correlate(rows) if rows else ({}, None)
    result = GridResult(rows, failures, aspect_means(rows) if rows else {}, correlations, pooled)
    if out_dir is not None:
        write_grid(result, out_dir)
    return result


def summary_csv(rows: Sequence[dict]) -> str:
    def fmt(v):
        return repr(v) if isinstance(v, float) else str(v)

    return _csv_text(SUMMARY_HEADER, [[fmt(r[h]) for h in SUMMARY_HEADER] for r in rows])


def read_summary_csv(path) -> list[dict]:
    rows = []
    with Path(path).open(newline="") as fh:
        for raw in csv.DictReader(fh):
            row = dict(raw)
            for key in ("response", "savings", "mean_error", "volatility_error", "response_ub1", "savings_ub1"):
                row[key] = float(row[key])
            row["replication"] = int(row["replication"])
            row["seed"] = int(row["seed"])
            row["constraints_ok"] = row["constraints_ok"] == "True"
            rows.append(row)
    return rows


def write_grid(result: GridResult, out_dir) -> None:
    out = Path(out_dir)
    _atomic_write(out / "summary.csv", summary_csv(result.rows))
    payload = {
        "aspects": result.correlations,
        "pooled": result.pooled,
        "aspect_means": result.aspect_means,
        "failures": result.failures,
    }
    _atomic_write(out / "correlations.json", json.dumps(payload, indent=2) + "\n")
