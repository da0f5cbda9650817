"""Evaluation of a regulated eTFS: response, savings, mean/volatility error,
informational diversity of plans and correlation across experiments."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateBaselineError,
    DegenerateBoundError,
    MismatchError,
    UndefinedCorrelationError,
)
from .provision import UpperBoundKind
from .signals import _as_array, mean, volatility

# relative size below which a ratio denominator counts as zero
_DEGENERATE_REL = 1e-12


def _same_length(*arrays):
    n = arrays[0].size
    for a in arrays[1:]:
        if a.size != n:
            raise ValueError(f"length mismatch: {[x.size for x in arrays]}")


def response(itfs, etfs, ub) -> float:
    """Achieved demand adjustment relative to the adjustment the bound asks for.

    ``sum|itfs - etfs| / sum|itfs - ub|``.
    """
    i, e, u = _as_array(itfs), _as_array(etfs), _as_array(ub)
    _same_length(i, e, u)
    denom = math.fsum(np.abs(i - u))
    if not denom > _DEGENERATE_REL * math.fsum(np.abs(i)):
        raise DegenerateBoundError("baseline already equals the upper bound (zero response denominator)")
    return math.fsum(np.abs(i - e)) / denom


def cost(tis, demand) -> float:
    return math.fsum(_as_array(tis) * _as_array(demand))


def savings(tis, itfs, etfs, ub) -> float:
    """Achieved cost reduction relative to the reduction the bound would give."""
    p, i, e, u = _as_array(tis), _as_array(itfs), _as_array(etfs), _as_array(ub)
    _same_length(p, i, e, u)
    base = cost(p, i)
    denom = base - cost(p, u)
    if not abs(denom) > _DEGENERATE_REL * abs(base):
        raise DegenerateBoundError("baseline cost equals bound cost (zero savings denominator)")
    return (base - cost(p, e)) / denom


def mean_volatility_error(itfs, etfs) -> tuple[float, float]:
    i, e = _as_array(itfs), _as_array(etfs)
    _same_length(i, e)
    mu, sigma = mean(i), volatility(i)
    if not mu > 0:
        raise DegenerateBaselineError("baseline mean must be positive")
    if sigma == 0:
        raise DegenerateBaselineError("baseline volatility is zero")
    return abs(1.0 - mean(e) / mu), abs(1.0 - volatility(e) / sigma)


def informational_diversity(seed_plan, diversified_plan) -> int:
    """Total positional displacement between a plan and a permutation of it.

    Each position of the seed is matched to the position of the same value in
    the diversified plan; repeated values are paired in ascending position
    order on both sides.
    """
    a, b = _as_array(seed_plan), _as_array(diversified_plan)
    if a.size != b.size:
        raise MismatchError("plans differ in length")
    order_a = np.argsort(a, kind="stable")
    order_b = np.argsort(b, kind="stable")
    if not np.array_equal(a[order_a], b[order_b]):
        raise MismatchError("plans are not value permutations of each other")
    return int(np.abs(order_a - order_b).sum())


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("pearson needs equal-length inputs")
    if x.size < 2:
        raise UndefinedCorrelationError("pearson needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0 or np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class EvaluationReport:
    response: float
    savings: float
    mean_error: float
    volatility_error: float
    ub_kind: UpperBoundKind
    config_tag: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ub_kind"] = UpperBoundKind(self.ub_kind).value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvaluationReport":
        return cls(
            response=float(d["response"]),
            savings=float(d["savings"]),
            mean_error=float(d["mean_error"]),
            volatility_error=float(d["volatility_error"]),
            ub_kind=UpperBoundKind(d["ub_kind"]),
            config_tag=str(d.get("config_tag", "")),
        )


def evaluate(tis, itfs, etfs, ub, ub_kind: UpperBoundKind, config_tag: str = "") -> EvaluationReport:
    mu_err, sigma_err = mean_volatility_error(itfs, etfs)
    return EvaluationReport(
        response=response(itfs, etfs, ub),
        savings=savings(tis, itfs, etfs, ub),
        mean_error=mu_err,
        volatility_error=sigma_err,
        ub_kind=UpperBoundKind(ub_kind),
        config_tag=config_tag,
    )


class Aspect(str, enum.Enum):
    GENERATION_SCHEME = "scheme"
    SELECTION_FUNCTION = "selection"
    DATASET = "source"
    SCENARIO = "scenario"


@dataclass(frozen=True)
class AspectCorrelation:
    aspect: Aspect
    r_response_savings: float
    r_error_response: float
    r_error_savings: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aspect"] = Aspect(self.aspect).value
        return d


def aspect_correlation(aspect: Aspect, reports: Iterable[EvaluationReport]) -> AspectCorrelation:
    reports = list(reports)
    if len(reports) < 2:
        raise UndefinedCorrelationError(f"aspect {Aspect(aspect).value}: need at least two reports")
    r = np.array([x.response for x in reports])
    s = np.array([x.savings for x in reports])
    e = np.array([x.volatility_error for x in reports])
    return AspectCorrelation(
        aspect=Aspect(aspect),
        r_response_savings=pearson(r, s),
        r_error_response=pearson(e, r),
        r_error_savings=pearson(e, s),
    )


def aspect_correlations(groups: Mapping[Aspect, Iterable[EvaluationReport]]) -> dict[Aspect, AspectCorrelation]:
    return {Aspect(a): aspect_correlation(a, reps) for a, reps in groups.items()}
