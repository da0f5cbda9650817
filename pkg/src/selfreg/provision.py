"""Upper-bound signals: the hypothetical optimally regulated demand.

UB1 redistributes the baseline's mean demand along the normalized price
reflection.  UB2 maps the price z-scores (reversed) onto the baseline's mean
and volatility, and may therefore go negative.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolationError, DegenerateIncentiveError
from .signals import (
    SignalKind,
    TransactiveSignal,
    _as_array,
    mean,
    normalize_reflection,
    reflect,
    volatility,
)

RESIDUAL_TOL = 1e-9


class UpperBoundKind(str, enum.Enum):
    UB1 = "UB1"
    UB2 = "UB2"


@dataclass(frozen=True)
class ConstraintResiduals:
    mean: float
    volatility: float | None  # UB2 only
    min_value: float

    @property
    def has_negative(self) -> bool:
        return self.min_value < 0

    def ok(self, tol: float = RESIDUAL_TOL) -> bool:
        if not self.mean < tol:
            return False
        return self.volatility is None or self.volatility < tol


def _check_lengths(tis, itfs):
    if len(tis) != len(itfs):
        raise ValueError(f"length mismatch: tis has {len(tis)}, itfs has {len(itfs)}")


def _price_zscores(tis) -> np.ndarray:
    """``(reflect(tis)_t - mean(tis)) / sigma(tis)``, i.e. the negated price z-score."""
    arr = _as_array(tis)
    if arr.size == 0 or np.all(arr == arr[0]):
        raise DegenerateIncentiveError("incentive signal has zero volatility")
    refl = reflect(TransactiveSignal(arr, SignalKind.TIS))
    dev = refl.values - refl.pivot
    # re-standardize: for tiny price spreads the rounded pivot is off by as much as the spread
    dev = dev - mean(dev)
    sigma = volatility(dev)
    if sigma == 0.0:
        raise DegenerateIncentiveError("incentive signal has zero volatility")
    return dev / sigma


def residuals(kind: UpperBoundKind, ub, itfs) -> ConstraintResiduals:
    ub_arr = _as_array(ub)
    target_mean = mean(itfs)
    mean_res = abs(mean(ub_arr) - target_mean) / abs(target_mean)
    vol_res = None
    if UpperBoundKind(kind) is UpperBoundKind.UB2:
        target_vol = volatility(itfs)
        got = volatility(ub_arr)
        # constant baseline: no relative scale, compare against the mean instead
        vol_res = abs(got - target_vol) / (target_vol if target_vol > 0 else abs(target_mean))
    return ConstraintResiduals(mean_res, vol_res, float(ub_arr.min()))


def _verified(kind, values, itfs) -> TransactiveSignal:
    res = residuals(kind, values, itfs)
    if not res.ok():
        raise ConstraintViolationError(f"{UpperBoundKind(kind).value} residuals out of tolerance: {res}")
    return TransactiveSignal(values, SignalKind.UB)


def upper_bound_1(tis: TransactiveSignal, itfs: TransactiveSignal) -> TransactiveSignal:
    """Mean-constrained bound: ``mean(itfs)/mean(tis) * normalize(reflect(tis))``."""
    _check_lengths(tis, itfs)
    normalized = normalize_reflection(reflect(tis))
    out = (mean(itfs) / mean(tis)) * normalized.values
    return _verified(UpperBoundKind.UB1, out, itfs)


def upper_bound_2(tis: TransactiveSignal, itfs: TransactiveSignal) -> TransactiveSignal:
    """Mean- and volatility-constrained bound; can contain negatives."""
    _check_lengths(tis, itfs)
    z = _price_zscores(tis)
    out = volatility(itfs) * z + mean(itfs)
    return _verified(UpperBoundKind.UB2, out, itfs)


def upper_bound(kind: UpperBoundKind, tis: TransactiveSignal, itfs: TransactiveSignal) -> TransactiveSignal:
    kind = UpperBoundKind(kind)
    if kind is UpperBoundKind.UB1:
        return upper_bound_1(tis, itfs)
    return upper_bound_2(tis, itfs)


class BatchBounds:
    """Upper bounds for many candidate baselines against one fixed TIS.

    The TIS-only parts (normalized reflection, z-scores) are computed once;
    each call then costs O(m*T) for ``m`` candidates.  Used by the engine,
    which recomputes a bound per combinational plan.
    """

    def __init__(self, kind: UpperBoundKind, tis: TransactiveSignal):
        self.kind = UpperBoundKind(kind)
        tis_arr = _as_array(tis)
        self.horizon = tis_arr.size
        if self.kind is UpperBoundKind.UB1:
            self._shape = normalize_reflection(reflect(tis)).values / mean(tis_arr)
        else:
            self._shape = _price_zscores(tis_arr)

    def __call__(self, candidates: np.ndarray) -> np.ndarray:
        cand = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
        means = cand.mean(axis=1)
        constant = np.all(cand == cand[:, :1], axis=1)
        means = np.where(constant, cand[:, 0], means)
        if self.kind is UpperBoundKind.UB1:
            out = means[:, None] * self._shape[None, :]
        else:
            sig = np.where(constant, 0.0, cand.std(axis=1))
            out = sig[:, None] * self._shape[None, :] + means[:, None]
        self._check(cand, out, means, constant)
        return out

    def _check(self, cand, out, means, constant):
        scale = np.where(means != 0, np.abs(means), 1.0)
        mean_res = np.abs(out.mean(axis=1) - means) / scale
        if np.any(mean_res >= RESIDUAL_TOL):
            raise ConstraintViolationError(f"batch {self.kind.value} mean residual {mean_res.max()!r}")
        if self.kind is UpperBoundKind.UB2:
            sig = np.where(constant, 0.0, cand.std(axis=1))
            vol_scale = np.where(sig > 0, sig, scale)
            vol_res = np.abs(out.std(axis=1) - sig) / vol_scale
            if np.any(vol_res >= RESIDUAL_TOL):
                raise ConstraintViolationError(f"batch UB2 volatility residual {vol_res.max()!r}")


def rmse(a, b) -> float:
    d = _as_array(a) - _as_array(b)
    return math.sqrt(math.fsum(d * d) / d.size)
