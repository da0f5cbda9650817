"""Transactive signals and the signal algebra used by every other module.

A signal is a fixed-length sequence of reals over the planning horizon.
Prices (TIS) travel from supply to demand; quantities (iTFS, eTFS) travel
back.  Upper bounds (UB) are hypothetical quantity signals and are the only
kind allowed to go negative.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import EntropyUndefinedError, InfeasibleNormalizationError, SignalError


class SignalKind(str, enum.Enum):
    TIS = "TIS"
    ITFS = "iTFS"
    ETFS = "eTFS"
    UB = "UB"


def _frozen_array(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TransactiveSignal:
    """A length-T signal tagged with its role.

    TIS, iTFS and eTFS values must be non-negative with a positive total.
    Strict positivity is checked where data enters the system (CSV import and
    the synthetic generators); derived signals such as a normalized reflection
    or an eTFS built from plans with idle slots may legitimately hold zeros.
    """

    values: np.ndarray
    kind: SignalKind = SignalKind.TIS

    def __post_init__(self):
        arr = _frozen_array(self.values)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "kind", SignalKind(self.kind))
        if arr.size < 1:
            raise SignalError("a signal needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise SignalError("signal values must be finite")
        if self.kind is not SignalKind.UB:
            if np.any(arr < 0):
                t = int(np.argmax(arr < 0))
                raise SignalError(f"{self.kind.value} signal has negative value {arr[t]!r} at t={t}")
            if not arr.sum() > 0:
                raise SignalError(f"{self.kind.value} signal has zero total")

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, TransactiveSignal):
            return NotImplemented
        return self.kind is other.kind and np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def horizon(self) -> int:
        return self.values.size

    def is_strictly_positive(self) -> bool:
        return bool(np.all(self.values > 0))

    def with_kind(self, kind: SignalKind) -> "TransactiveSignal":
        return TransactiveSignal(self.values, kind)

    def tolist(self) -> list[float]:
        return [float(v) for v in self.values]


@dataclass(frozen=True, eq=False)
class ReflectedSignal:
    """A price signal flipped about its mean; may contain negatives.

    ``pivot`` is the mean of the source signal.  Reflection preserves the
    mean exactly in real arithmetic, so the pivot doubles as the exact mean
    of this signal and is reused when it is reflected again.
    """

    values: np.ndarray
    pivot: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        object.__setattr__(self, "pivot", float(self.pivot))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SignalStats:
    mean: float
    volatility: float
    entropy: float


def _as_array(signal) -> np.ndarray:
    if isinstance(signal, (TransactiveSignal, ReflectedSignal)):
        return signal.values
    return np.asarray(signal, dtype=np.float64)


def mean(signal) -> float:
    """Mean via a correctly rounded sum."""
    arr = _as_array(signal)
    if arr.size == 0:
        raise SignalError("mean of an empty signal")
    if np.all(arr == arr[0]):
        return float(arr[0])  # fsum/n need not reproduce a constant exactly
    return math.fsum(arr) / arr.size


def volatility(signal) -> float:
    """Population standard deviation (divide by T)."""
    arr = _as_array(signal)
    if arr.size and np.all(arr == arr[0]):
        return 0.0
    mu = mean(arr)
    dev = arr - mu
    return math.sqrt(math.fsum(dev * dev) / arr.size)


def shannon_entropy(signal) -> float:
    """Entropy in bits of the value-proportional distribution ``v_t / sum(v)``.

    Zero entries contribute nothing (``0 log 0 = 0``).
    """
    arr = _as_array(signal)
    if arr.size == 0:
        raise EntropyUndefinedError("entropy of an empty signal")
    if np.any(arr < 0):
        raise EntropyUndefinedError("entropy needs non-negative values")
    total = math.fsum(arr)
    if not total > 0:
        raise EntropyUndefinedError("entropy of a zero-sum signal is undefined")
    p = arr[arr > 0] / total
    h = -math.fsum(p * np.log2(p))
    # clamp rounding noise into the admissible range
    return min(max(h, 0.0), math.log2(arr.size))


def stats(signal) -> SignalStats:
    arr = _as_array(signal)
    if arr.size == 0:
        raise SignalError("stats of an empty signal")
    return SignalStats(mean=mean(arr), volatility=volatility(arr), entropy=shannon_entropy(arr))


def reflect(tis: TransactiveSignal | ReflectedSignal) -> ReflectedSignal:
    """Flip a price signal about its mean: ``out_t = 2*mean - tis_t``."""
    if isinstance(tis, ReflectedSignal):
        pivot = tis.pivot
    else:
        if isinstance(tis, TransactiveSignal) and tis.kind is not SignalKind.TIS:
            raise SignalError(f"reflect expects a TIS signal, got {tis.kind.value}")
        pivot = mean(tis)
    arr = _as_array(tis)
    return ReflectedSignal(2.0 * pivot - arr, pivot)


def normalize_reflection(reflected: ReflectedSignal) -> TransactiveSignal:
    """Lift negative entries to zero and pay for it proportionally from the positives.

    Every positive entry ``r`` is reduced by ``r * D / P`` where ``D`` is the
    total negative magnitude and ``P`` the total positive mass, so the sum
    (and mean) is unchanged and no entry drops below zero.
    """
    arr = _as_array(reflected)
    pos = arr > 0
    neg = arr < 0
    positive_mass = math.fsum(arr[pos])
    deficit = -math.fsum(arr[neg])
    if not positive_mass > deficit:
        raise InfeasibleNormalizationError(
            f"positive mass {positive_mass!r} cannot absorb negative mass {deficit!r}"
        )
    out = np.where(pos, arr, 0.0)
    if deficit > 0:
        out = out * ((positive_mass - deficit) / positive_mass)
    return TransactiveSignal(out, SignalKind.TIS)


# --- CSV --------------------------------------------------------------------

def write_signal_csv(signal, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in enumerate(_as_array(signal)):
            w.writerow([t, repr(float(v))])


def read_signal_csv(path, kind: SignalKind = SignalKind.TIS, strict: bool = True) -> TransactiveSignal:
    """Read a ``t,value`` CSV.  With ``strict`` every value must be > 0."""
    from .ingest import read_series_csv  # local: ingest depends on this module

    values = read_series_csv(path, strict=strict)
    return TransactiveSignal(values, kind)
