"""Seed plans and scenario price signals.

Covers CSV import, the two disaggregation procedures (uniform split with
heterogeneity, and one-window-per-agent daily split), synthetic scenario
TIS generators and the exhaustive entropy window search.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import IngestError, InsufficientDataError, ScenarioWindowError, TruncatedSeriesWarning
from .signals import SignalKind, TransactiveSignal, _as_array, shannon_entropy

logger = logging.getLogger(__name__)

REFERENCE_HORIZON = 144
RAMP_WINDOW = (40, 80)
FAILURE_WINDOW = (60, 80)


class Scenario(str, enum.Enum):
    RAMP_DOWN = "ramp-down"
    GENERATION_FAILURE = "generation-failure"
    MAX_ENTROPY = "max-entropy"
    MIN_ENTROPY = "min-entropy"

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        key = text.strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown scenario {text!r}; choose from {[m.value for m in cls]}")


class SourceKind(str, enum.Enum):
    SYNTHETIC = "synthetic"
    SYNTHETIC_DAILY = "synthetic-daily"
    CSV_AGGREGATE = "csv-aggregate"
    CSV_PER_AGENT = "csv-agents"
    CSV_DAILY = "csv-daily"


@dataclass(frozen=True)
class DataSource:
    kind: SourceKind
    path: str | None = None

    @classmethod
    def parse(cls, text: str) -> "DataSource":
        """``synthetic``, ``synthetic-daily`` or ``csv-aggregate|csv-agents|csv-daily:<path>``."""
        name, sep, path = text.strip().partition(":")
        try:
            kind = SourceKind(name.lower())
        except ValueError:
            raise ValueError(f"unknown data source {text!r}") from None
        if kind.value.startswith("csv"):
            if not path:
                raise ValueError(f"source {name} needs a path, e.g. {name}:data.csv")
            return cls(kind, path)
        if sep:
            raise ValueError(f"source {name} takes no path")
        return cls(kind)

    def __str__(self):
        return self.kind.value if self.path is None else f"{self.kind.value}:{self.path}"


# --- CSV import -------------------------------------------------------------

def _float(text, path, row):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise IngestError(f"not a number: {text!r}", path, row) from None
    if not math.isfinite(v):
        raise IngestError(f"non-finite value {text!r}", path, row)
    return v


def _int(text, path, row):
    try:
        return int(text)
    except (TypeError, ValueError):
        raise IngestError(f"not an integer: {text!r}", path, row) from None


def _rows(path, header):
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IngestError(str(exc), path) from exc
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise IngestError(f"expected header {','.join(header)}", path, 1)
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestError(f"expected {len(header)} columns, got {len(row)}", path, row_no)
            yield row_no, row


def read_series_csv(path, strict: bool = True) -> np.ndarray:
    """Read a ``t,value`` file.  Rows must cover t = 0..N-1 exactly once."""
    by_t = {}
    for row_no, (t_text, v_text) in _rows(path, ["t", "value"]):
        t = _int(t_text, path, row_no)
        v = _float(v_text, path, row_no)
        if strict and not v > 0:
            raise IngestError(f"value must be > 0, got {v!r}", path, row_no)
        if not strict and v < 0:
            raise IngestError(f"value must be >= 0, got {v!r}", path, row_no)
        if t in by_t:
            raise IngestError(f"duplicate t={t}", path, row_no)
        by_t[t] = v
    if not by_t:
        raise IngestError("no data rows", path)
    if sorted(by_t) != list(range(len(by_t))):
        raise IngestError(f"t must cover 0..{len(by_t) - 1} without gaps", path)
    return np.array([by_t[t] for t in range(len(by_t))])


def read_per_agent_csv(path, horizon: int | None = None) -> dict[int, np.ndarray]:
    """Read ``agent_id,t,value`` rows into one seed plan per agent."""
    data: dict[int, dict[int, float]] = defaultdict(dict)
    for row_no, (a_text, t_text, v_text) in _rows(path, ["agent_id", "t", "value"]):
        a = _int(a_text, path, row_no)
        t = _int(t_text, path, row_no)
        v = _float(v_text, path, row_no)
        if v < 0:
            raise IngestError(f"demand must be >= 0, got {v!r}", path, row_no)
        if t in data[a]:
            raise IngestError(f"duplicate (agent {a}, t={t})", path, row_no)
        data[a][t] = v
    if not data:
        raise IngestError("no data rows", path)
    plans = {}
    for a in sorted(data):
        ts = data[a]
        length = len(ts) if horizon is None else horizon
        if sorted(ts) != list(range(length)):
            raise IngestError(f"agent {a}: t must cover 0..{length - 1}", path)
        plans[a] = np.array([ts[t] for t in range(length)])
    return plans


def write_series_csv(values, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in enumerate(_as_array(values)):
            w.writerow([t, repr(float(v))])


# --- disaggregation ---------------------------------------------------------

def _quantize_below(d: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Round ``d`` to a multiple of ulp(x) in [0, x] so that ``x - d`` is exact."""
    ulp = np.spacing(x)
    q = np.rint(d / ulp) * ulp
    return np.clip(q, 0.0, x)


def disaggregate_uniform(itfs, n: int, epsilon: float, rng=None, literal: bool = False) -> np.ndarray:
    """Split an aggregate load into ``n`` seed plans, shape ``(n, T)``.

    For each time step the remaining load ``x`` is handed out agent by
    agent: agent ``i`` draws a share around ``x / (n - i + 1)`` widened by
    ``epsilon`` and the last agent takes the remainder.  Each share is
    rounded to the last bit of ``x`` so the per-step totals reproduce the
    aggregate exactly.

    With ``literal=True`` the share is ``mu + 2*epsilon*mu*u`` (draw
    ``u`` in [0, 1)), which only ever lands above the uniform share; the
    default ``mu*(1 - epsilon) + 2*epsilon*mu*u`` is centred on it.
    """
    agg = _as_array(itfs).astype(np.float64)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must be in [0, 1)")
    if np.any(agg < 0):
        raise ValueError("aggregate load must be non-negative")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    horizon = agg.size
    out = np.empty((n, horizon))
    x = agg.copy()
    for i in range(n - 1):
        share = x / (n - i)
        u = gen.random(horizon)
        if literal:
            lo, hi = share - epsilon * share, share + epsilon * share
            d = share - lo * u + hi * u
        else:
            d = share * (1.0 - epsilon) + u * (2.0 * epsilon * share)
        d = np.minimum(x, d)
        d = np.maximum(d, 0.0)
        d = _quantize_below(d, x)
        out[i] = d
        x = x - d
    out[n - 1] = x
    return out


def disaggregate_daily(series, horizon: int) -> np.ndarray:
    """One seed plan per complete non-overlapping window of ``horizon`` steps."""
    arr = _as_array(series)
    n = arr.size // horizon
    if n < 1:
        raise InsufficientDataError(f"series of length {arr.size} holds no window of {horizon}")
    dropped = arr.size - n * horizon
    if dropped:
        warnings.warn(f"dropping {dropped} trailing values", TruncatedSeriesWarning, stacklevel=2)
    return arr[: n * horizon].reshape(n, horizon).copy()


# --- synthetic data ---------------------------------------------------------

def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def scale_window(window: tuple[int, int], horizon: int) -> tuple[int, int]:
    lo, hi = window
    return round(lo * horizon / REFERENCE_HORIZON), round(hi * horizon / REFERENCE_HORIZON)


EVENING_PEAK_PHASE = 0.8


def base_price_curve(horizon: int, rng=None, level: float = 50.0) -> np.ndarray:
    """Sinusoid (period T/3, 25% amplitude) with 5% uniform noise around ``level``.

    The daily price maximum sits on the evening demand peak of
    :func:`household_profile`, as prices follow load.
    """
    gen = _rng(rng)
    t = np.arange(horizon)
    phase = t / (horizon / 3.0) - EVENING_PEAK_PHASE + 0.25
    wave = 1.0 + 0.25 * np.sin(2.0 * np.pi * phase)
    noise = 1.0 + gen.uniform(-0.05, 0.05, horizon)
    return level * wave * noise


def ramp_down_factor(horizon: int) -> np.ndarray:
    lo, hi = scale_window(RAMP_WINDOW, horizon)
    f = np.ones(horizon)
    f[lo : hi + 1] = 2.0
    return f


def long_price_series(length: int, rng=None, level: float = 50.0) -> np.ndarray:
    """A noisy multi-day price series with irregular spikes and calm stretches."""
    gen = _rng(rng)
    t = np.arange(length)
    daily = 1.0 + 0.3 * np.sin(2.0 * np.pi * t / 48.0) + 0.1 * np.sin(2.0 * np.pi * t / 7.3)
    # volatility regime changes make some windows far more dispersed than others
    regime = np.repeat(gen.gamma(1.5, 0.4, size=length // 36 + 1), 36)[:length]
    noise = np.exp(gen.normal(0.0, 1.0, length) * regime * 0.4)
    spikes = np.where(gen.random(length) < 0.01, gen.uniform(2.0, 6.0, length), 1.0)
    return level * np.clip(daily, 0.2, None) * noise * spikes


def synth_tis(scenario: Scenario, horizon: int = REFERENCE_HORIZON, rng=None) -> TransactiveSignal:
    """Price signal for a regulatory scenario.

    Ramp down doubles the base price over [40, 80]; generation failure adds
    a surcharge of one base level on top of that over [60, 80].  Window
    bounds refer to a 144-step horizon and scale with ``horizon``.  The
    entropy scenarios pick the minimum or maximum entropy window of a long
    synthetic series.
    """
    scenario = Scenario(scenario)
    gen = _rng(rng)
    if scenario in (Scenario.RAMP_DOWN, Scenario.GENERATION_FAILURE):
        if horizon < 81:
            raise ScenarioWindowError(f"scenario {scenario.value} needs T >= 81, got {horizon}")
        level = 50.0
        base = base_price_curve(horizon, gen, level)
        price = base * ramp_down_factor(horizon)
        if scenario is Scenario.GENERATION_FAILURE:
            lo, hi = scale_window(FAILURE_WINDOW, horizon)
            price[lo : hi + 1] += level
    else:
        if horizon < 2:
            raise ScenarioWindowError("entropy scenarios need T >= 2")
        series = long_price_series(8 * horizon, gen)
        found = entropy_window_search(series, horizon)
        price = found.min_window if scenario is Scenario.MIN_ENTROPY else found.max_window
    return TransactiveSignal(price, SignalKind.TIS)


def household_profile(horizon: int, rng=None, steps_per_day: int | None = None) -> np.ndarray:
    """Aggregate-shaped household demand: night base load, morning and evening peaks."""
    gen = _rng(rng)
    spd = steps_per_day or horizon
    phase = (np.arange(horizon) % spd) / spd
    morning = 0.6 * np.exp(-0.5 * ((phase - 0.32) / 0.05) ** 2)
    evening = 1.0 * np.exp(-0.5 * ((phase - EVENING_PEAK_PHASE) / 0.07) ** 2)
    noise = 1.0 + gen.uniform(-0.1, 0.1, horizon)
    return (0.4 + morning + evening) * noise


def synth_aggregate(horizon: int, n: int, rng=None) -> np.ndarray:
    """Synthetic aggregate base load of ``n`` households (about 1 unit each on average)."""
    profile = household_profile(horizon, rng, steps_per_day=max(horizon // 3, 1))
    return n * profile / profile.mean()


def synth_daily_series(horizon: int, days: int, rng=None) -> np.ndarray:
    """A single household observed for ``days`` consecutive windows of ``horizon``."""
    gen = _rng(rng)
    scale = gen.lognormal(0.0, 0.25, days)
    parts = [s * household_profile(horizon, gen, steps_per_day=max(horizon // 3, 1)) for s in scale]
    return np.concatenate(parts)


# --- entropy window search --------------------------------------------------

@dataclass(frozen=True)
class WindowSearchResult:
    min_start: int
    max_start: int
    min_entropy: float
    max_entropy: float
    min_window: np.ndarray
    max_window: np.ndarray


def window_entropies(series, horizon: int) -> np.ndarray:
    arr = _as_array(series)
    if arr.size < horizon:
        raise InsufficientDataError(f"series of length {arr.size} is shorter than the window {horizon}")
    if np.any(arr <= 0):
        raise ValueError("entropy search needs a strictly positive series")
    windows = sliding_window_view(arr, horizon)
    p = windows / windows.sum(axis=1, keepdims=True)
    return -(p * np.log2(p)).sum(axis=1)


def entropy_window_search(series, horizon: int) -> WindowSearchResult:
    """Scan all consecutive windows; earliest start wins ties."""
    arr = _as_array(series)
    h = window_entropies(arr, horizon)
    lo, hi = int(np.argmin(h)), int(np.argmax(h))
    return WindowSearchResult(
        min_start=lo,
        max_start=hi,
        min_entropy=shannon_entropy(arr[lo : lo + horizon]),
        max_entropy=shannon_entropy(arr[hi : hi + horizon]),
        min_window=arr[lo : lo + horizon].copy(),
        max_window=arr[hi : hi + horizon].copy(),
    )
