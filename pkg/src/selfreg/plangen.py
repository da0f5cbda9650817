"""Possible-plan generation: SHUFFLE, SHIFT(d) and SWAP(m).

Every generated plan is a value permutation of the agent's seed plan, so all
plans of one agent share mean, volatility and entropy.  Plan 0 is always the
seed itself.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DuplicatePlanWarning
from .metrics import informational_diversity


class PlanRole(str, enum.Enum):
    POSSIBLE = "possible"
    SELECTED = "selected"
    AGGREGATE = "aggregate"
    COMBINATIONAL = "combinational"


@dataclass(frozen=True, eq=False)
class Plan:
    values: np.ndarray
    owner: int = 0
    role: PlanRole = PlanRole.POSSIBLE

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("plan values must be finite and non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


class SchemeKind(str, enum.Enum):
    SHUFFLE = "shuffle"
    SHIFT = "shift"
    SWAP = "swap"


@dataclass(frozen=True)
class GenerationScheme:
    kind: SchemeKind
    param: int = 0

    @classmethod
    def shuffle(cls):
        return cls(SchemeKind.SHUFFLE)

    @classmethod
    def shift(cls, d: int):
        return cls(SchemeKind.SHIFT, int(d))

    @classmethod
    def swap(cls, m: int):
        return cls(SchemeKind.SWAP, int(m))

    @classmethod
    def parse(cls, text: str) -> "GenerationScheme":
        """Parse ``shuffle``, ``shift:<d>`` or ``swap:<m>``."""
        name, _, arg = text.strip().lower().partition(":")
        if name == "shuffle" and not arg:
            return cls.shuffle()
        if name in ("shift", "swap") and arg:
            try:
                value = int(arg)
            except ValueError:
                raise ValueError(f"bad scheme parameter in {text!r}") from None
            if value < 1:
                raise ValueError(f"scheme parameter must be positive: {text!r}")
            return cls(SchemeKind(name), value)
        raise ValueError(f"unknown generation scheme {text!r}; use shuffle, shift:<d> or swap:<m>")

    def __str__(self):
        if self.kind is SchemeKind.SHUFFLE:
            return "shuffle"
        return f"{self.kind.value}:{self.param}"

    def validate(self, horizon: int) -> None:
        if self.kind is SchemeKind.SHIFT and not 0 < self.param < horizon:
            raise ValueError(f"shift distance must be in [1, {horizon - 1}], got {self.param}")
        if self.kind is SchemeKind.SWAP and not 0 < self.param <= horizon // 2:
            raise ValueError(f"swap count must be in [1, {horizon // 2}], got {self.param}")


STUDY_SCHEMES = (
    GenerationScheme.shuffle(),
    GenerationScheme.shift(10),
    GenerationScheme.shift(20),
    GenerationScheme.swap(15),
    GenerationScheme.swap(30),
)


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def agent_rng(seed: int, agent_id: int) -> np.random.Generator:
    """Independent stream per agent, so generation order does not matter."""
    return np.random.default_rng([int(seed), 0x504C414E, int(agent_id)])


def _swap(values: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    idx = rng.choice(values.size, size=2 * m, replace=False)
    a, b = idx[0::2], idx[1::2]
    out = values.copy()
    out[a], out[b] = values[b], values[a]
    return out


def diversify(values: np.ndarray, scheme: GenerationScheme, rng, step: int = 1) -> np.ndarray:
    """One application of ``scheme``; ``step`` is the plan number for SHIFT."""
    values = np.asarray(values, dtype=np.float64)
    if scheme.kind is SchemeKind.SHUFFLE:
        return _rng(rng).permutation(values)
    if scheme.kind is SchemeKind.SHIFT:
        return np.roll(values, step * scheme.param)
    return _swap(values, scheme.param, _rng(rng))


def generate(seed_plan, scheme: GenerationScheme, p: int, rng=None) -> list[Plan]:
    """Return ``p`` possible plans: the seed followed by ``p - 1`` diversified copies.

    SHIFT plan ``j`` is the seed rotated ``j * d`` steps ahead; SHUFFLE and
    SWAP draw independently from ``rng``.
    """
    if p < 1:
        raise ValueError("need at least one plan")
    owner = seed_plan.owner if isinstance(seed_plan, Plan) else 0
    base = np.asarray(seed_plan, dtype=np.float64)
    scheme.validate(base.size)
    gen = _rng(rng)
    plans = [Plan(base, owner)]
    for j in range(1, p):
        if scheme.kind is SchemeKind.SHIFT and (j * scheme.param) % base.size == 0:
            warnings.warn(
                f"shift:{scheme.param} plan {j} wraps onto the seed (T={base.size})",
                DuplicatePlanWarning,
                stacklevel=2,
            )
        plans.append(Plan(diversify(base, scheme, gen, step=j), owner))
    return plans


def diversity_distribution(scheme: GenerationScheme, horizon: int, samples: int, rng=None) -> np.ndarray:
    """Sample the informational diversity of one diversified plan against a distinct-valued seed."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    scheme.validate(horizon)
    gen = _rng(rng)
    seed = np.arange(1.0, horizon + 1.0)
    return np.array(
        [informational_diversity(seed, diversify(seed, scheme, gen)) for _ in range(samples)],
        dtype=np.int64,
    )


def stack(plans: Sequence[Plan]) -> np.ndarray:
    return np.stack([np.asarray(p) for p in plans])
