"""Tree-based decentralized plan selection.

Agents sit in a balanced k-ary tree.  Decisions run bottom-up, one level at a
time: each parent sums every child's possible plans with the selections
already fixed beneath that child (aggregate plans), enumerates all p**k
element-wise combinations of one aggregate plan per child, and fixes each
child's selection to the component of the best combination.  The root then
picks its own plan against the total of everything else, and the eTFS is the
sum of all selected plans.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, ProtocolViolationError
from .provision import BatchBounds, UpperBoundKind
from .signals import SignalKind, TransactiveSignal, _as_array

DEFAULT_COMBINATION_BUDGET = 65536


class SelectionFunction(str, enum.Enum):
    MIN_RMSE_UB1 = "min-rmse-ub1"
    MIN_RMSE_UB2 = "min-rmse-ub2"
    MIN_COST = "min-cost"

    @classmethod
    def parse(cls, text: str) -> "SelectionFunction":
        key = text.strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown selection function {text!r}; choose from {[m.value for m in cls]}")

    @property
    def bound_kind(self) -> UpperBoundKind | None:
        if self is SelectionFunction.MIN_RMSE_UB1:
            return UpperBoundKind.UB1
        if self is SelectionFunction.MIN_RMSE_UB2:
            return UpperBoundKind.UB2
        return None


@dataclass(eq=False)
class AgentNode:
    id: int
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    depth: int = 0
    possible_plans: np.ndarray | None = None  # shape (p, T)
    selected_index: int | None = None  # 0-based; plan 0 is the seed

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def select(self, index: int) -> None:
        if self.selected_index is not None:
            raise ProtocolViolationError(f"agent {self.id} already selected plan {self.selected_index}")
        if self.possible_plans is None or not 0 <= index < len(self.possible_plans):
            raise ProtocolViolationError(f"agent {self.id}: plan index {index} out of range")
        self.selected_index = int(index)

    @property
    def selected_plan(self) -> np.ndarray:
        if self.selected_index is None:
            raise ProtocolViolationError(f"agent {self.id} has no selected plan")
        return self.possible_plans[self.selected_index]


@dataclass(eq=False)
class TreeOverlay:
    nodes: dict[int, AgentNode]
    arity: int
    levels: list[list[int]]

    @property
    def root(self) -> AgentNode:
        return self.nodes[self.levels[0][0]]

    def __len__(self):
        return len(self.nodes)

    def attach_plans(self, plans: dict[int, np.ndarray]) -> None:
        shapes = set()
        for agent_id, node in self.nodes.items():
            arr = np.array(plans[agent_id], dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError(f"agent {agent_id}: plans must be a (p, T) array")
            shapes.add(arr.shape)
            arr.setflags(write=False)
            node.possible_plans = arr
            node.selected_index = None
        if len(shapes) > 1:
            raise ValueError(f"agents disagree on plan shape: {sorted(shapes)}")

    def reset(self) -> None:
        for node in self.nodes.values():
            node.selected_index = None

    def subtree(self, agent_id: int) -> list[int]:
        out, stack = [], [agent_id]
        while stack:
            a = stack.pop()
            out.append(a)
            stack.extend(reversed(self.nodes[a].children))
        return out


def build_tree(n: int, arity: int) -> TreeOverlay:
    """Balanced k-ary tree over agents 1..n, filled breadth-first by id."""
    if n < 1 or arity < 1:
        raise ValueError("need n >= 1 and arity >= 1")
    nodes = {i: AgentNode(i) for i in range(1, n + 1)}
    for i in range(2, n + 1):
        parent = (i - 2) // arity + 1
        nodes[i].parent = parent
        nodes[parent].children.append(i)
        nodes[i].depth = nodes[parent].depth + 1
    levels: list[list[int]] = [[] for _ in range(nodes[n].depth + 1)]
    for i in range(1, n + 1):
        levels[nodes[i].depth].append(i)
    return TreeOverlay(nodes, arity, levels)


def branch_sum(tree: TreeOverlay, agent_id: int) -> np.ndarray:
    """Sum of the selected plans strictly below ``agent_id`` (recursive)."""
    node = tree.nodes[agent_id]
    horizon = node.possible_plans.shape[1]
    total = np.zeros(horizon)
    for c in node.children:
        child = tree.nodes[c]
        if child.selected_index is None:
            raise ProtocolViolationError(f"descendant {c} of agent {agent_id} is not selected yet")
        total = total + (child.selected_plan + branch_sum(tree, c))
    return total


def aggregate_plan_set(tree: TreeOverlay, child_id: int) -> np.ndarray:
    """Aggregate plans of one child: each possible plan plus its fixed branch."""
    node = tree.nodes[child_id]
    return node.possible_plans + branch_sum(tree, child_id)[None, :]


def combinational_plans(aggregates: list[np.ndarray], budget: int = DEFAULT_COMBINATION_BUDGET) -> np.ndarray:
    """All element-wise sums taking one aggregate plan per child.

    Row order is lexicographic in the per-child plan indices with the first
    child outermost.  Returns shape ``(prod(p_u), T)``.
    """
    if not aggregates:
        raise ValueError("need at least one child")
    count = math.prod(a.shape[0] for a in aggregates)
    if count > budget:
        raise BudgetExceededError(f"{count} combinations exceed the budget of {budget}")
    acc = np.asarray(aggregates[0], dtype=np.float64)
    for agg in aggregates[1:]:
        acc = (acc[:, None, :] + np.asarray(agg)[None, :, :]).reshape(-1, acc.shape[-1])
    return acc


def decode_combination(index: int, counts: list[int]) -> tuple[int, ...]:
    """Per-child plan indices of combination ``index`` (first child outermost)."""
    out = []
    for c in reversed(counts):
        index, r = divmod(index, c)
        out.append(r)
    return tuple(reversed(out))


class Selector:
    """Scores candidate demand signals under one selection function for a fixed TIS."""

    def __init__(self, fn: SelectionFunction, tis: TransactiveSignal):
        self.fn = SelectionFunction(fn)
        self.tis = _as_array(tis)
        kind = self.fn.bound_kind
        self._bounds = BatchBounds(kind, tis) if kind is not None else None

    def scores(self, candidates: np.ndarray) -> np.ndarray:
        cand = np.atleast_2d(candidates)
        if self._bounds is None:
            return cand @ self.tis
        ub = self._bounds(cand)
        diff = cand - ub
        return np.sqrt((diff * diff).sum(axis=1) / cand.shape[1])

    def best(self, candidates: np.ndarray) -> int:
        # argmin keeps the first minimum, i.e. ties go to the lowest index
        return int(np.argmin(self.scores(candidates)))


def select(combinationals: np.ndarray, fn: SelectionFunction, tis: TransactiveSignal, branch_fixed=None) -> int:
    """Index of the best combinational plan.

    ``branch_fixed`` is demand already fixed outside the candidates and is
    added to every candidate before scoring (the root uses it for its own
    choice).  For the RMSE functions the bound is recomputed per candidate
    with that candidate standing in as the baseline.
    """
    cand = np.atleast_2d(np.asarray(combinationals, dtype=np.float64))
    if cand.shape[0] == 0:
        raise ValueError("no combinational plans to select from")
    if branch_fixed is not None:
        cand = cand + np.asarray(branch_fixed, dtype=np.float64)[None, :]
    return Selector(fn, tis).best(cand)


@dataclass(frozen=True)
class Decision:
    parent: int
    children: tuple[int, ...]
    combination: int
    choice: tuple[int, ...]
    score: float


@dataclass
class EposResult:
    etfs: TransactiveSignal
    selections: dict[int, int]
    decisions: list[Decision]


def _decide(tree: TreeOverlay, parent_id: int, selector: Selector, sums: dict, budget: int) -> Decision:
    parent = tree.nodes[parent_id]
    kids = parent.children
    aggregates = []
    for c in kids:
        if c not in sums:
            raise ProtocolViolationError(f"branch under child {c} is not complete")
        aggregates.append(tree.nodes[c].possible_plans + sums[c][None, :])
    combos = combinational_plans(aggregates, budget)
    scores = selector.scores(combos)
    best = int(np.argmin(scores))
    choice = decode_combination(best, [a.shape[0] for a in aggregates])
    return Decision(parent_id, tuple(kids), best, choice, float(scores[best]))


def run_epos(
    tree: TreeOverlay,
    fn: SelectionFunction,
    tis: TransactiveSignal,
    workers: int = 1,
    budget: int = DEFAULT_COMBINATION_BUDGET,
) -> EposResult:
    """Run one bottom-up decision cycle and return the eTFS and all selections.

    Parents within a level are independent and may run on ``workers``
    threads; levels are separated by a barrier.  Results do not depend on
    the number of workers.
    """
    if any(node.possible_plans is None for node in tree.nodes.values()):
        raise ProtocolViolationError("every agent needs possible plans before the run")
    horizon = tree.root.possible_plans.shape[1]
    if len(tis) != horizon:
        raise ValueError(f"TIS length {len(tis)} does not match plan length {horizon}")
    tree.reset()
    selector = Selector(fn, tis)
    # sums[a] = sum of selected plans strictly below a, filled once a's children are fixed
    sums: dict[int, np.ndarray] = {}
    for level in tree.levels:
        for a in level:
            if tree.nodes[a].is_leaf:
                sums[a] = np.zeros(horizon)
    decisions: list[Decision] = []

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for level in reversed(tree.levels):
            parents = [a for a in level if not tree.nodes[a].is_leaf]
            if not parents:
                continue
            if pool is None:
                level_decisions = [_decide(tree, a, selector, sums, budget) for a in parents]
            else:
                level_decisions = list(pool.map(lambda a: _decide(tree, a, selector, sums, budget), parents))
            # barrier: commit the whole level only after every parent decided
            for d in level_decisions:
                total = np.zeros(horizon)
                for c, j in zip(d.children, d.choice):
                    tree.nodes[c].select(j)
                    total = total + (tree.nodes[c].possible_plans[j] + sums[c])
                sums[d.parent] = total
            decisions.extend(level_decisions)
    finally:
        if pool is not None:
            pool.shutdown()

    root = tree.root
    others = sums[root.id]
    own = selector.scores(root.possible_plans + others[None, :])
    root_choice = int(np.argmin(own))
    root.select(root_choice)
    decisions.append(Decision(root.id, (root.id,), root_choice, (root_choice,), float(own[root_choice])))

    missing = [a for a, node in tree.nodes.items() if node.selected_index is None]
    if missing:
        raise ProtocolViolationError(f"agents left without a selection: {missing[:10]}")
    selections = {a: tree.nodes[a].selected_index for a in sorted(tree.nodes)}
    etfs = sum_plans([tree.nodes[a].selected_plan for a in sorted(tree.nodes)])
    return EposResult(TransactiveSignal(etfs, SignalKind.ETFS), selections, decisions)


def sum_plans(plans) -> np.ndarray:
    """Correctly rounded element-wise sum of plans (independent of order)."""
    mat = np.asarray(list(plans), dtype=np.float64)
    return np.array([math.fsum(col) for col in mat.T])
