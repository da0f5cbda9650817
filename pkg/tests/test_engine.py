import itertools
import math

import numpy as np
import pytest

from selfreg.engine import (
    SelectionFunction,
    Selector,
    aggregate_plan_set,
    branch_sum,
    build_tree,
    combinational_plans,
    decode_combination,
    run_epos,
    select,
)
from selfreg.errors import BudgetExceededError, DegenerateIncentiveError, ProtocolViolationError
from selfreg.provision import upper_bound
from selfreg.signals import SignalKind, TransactiveSignal

from _oracles import all_combinations, subtree_selected_sum


def tis(v):
    return TransactiveSignal(v, SignalKind.TIS)


class TestBuildTree:
    def test_four_agents(self):
        tree = build_tree(4, 3)
        assert tree.root.id == 1
        assert tree.nodes[1].children == [2, 3, 4]
        assert tree.levels == [[1], [2, 3, 4]]

    def test_single(self):
        tree = build_tree(1, 3)
        assert tree.root.children == []
        assert tree.levels == [[1]]

    def test_perfect_13(self):
        tree = build_tree(13, 3)
        assert [len(level) for level in tree.levels] == [1, 3, 9]

    @pytest.mark.parametrize("n, k", [(1, 1), (5, 1), (40, 3), (100, 2), (57, 4)])
    def test_invariants(self, n, k):
        tree = build_tree(n, k)
        assert sorted(tree.nodes) == list(range(1, n + 1))
        # single root, every other node has exactly one parent, acyclic by depth
        assert [a for a, node in tree.nodes.items() if node.parent is None] == [1]
        for a, node in tree.nodes.items():
            assert len(node.children) <= k
            for c in node.children:
                assert tree.nodes[c].parent == a
                assert tree.nodes[c].depth == node.depth + 1
        leaf_depths = {node.depth for node in tree.nodes.values() if node.is_leaf}
        assert max(leaf_depths) - min(leaf_depths) <= 1
        assert len(tree.subtree(1)) == n

    def test_invalid(self):
        with pytest.raises(ValueError):
            build_tree(0, 3)


class TestCombinationalPlans:
    def test_single_child(self):
        agg = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(combinational_plans([agg]), agg)

    def test_two_children_lexicographic(self):
        out = combinational_plans([np.array([[1.0], [2.0]]), np.array([[10.0], [20.0]])])
        np.testing.assert_array_equal(out, [[11], [21], [12], [22]])

    def test_three_children_four_plans(self):
        aggs = [np.random.default_rng(i).uniform(0, 1, (4, 144)) for i in range(3)]
        assert combinational_plans(aggs).shape == (64, 144)

    def test_matches_itertools(self):
        rng = np.random.default_rng(0)
        aggs = [rng.uniform(0, 1, (3, 5)) for _ in range(3)]
        ours = combinational_plans(aggs)
        ref = all_combinations([a.tolist() for a in aggs])
        for row, (choice, acc) in zip(ours, ref):
            assert row.tolist() == acc
        for idx, (choice, _) in enumerate(ref):
            assert decode_combination(idx, [3, 3, 3]) == choice

    def test_budget(self):
        aggs = [np.zeros((4, 2))] * 3
        with pytest.raises(BudgetExceededError):
            combinational_plans(aggs, budget=63)


class TestSelect:
    def test_identical_candidates_tie_to_first(self):
        cands = np.ones((5, 3))
        for fn in SelectionFunction:
            assert select(cands, fn, tis([1, 2, 3])) == 0

    def test_min_cost(self):
        # cost [5,1] = 5 + 10 = 15, cost [1,5] = 1 + 50 = 51
        assert select(np.array([[5.0, 1.0], [1.0, 5.0]]), SelectionFunction.MIN_COST, tis([1, 10])) == 0

    def test_min_rmse_perfect_match(self):
        price = tis([1.0, 3.0, 2.0])
        target = upper_bound("UB2", price, TransactiveSignal([1.0, 2.0, 3.0], SignalKind.ITFS)).values
        cands = np.array([[2.0, 2.0, 3.0], target, [3.0, 2.0, 1.0]])
        assert select(cands, SelectionFunction.MIN_RMSE_UB2, price) == 1
        assert Selector(SelectionFunction.MIN_RMSE_UB2, price).scores(cands)[1] == pytest.approx(0, abs=1e-12)

    def test_branch_fixed_shifts_candidates(self):
        cands = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert select(cands, SelectionFunction.MIN_COST, tis([1, 2])) == 0
        assert select(cands, SelectionFunction.MIN_COST, tis([1, 2]), branch_fixed=[5.0, 5.0]) == 0

    def test_flat_price_rmse_ub2_fails(self):
        with pytest.raises(DegenerateIncentiveError):
            select(np.ones((2, 3)), SelectionFunction.MIN_RMSE_UB2, tis([2, 2, 2]))

    def test_parse(self):
        assert SelectionFunction.parse("MIN_COST") is SelectionFunction.MIN_COST
        with pytest.raises(ValueError):
            SelectionFunction.parse("max-profit")


def _random_tree(n, k, p, T, seed):
    rng = np.random.default_rng(seed)
    tree = build_tree(n, k)
    base = {a: rng.uniform(0.5, 3.0, T) for a in tree.nodes}
    plans = {a: np.stack([base[a]] + [rng.permutation(base[a]) for _ in range(p - 1)]) for a in tree.nodes}
    tree.attach_plans(plans)
    price = tis(rng.uniform(1.0, 10.0, T))
    return tree, plans, price


def _objective(fn, price, vec):
    vec = np.asarray(vec)
    if fn is SelectionFunction.MIN_COST:
        return float(vec @ price.values)
    ub = upper_bound(fn.bound_kind, price, TransactiveSignal(vec, SignalKind.ITFS)).values
    return math.sqrt(float(np.sum((vec - ub) ** 2)) / vec.size)


def _check_decisions_by_rescan(tree, plans, price, fn, result):
    children = {a: node.children for a, node in tree.nodes.items()}
    sel = result.selections
    T = price.horizon
    for a, node in tree.nodes.items():
        if node.is_leaf:
            continue
        aggs = []
        for c in node.children:
            below = subtree_selected_sum(children, plans, sel, c, T)
            aggs.append([[v + b for v, b in zip(plan, below)] for plan in plans[c].tolist()])
        combos = all_combinations(aggs)
        values = [_objective(fn, price, acc) for _, acc in combos]
        chosen = tuple(sel[c] for c in node.children)
        idx = [ch for ch, _ in combos].index(chosen)
        best = min(values)
        if fn is SelectionFunction.MIN_COST:
            assert values[idx] == best
            assert idx == values.index(best)
        else:
            assert values[idx] <= best * (1 + 1e-12) + 1e-12
    # root: own plans against everything else
    others = subtree_selected_sum(children, plans, sel, 1, T)
    own = [_objective(fn, price, [v + o for v, o in zip(plan, others)]) for plan in plans[1].tolist()]
    assert own[sel[1]] <= min(own) * (1 + 1e-12) + 1e-12


class TestRunEpos:
    def test_single_agent_picks_best_own_plan(self):
        tree = build_tree(1, 3)
        tree.attach_plans({1: np.array([[5.0, 1.0], [1.0, 5.0], [3.0, 3.0]])})
        res = run_epos(tree, SelectionFunction.MIN_COST, tis([10.0, 1.0]))
        assert res.selections == {1: 1}
        np.testing.assert_array_equal(res.etfs.values, [1.0, 5.0])
        assert res.etfs.kind is SignalKind.ETFS

    def test_four_agents_match_two_stage_brute_force(self):
        price = tis([1.0, 4.0, 2.0])
        plans = {
            1: np.array([[3.0, 1.0, 2.0], [1.0, 2.0, 3.0]]),
            2: np.array([[1.0, 5.0, 1.0], [5.0, 1.0, 1.0]]),
            3: np.array([[2.0, 2.0, 0.0], [0.0, 2.0, 2.0]]),
            4: np.array([[0.0, 3.0, 1.0], [1.0, 0.0, 3.0]]),
        }
        tree = build_tree(4, 3)
        tree.attach_plans(plans)
        res = run_epos(tree, SelectionFunction.MIN_COST, price)
        # stage 1: cheapest of the 2^3 child combinations; stage 2: root's best own plan
        best_children = min(
            itertools.product(range(2), repeat=3),
            key=lambda ch: sum(float(plans[c][j] @ price.values) for c, j in zip((2, 3, 4), ch)),
        )
        rest = sum(plans[c][j] for c, j in zip((2, 3, 4), best_children))
        root = min(range(2), key=lambda j: float((plans[1][j] + rest) @ price.values))
        assert res.selections == {1: root, 2: best_children[0], 3: best_children[1], 4: best_children[2]}
        np.testing.assert_allclose(res.etfs.values, plans[1][root] + rest)

    @pytest.mark.parametrize("fn", list(SelectionFunction))
    @pytest.mark.parametrize("n, k, p", [(13, 3, 3), (10, 2, 2), (7, 3, 2), (6, 1, 3)])
    def test_selection_optimality_rescan(self, fn, n, k, p):
        tree, plans, price = _random_tree(n, k, p, 6, seed=n * 100 + k * 10 + p)
        res = run_epos(tree, fn, price)
        _check_decisions_by_rescan(tree, plans, price, fn, res)

    @pytest.mark.parametrize("fn", list(SelectionFunction))
    def test_conservation_and_mean(self, fn):
        tree, plans, price = _random_tree(40, 3, 4, 24, seed=1)
        res = run_epos(tree, fn, price)
        selected = np.stack([plans[a][res.selections[a]] for a in sorted(plans)])
        np.testing.assert_allclose(res.etfs.values, selected.sum(axis=0), rtol=1e-14)
        seeds_total = sum(plans[a][0] for a in plans)
        assert abs(res.etfs.values.mean() - seeds_total.mean()) / seeds_total.mean() < 1e-9
        assert len(res.selections) == 40

    @pytest.mark.parametrize("fn", list(SelectionFunction))
    def test_parallel_levels_identical(self, fn):
        tree, _, price = _random_tree(40, 3, 4, 24, seed=2)
        a = run_epos(tree, fn, price, workers=1)
        b = run_epos(tree, fn, price, workers=8)
        assert a.selections == b.selections
        assert a.etfs.values.tobytes() == b.etfs.values.tobytes()

    def test_min_cost_scale_invariant(self):
        tree, _, price = _random_tree(13, 3, 3, 8, seed=3)
        a = run_epos(tree, SelectionFunction.MIN_COST, price).selections
        b = run_epos(tree, SelectionFunction.MIN_COST, tis(price.values * 37.5)).selections
        assert a == b

    def test_requires_plans(self):
        with pytest.raises(ProtocolViolationError):
            run_epos(build_tree(3, 2), SelectionFunction.MIN_COST, tis([1.0]))

    def test_budget_guard(self):
        tree, _, price = _random_tree(5, 4, 3, 4, seed=0)
        with pytest.raises(BudgetExceededError):
            run_epos(tree, SelectionFunction.MIN_COST, price, budget=80)


class TestAggregatePlanSet:
    def test_leaf(self):
        tree = build_tree(2, 1)
        plans = {1: np.ones((2, 3)), 2: np.arange(6.0).reshape(2, 3)}
        tree.attach_plans(plans)
        np.testing.assert_array_equal(aggregate_plan_set(tree, 2), plans[2])

    def test_with_selected_grandchild(self):
        tree = build_tree(3, 1)  # chain 1 -> 2 -> 3
        plans = {1: np.zeros((2, 2)), 2: np.array([[1.0, 2.0], [3.0, 4.0]]), 3: np.array([[1.0, 1.0], [9.0, 9.0]])}
        tree.attach_plans(plans)
        tree.nodes[3].select(0)
        np.testing.assert_array_equal(aggregate_plan_set(tree, 2), [[2, 3], [4, 5]])

    def test_unfixed_descendant(self):
        tree = build_tree(3, 1)
        tree.attach_plans({a: np.ones((2, 2)) for a in (1, 2, 3)})
        with pytest.raises(ProtocolViolationError):
            aggregate_plan_set(tree, 2)

    def test_three_level_branch_matches_recursion(self):
        tree, plans, price = _random_tree(13, 3, 3, 5, seed=8)
        res = run_epos(tree, SelectionFunction.MIN_COST, price)
        children = {a: node.children for a, node in tree.nodes.items()}
        for a in (1, 2, 3, 4):
            expected = subtree_selected_sum(children, plans, res.selections, a, 5)
            np.testing.assert_allclose(branch_sum(tree, a), expected, rtol=1e-14)
            np.testing.assert_allclose(aggregate_plan_set(tree, a), plans[a] + np.array(expected), rtol=1e-14)

    def test_double_selection_is_violation(self):
        tree = build_tree(1, 1)
        tree.attach_plans({1: np.ones((2, 2))})
        tree.root.select(0)
        with pytest.raises(ProtocolViolationError):
            tree.root.select(1)
