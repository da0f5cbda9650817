"""Independent reference computations used as test oracles.

Deliberately naive: plain Python loops, Fractions, mpmath.  Nothing here
imports the code under test.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

import mpmath


def exact_mean(values):
    fr = [Fraction(v) for v in values]
    return sum(fr) / len(fr)


def exact_stats(values, dps=50):
    """(mean, population std, entropy bits) at high precision."""
    with mpmath.workdps(dps):
        fr = [Fraction(v) for v in values]
        mu = sum(fr) / len(fr)
        var = sum((v - mu) ** 2 for v in fr) / len(fr)
        total = sum(fr)
        h = mpmath.mpf(0)
        for v in fr:
            if v:
                p = mpmath.mpf(v.numerator) / v.denominator / (mpmath.mpf(total.numerator) / total.denominator)
                h -= p * mpmath.log(p, 2)
        return float(mpmath.mpf(mu.numerator) / mu.denominator), float(mpmath.sqrt(mpmath.mpf(var.numerator) / var.denominator)), float(h)


def entropy_bits(values):
    total = sum(values)
    h = 0.0
    for v in values:
        if v > 0:
            p = v / total
            h -= p * mpmath.log(p, 2)
    return float(h)


def displacement(seed, other):
    """Sum |t - t_hat|, pairing equal values in ascending position order."""
    positions = {}
    for t, v in enumerate(other):
        positions.setdefault(v, []).append(t)
    used = {v: 0 for v in positions}
    total = 0
    for t, v in enumerate(seed):
        t_hat = positions[v][used[v]]
        used[v] += 1
        total += abs(t - t_hat)
    return total


def pearson_loop(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    return sxy / (sxx * syy) ** 0.5


def subtree_selected_sum(children, plans, selections, node, horizon):
    """Recursive sum of selected plans strictly below ``node``."""
    total = [0.0] * horizon
    for c in children.get(node, []):
        sel = plans[c][selections[c]]
        below = subtree_selected_sum(children, plans, selections, c, horizon)
        total = [a + (s + b) for a, s, b in zip(total, sel, below)]
    return total


def all_combinations(aggregates):
    """Element-wise sums of one row per aggregate, lexicographic, left-fold order."""
    out = []
    for choice in itertools.product(*[range(len(a)) for a in aggregates]):
        acc = list(aggregates[0][choice[0]])
        for agg, j in zip(aggregates[1:], choice[1:]):
            acc = [a + b for a, b in zip(acc, agg[j])]
        out.append((choice, acc))
    return out
