"""Independent reference implementations shared by the tests."""

import itertools
import math

import numpy as np


def numeric_grad(f, params, h=1e-6):
    """Central differences of scalar ``f()`` w.r.t. each array in ``params``."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            keep = p[i]
            p[i] = keep + h
            up = f()
            p[i] = keep - h
            down = f()
            p[i] = keep
            g[i] = (up - down) / (2.0 * h)
        out.append(g)
    return out


def rel_err(a, b):
    """Norm-wise relative error, safe when both are zero."""
    a, b = np.ravel(a), np.ravel(b)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def brute_force_assignment(cost):
    """Minimum total cost over all injective row->column maps (n_rows <= n_cols)."""
    cost = np.asarray(cost, dtype=np.float64)
    n_rows, n_cols = cost.shape
    best = math.inf
    for cols in itertools.permutations(range(n_cols), n_rows):
        best = min(best, sum(cost[i, j] for i, j in enumerate(cols)))
    return best


def loop_contingency(pred, truth):
    ps = sorted(set(pred))
    ts = sorted(set(truth))
    table = [[0] * len(ts) for _ in ps]
    for a, b in zip(pred, truth):
        table[ps.index(a)][ts.index(b)] += 1
    return table, ps, ts


def loop_nmi(pred, truth):
    table, _, _ = loop_contingency(pred, truth)
    n = float(len(pred))
    rows = [sum(r) for r in table]
    cols = [sum(table[i][j] for i in range(len(table))) for j in range(len(table[0]))]

    def entropy(counts):
        return -sum(c / n * math.log(c / n) for c in counts if c)

    h_p, h_t = entropy(rows), entropy(cols)
    if h_p == 0.0 or h_t == 0.0:
        return 1.0 if h_p == h_t else 0.0
    mi = 0.0
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            nij = table[i][j]
            if nij:
                mi += nij / n * math.log(n * nij / (r * c))
    return mi / ((h_p + h_t) / 2.0)


def loop_rand_pairs(pred, truth):
    """Pair counts by explicit enumeration of every unordered pair."""
    both = same_p = same_t = 0
    for i in range(len(pred)):
        for j in range(i + 1, len(pred)):
            sp = pred[i] == pred[j]
            st = truth[i] == truth[j]
            same_p += sp
            same_t += st
            both += sp and st
    return both, same_p, same_t


def loop_ari(pred, truth):
    both, same_p, same_t = loop_rand_pairs(pred, truth)
    n = len(pred)
    total = n * (n - 1) / 2.0
    expected = same_p * same_t / total
    max_index = (same_p + same_t) / 2.0
    if max_index == expected:
        return 1.0 if both == expected else 0.0
    return (both - expected) / (max_index - expected)


def loop_acc(pred, truth):
    """Best accuracy over every cluster->class injection, by enumeration."""
    ps = sorted(set(pred))
    ts = sorted(set(truth))
    best = 0
    width = max(len(ps), len(ts))
    padded = ts + [None] * (width - len(ts))
    for perm in itertools.permutations(padded, len(ps)):
        mapping = dict(zip(ps, perm))
        best = max(best, sum(1 for a, b in zip(pred, truth) if mapping[a] == b))
    return best / len(pred)
