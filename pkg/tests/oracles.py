"""Independent reference computations shared by the unit and acceptance tests."""
from itertools import combinations_with_replacement

import numpy as np
from scipy.integrate import quad


def _h(x, y):
    if x == 0:
        return y
    if y <= 0:
        return np.inf
    return x * np.log(x / y) - x + y


def segment_cost_zero_target(a, b, length):
    """Cost of a linear busy segment from ``a`` to ``b`` while nothing is frustrated."""
    v = (b - a) / length
    if v < 0:
        return np.inf
    def integrand(s):
        beta = a + v * s
        return _h(v, max(1.0 - beta, 0.0)) + beta

    val, _ = quad(integrand, 0.0, length, limit=200)
    return val


def zero_target_grid_oracle(levels: int, segments: int, t_final: float = 1.0):
    """Min-plus recursion over monotone knot values ``{0, 1/levels, ..., 1}``."""
    s = np.arange(levels + 1) / levels
    dt = t_final / segments
    cost = np.full((levels + 1, levels + 1), np.inf)
    for i in range(levels + 1):
        for j in range(i, levels + 1):
            cost[i, j] = segment_cost_zero_target(s[i], s[j], dt)
    value = np.full(levels + 1, np.inf)
    value[0] = 0.0
    for _ in range(segments):
        value = np.min(value[:, None] + cost, axis=0)
    return float(value.min()), cost


def zero_target_enumeration(levels: int, segments: int, t_final: float = 1.0):
    """Exhaustive enumeration of all monotone knot sequences (small grids only)."""
    _, cost = zero_target_grid_oracle(levels, segments, t_final)
    seqs = np.array(list(combinations_with_replacement(range(levels + 1), segments)))
    start = np.zeros((seqs.shape[0], 1), dtype=int)
    knots = np.hstack([start, seqs])
    total = cost[knots[:, :-1], knots[:, 1:]].sum(axis=1)
    return float(total.min())
