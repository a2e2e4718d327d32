"""Entropy costs and the scalar large-deviation rate of frustration paths.

For a unit-intensity uniform arrival stream the rate of a frustration path
``gamma`` is

    I(gamma) = inf_beta  int h(beta' | 1 - beta) + h(gamma' | beta) dt,

with ``h(x|y) = x log(x/y) - x + y``. For ``beta`` and ``gamma`` piecewise
linear on a uniform grid the integral has an exact finite form. Writing
``phi(y) = y log y - y``, ``psi = phi`` on slopes, ``v_n`` and ``w_n`` for the
slopes of ``beta`` and ``gamma`` on step ``n`` and ``Lm(a, b)`` for the mean of
``log`` over the segment ``[a, b]``:

    J = t_f + 1 + phi(1 - beta_T) + sum_n dt [psi(v_n) + psi(w_n) - w_n Lm(beta_n, beta_{n+1})].

``J`` is convex in the knots of ``beta``, which makes both a grid dynamic
program and a bounded quasi-Newton polish reliable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, StructureError
from .measures import GriddedMeasure

__all__ = [
    "entropy_pair",
    "relative_entropy",
    "segment_log_mean",
    "path_cost",
    "RatePath",
    "scalar_rate_dp",
    "EventRate",
    "event_rate",
    "ldp_slope",
]

SENTINEL = 1e12


def entropy_pair(x, y):
    """``h(x|y) = x log(x/y) - x + y`` with the limits ``h(0|y) = y`` and ``h(x|0) = inf``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y < 0):
        raise ValueError("entropy_pair needs nonnegative arguments")
    with np.errstate(divide="ignore", invalid="ignore"):
        val = x * np.log(x / y) - x + y
    val = np.where(x == 0, y, val)
    val = np.where((x > 0) & (y == 0), np.inf, val)
    return float(val) if val.ndim == 0 else val


def relative_entropy(nu: GriddedMeasure, mu: GriddedMeasure) -> float:
    """Cellwise relative entropy of two gridded measures on identical grids."""
    if nu.mass.shape != mu.mass.shape or not (
        np.array_equal(nu.time_grid, mu.time_grid) and np.array_equal(nu.choice_grid, mu.choice_grid)
    ):
        raise StructureError("relative entropy needs common grids")
    return float(np.sum(entropy_pair(nu.mass, mu.mass)))


def _xlogx(y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0)), 0.0)


def _phi(y):
    return _xlogx(y) - y


def segment_log_mean(a, b):
    """Mean of ``log`` over the segment between ``a`` and ``b`` (``-inf`` if both are 0)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    half = 0.5 * np.abs(b - a)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(mid > 0, half / np.where(mid > 0, mid, 1.0), 0.0)
        exact = (_phi(b) - _phi(a)) / (b - a)
        series = np.log(mid) - r * r / 6.0 - r ** 4 / 20.0
    out = np.where(r < 1e-3, series, exact)
    return np.where(mid > 0, out, -np.inf)


def _log_mean_grad(a, b):
    """Partial derivatives of :func:`segment_log_mean` in ``a`` and ``b`` (interior points)."""
    mid = 0.5 * (a + b)
    d = b - a
    r = 0.5 * d / mid
    small = np.abs(r) < 1e-3
    lm = segment_log_mean(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ga = (lm - np.log(a)) / d
        gb = (np.log(b) - lm) / d
    c = r / 3.0 + r ** 3 / 5.0
    ga_s = (1.0 + c * (1.0 + r)) / (2.0 * mid)
    gb_s = (1.0 - c * (1.0 - r)) / (2.0 * mid)
    return np.where(small, ga_s, ga), np.where(small, gb_s, gb)


def _psi(v):
    return _phi(v)


def path_cost(beta, gamma, t_final: float = 1.0) -> float:
    """Exact rate integral for piecewise-linear ``beta`` and ``gamma`` on a uniform grid."""
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if beta.shape != gamma.shape or beta.ndim != 1 or beta.size < 2:
        raise StructureError("beta and gamma must share a grid of at least two knots")
    dt = t_final / (beta.size - 1)
    v = np.diff(beta) / dt
    w = np.diff(gamma) / dt
    if np.any(v < -1e-15) or np.any(w < -1e-15) or beta[0] != 0 or beta[-1] > 1:
        return np.inf
    v, w = np.maximum(v, 0), np.maximum(w, 0)
    lm = segment_log_mean(beta[:-1], beta[1:])
    if np.any((w > 0) & ~np.isfinite(lm)):
        return np.inf
    cross = np.where(w > 0, w * np.where(np.isfinite(lm), lm, 0.0), 0.0)
    return float(t_final + 1.0 + _phi(1.0 - beta[-1]) + dt * np.sum(_psi(v) + _psi(w) - cross))


@dataclass(frozen=True)
class RatePath:
    """Result of a scalar rate computation."""

    time_grid: np.ndarray
    target: np.ndarray
    beta: np.ndarray
    value: float
    dp_value: float
    grid: tuple
    infinite: bool

    def to_json(self) -> str:
        rows = "\n".join(f"{t!r},{b!r}" for t, b in zip(self.time_grid.tolist(), self.beta.tolist()))
        return json.dumps({
            "value": None if self.infinite else self.value,
            "infinite": self.infinite,
            "dp_value": None if self.infinite else self.dp_value,
            "grid": {"beta_states": self.grid[0], "time_steps": self.grid[1]},
            "argmin_path_csv": "time,beta\n" + rows + "\n",
        })


def _target_on_grid(target, time_steps: int, t_final: float) -> np.ndarray:
    grid = np.linspace(0.0, t_final, time_steps + 1)
    if callable(target):
        g = np.asarray(target(grid), dtype=float)
    else:
        g = np.asarray(target, dtype=float).ravel()
        if g.size != time_steps + 1:
            raise StructureError(f"target needs {time_steps + 1} knots, got {g.size}")
    if abs(g[0]) > 1e-12:
        raise ValueError("target must start at 0")
    if np.any(np.diff(g) < -1e-12):
        raise ValueError("target must be nondecreasing")
    return np.maximum.accumulate(np.maximum(g, 0.0))


def _grid_dp(w, states: int, dt: float, t_final: float):
    s = np.linspace(0.0, 1.0, states + 1)
    a, b = s[:, None], s[None, :]
    allowed = b >= a
    slope = np.where(allowed, (b - a) / dt, 0.0)
    move = np.where(allowed, dt * _psi(slope), np.inf)
    lm = segment_log_mean(np.broadcast_to(a, move.shape), np.broadcast_to(b, move.shape))
    lm_fin = np.where(np.isfinite(lm), lm, 0.0)
    value = np.full(states + 1, np.inf)
    value[0] = 0.0
    parents = np.zeros((w.size, states + 1), dtype=np.int64)
    for n, wn in enumerate(w):
        step = move + dt * _psi(wn)
        if wn > 0:
            step = step - dt * wn * lm_fin + np.where(np.isfinite(lm), 0.0, SENTINEL)
        total = value[:, None] + step
        parents[n] = np.argmin(total, axis=0)
        value = total[parents[n], np.arange(states + 1)]
    final = value + t_final + 1.0 + _phi(1.0 - s)
    j = int(np.argmin(final))
    path = np.empty(w.size + 1, dtype=np.int64)
    path[-1] = j
    for n in range(w.size - 1, -1, -1):
        path[n] = parents[n, path[n + 1]]
    return float(final[j]), s[path]


def _polish(beta0, gamma, t_final: float):
    """Minimize the exact cost over knot increments with L-BFGS-B."""
    m = gamma.size - 1
    dt = t_final / m
    w = np.diff(gamma) / dt
    active = w > 0
    z0 = 1e-9

    def objective(d):
        beta = np.concatenate([[0.0], np.cumsum(d)])
        v = d / dt
        a, b = beta[:-1], beta[1:]
        lm = segment_log_mean(a, b)
        cross = np.where(active, w * np.where(np.isfinite(lm), lm, -1e300), 0.0)
        end = 1.0 - beta[-1]
        if end >= z0:
            term, dterm = _phi(end), -np.log(end)
        else:
            term = _phi(z0) + np.log(z0) * (end - z0) + (end - z0) ** 2 / (2 * z0)
            dterm = -(np.log(z0) + (end - z0) / z0)
        f = t_final + 1.0 + float(term) + dt * float(np.sum(_psi(v) + _psi(w) - cross))
        # gradient in knot values, then back to increments
        g_beta = np.zeros(m + 1)
        logv = np.log(np.maximum(v, 1e-300))
        g_beta[1:] += logv
        g_beta[:-1] -= logv
        ga, gb = _log_mean_grad(np.maximum(a, 1e-300), np.maximum(b, 1e-300))
        coef = np.where(active, -dt * w, 0.0)
        g_beta[:-1] += np.where(active, coef * ga, 0.0)
        g_beta[1:] += np.where(active, coef * gb, 0.0)
        g_beta[-1] += dterm
        grad = np.cumsum(g_beta[::-1])[::-1][1:]
        return f, grad

    lower = np.zeros(m)
    if active.any():
        lower[0] = 1e-12
    d0 = np.maximum(np.diff(beta0), lower)
    res = minimize(objective, d0, jac=True, method="L-BFGS-B", bounds=list(zip(lower, np.ones(m))),
                   options={"maxiter": 20000, "maxfun": 50000, "ftol": 1e-15, "gtol": 1e-10})
    beta = np.concatenate([[0.0], np.cumsum(res.x)])
    return path_cost(beta, gamma, t_final), beta


def scalar_rate_dp(target, states: int = 400, time_steps: int = 400, t_final: float = 1.0,
                   polish: bool = True) -> RatePath:
    """Scalar rate of a frustration target.

    A dynamic program over ``beta`` in ``{0, 1/states, ..., 1}`` with the exact
    per-step cost gives a global grid minimizer; when ``polish`` is set the
    knots are then freed from the state grid and the convex cost minimized
    continuously from that start.

    Parameters
    ----------
    target : array or callable
        Frustration path ``gamma``, sampled on ``time_steps + 1`` uniform knots.
    states, time_steps : int
        Sizes of the ``beta`` grid and the time grid.
    """
    gamma = _target_on_grid(target, time_steps, t_final)
    dt = t_final / time_steps
    w = np.diff(gamma) / dt
    dp_value, beta = _grid_dp(w, states, dt, t_final)
    grid = np.linspace(0.0, t_final, time_steps + 1)
    if dp_value >= SENTINEL / 2:
        return RatePath(grid, gamma, beta, np.inf, np.inf, (states, time_steps), True)
    value = dp_value
    if polish:
        polished, beta_p = _polish(beta, gamma, t_final)
        if polished < value:
            value, beta = polished, beta_p
    return RatePath(grid, gamma, beta, value, dp_value, (states, time_steps), False)


@dataclass(frozen=True)
class EventRate:
    """Infimum of the rate over ``{gamma: gamma_T >= level}`` and its minimizer."""

    level: float
    value: float
    beta: np.ndarray
    gamma: np.ndarray
    time_grid: np.ndarray


def event_rate(level: float, time_steps: int = 400, t_final: float = 1.0) -> EventRate:
    """Rate of the event that the final frustrated mass is at least ``level``.

    For fixed ``beta`` the cheapest ``gamma`` reaching ``c`` has slope
    proportional to ``beta`` and costs ``h(c | int beta)``, so the problem
    reduces to a convex program in ``beta`` alone.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    m = time_steps
    dt = t_final / m
    grid = np.linspace(0.0, t_final, m + 1)

    def objective(d):
        beta = np.concatenate([[0.0], np.cumsum(d)])
        v = d / dt
        area = dt * (beta.sum() - 0.5 * beta[-1])
        end = max(1.0 - beta[-1], 1e-300)
        f = float(dt * np.sum(_psi(v)) + _phi(end) + 1.0 + t_final - area)
        g_beta = np.zeros(m + 1)
        logv = np.log(np.maximum(v, 1e-300))
        g_beta[1:] += logv
        g_beta[:-1] -= logv
        g_beta[-1] += -np.log(end)
        d_area = np.full(m + 1, dt)
        d_area[0] = 0.0
        d_area[-1] = 0.5 * dt
        g_beta -= d_area
        if area < level:
            f += float(entropy_pair(level, max(area, 1e-300)))
            g_beta += (1.0 - level / max(area, 1e-300)) * d_area
        return f, np.cumsum(g_beta[::-1])[::-1][1:]

    fluid = -np.expm1(-grid)
    d0 = np.maximum(np.diff(fluid), 1e-12)
    bounds = [(1e-12, 1.0)] * m
    res = minimize(objective, d0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 20000, "maxfun": 50000, "ftol": 1e-15, "gtol": 1e-10})
    if not np.isfinite(res.fun):
        raise ConvergenceError("event rate optimization failed", np.nan, int(res.nit))
    beta = np.concatenate([[0.0], np.cumsum(res.x)])
    area = dt * (beta.sum() - 0.5 * beta[-1])
    reach = max(level, area)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (beta[:-1] + beta[1:]))])
    gamma = reach * cum / area
    return EventRate(float(level), float(res.fun), beta, gamma, grid)


def ldp_slope(lams, p_hat) -> float:
    """Least-squares slope of ``-log p`` against ``lambda``."""
    lam = np.asarray(lams, dtype=float)
    p = np.asarray(p_hat, dtype=float)
    if lam.shape != p.shape or lam.size < 2:
        raise ValueError("need at least two (lambda, p) pairs")
    if np.any(np.diff(lam) <= 0):
        raise ValueError("lambda grid must be increasing")
    if np.any(~(p > 0)):
        raise ValueError("every probability must be positive; add replicas or use a smaller event")
    if np.any(p > 1):
        raise ValueError("probabilities cannot exceed 1")
    slope, _ = np.polyfit(lam, -np.log(p), 1)
    return float(slope)
