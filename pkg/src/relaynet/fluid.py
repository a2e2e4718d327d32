"""Fluid-limit integral equations, their Euler approximation and frustration maps.

The driver ``nu`` is a :class:`GriddedMeasure`, so within a time cell its
density in the choice mark ``u`` is piecewise constant. For a path that is
linear on a solver step the integral ``int nu(ds, [beta_s, 1], W)`` over that
step is then an exact average of a piecewise linear tail function, which the
helpers below evaluate in closed form.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConsistencyError, ConvergenceError, StructureError
from .measures import GriddedMeasure, MarkedPointSet, Partition, StepPath, _block_count, sup_norm
from .simulator import simulate_threshold

__all__ = [
    "ScalarPath",
    "SolverReport",
    "EulerPair",
    "SpatialSolution",
    "apply_integral_operator",
    "solve_fixed_point",
    "busy_by_cell",
    "euler_two_step",
    "frustrated_path",
    "explicit_oracle",
    "solve_spatial",
    "euler_error",
    "euler_error_bound",
    "window_bound",
]


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    residual: float
    grid_size: int

    def to_json(self) -> str:
        return json.dumps({"iterations": self.iterations, "residual": self.residual, "grid_size": self.grid_size})


@dataclass(frozen=True)
class ScalarPath:
    """Scalar path sampled on knots, linear in between."""

    time_grid: np.ndarray
    values: np.ndarray
    report: SolverReport | None = field(default=None, compare=False)

    def __post_init__(self):
        t = np.array(self.time_grid, dtype=float, copy=True)
        v = np.array(self.values, dtype=float, copy=True)
        if t.ndim != 1 or v.shape != t.shape:
            raise StructureError("one value per knot is required")
        if t.size < 1 or np.any(np.diff(t) <= 0):
            raise StructureError("knots must be strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "time_grid", t)
        object.__setattr__(self, "values", v)

    @property
    def t_final(self) -> float:
        return float(self.time_grid[-1])

    def __call__(self, t):
        return np.interp(t, self.time_grid, self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "cell_index", "mass"])
        for t, v in zip(self.time_grid, self.values):
            w.writerow([repr(float(t)), 0, repr(float(v))])
        return buf.getvalue()


class _TailTables:
    """For each time cell and batch column: tail rate ``G(b)`` of marks above ``b``.

    ``K[a, c, j]`` is the arrival rate (per unit time) with mark above the
    choice knot ``c``; ``q[a, c, j]`` the rate density inside choice cell ``c``;
    ``H`` the antiderivative of ``G`` at the knots.
    """

    def __init__(self, time_grid, choice_grid, mass):
        # mass: (n_time, n_choice, n_batch)
        self.tg = np.asarray(time_grid, dtype=float)
        self.ug = np.asarray(choice_grid, dtype=float)
        dt = np.diff(self.tg)
        du = np.diff(self.ug)
        rate = mass / dt[:, None, None]
        tail = np.cumsum(rate[:, ::-1, :], axis=1)[:, ::-1, :]
        self.K = np.concatenate([tail, np.zeros_like(tail[:, :1, :])], axis=1)
        self.q = rate / du[None, :, None]
        steps = 0.5 * du[None, :, None] * (self.K[:, :-1, :] + self.K[:, 1:, :])
        self.H = np.concatenate([np.zeros_like(steps[:, :1, :]), np.cumsum(steps, axis=1)], axis=1)
        self.n_choice = du.size

    def _cell(self, b):
        return np.clip(np.searchsorted(self.ug, b, side="right") - 1, 0, self.n_choice - 1)

    def mean_tail(self, b0, b1, a_idx, cols=None):
        """Average of ``G`` along the segment from ``b0`` to ``b1`` (arrays ``(S, B)``)."""
        b0 = np.clip(b0, 0.0, 1.0)
        b1 = np.clip(b1, 0.0, 1.0)
        nb = b0.shape[1]
        cols = np.arange(nb)[None, :] if cols is None else cols[None, :]
        a = a_idx[:, None]
        if self.n_choice == 1:
            K0, q0 = self.K[a, 0, cols], self.q[a, 0, cols]
            return K0 - q0 * (0.5 * (b0 + b1))
        c0, c1 = self._cell(b0), self._cell(b1)
        u0 = self.ug[c0]
        mid = 0.5 * (b0 + b1)
        same = self.K[a, c0, cols] - self.q[a, c0, cols] * (mid - u0)
        if np.all(c0 == c1):
            return same
        cm = self._cell(mid)
        g_mid = self.K[a, cm, cols] - self.q[a, cm, cols] * (mid - self.ug[cm])

        def antider(b, c):
            x = b - self.ug[c]
            return self.H[a, c, cols] + self.K[a, c, cols] * x - 0.5 * self.q[a, c, cols] * x * x

        diff = b1 - b0
        with np.errstate(divide="ignore", invalid="ignore"):
            crossing = (antider(b1, c1) - antider(b0, c0)) / diff
        crossing = np.where(np.abs(diff) > 1e-7, crossing, g_mid)
        return np.where(c0 == c1, same, crossing)


def _batch_mass(nu: GriddedMeasure, mode: str) -> np.ndarray:
    m = nu.mass
    if mode == "total":
        return m.reshape(m.shape[0], m.shape[1], -1).sum(axis=2)[..., None]
    if mode == "space":
        return m.sum(axis=3) if nu.relay is not None else m
    if mode == "relay":
        if nu.relay is None:
            raise StructureError("driver carries no relay axis")
        return m.sum(axis=2)
    raise ValueError(mode)


def _solver_grid(nu: GriddedMeasure, n_steps: int, extra=None):
    """Uniform knots merged with the driver's time knots; time cell of each step."""
    base = np.linspace(0.0, nu.t_final, n_steps + 1)
    pieces = [base, nu.time_grid] + ([] if extra is None else [np.asarray(extra, dtype=float)])
    knots = np.unique(np.concatenate(pieces))
    keep = np.concatenate([[True], np.diff(knots) > 1e-12 * max(1.0, nu.t_final)])
    knots = knots[keep]
    knots[-1] = nu.t_final
    mid = 0.5 * (knots[:-1] + knots[1:])
    a_idx = np.clip(np.searchsorted(nu.time_grid, mid, side="right") - 1, 0, nu.time_grid.size - 2)
    return knots, a_idx


def _operator(tables: _TailTables, knots, a_idx, beta, relay) -> np.ndarray:
    """``T(beta)`` at the knots, batch columns independent; ``beta`` has shape ``(n_knots, B)``."""
    h = np.diff(knots)[:, None]
    safe = np.where(relay > 0, relay, 1.0)
    b = beta / safe[None, :]
    incr = h * tables.mean_tail(b[:-1], b[1:], a_idx)
    incr = np.where(relay[None, :] > 0, incr, 0.0)
    out = np.zeros_like(beta)
    np.cumsum(incr, axis=0, out=out[1:])
    return out


def _picard(tables, knots, a_idx, relay, tol, max_iter, initial):
    """Damped Picard iteration; stops once a half step would move the path by less than ``tol``.

    The test is made on the iterate that is returned, so its residual
    ``sup |beta - T(beta)|`` is below ``2 tol``.
    """
    beta = initial.copy()
    cap = np.maximum(relay, 0.0)[None, :]
    residual = np.inf
    for it in range(1, max_iter + 1):
        t_beta = _operator(tables, knots, a_idx, beta, relay)
        residual = float(np.max(np.abs(beta - t_beta)))
        if residual < 2 * tol:
            return beta, it, residual
        beta = np.clip(0.5 * (beta + t_beta), 0.0, cap)
    raise ConvergenceError(f"damped Picard did not converge in {max_iter} iterations", residual, max_iter)


def apply_integral_operator(nu: GriddedMeasure, beta: ScalarPath, relay_mass: float = 1.0) -> ScalarPath:
    """``t -> nu({(s, u): s <= t, u >= beta_s / r})`` evaluated on the knots of ``beta``.

    ``beta`` is taken linear between its knots; the driver's time knots are
    inserted so every step sees a single density.
    """
    knots = np.unique(np.concatenate([beta.time_grid, nu.time_grid[nu.time_grid <= beta.t_final]]))
    mid = 0.5 * (knots[:-1] + knots[1:])
    a_idx = np.clip(np.searchsorted(nu.time_grid, mid, side="right") - 1, 0, nu.time_grid.size - 2)
    tables = _TailTables(nu.time_grid, nu.choice_grid, _batch_mass(nu, "total"))
    vals = beta(knots)[:, None]
    out = _operator(tables, knots, a_idx, vals, np.array([float(relay_mass)]))[:, 0]
    pos = np.searchsorted(knots, beta.time_grid)
    return ScalarPath(beta.time_grid, out[pos])


def solve_fixed_point(nu: GriddedMeasure, tol: float = 1e-8, n_steps: int = 1000, max_iter: int = 10_000,
                      relay_mass: float = 1.0, initial: str | np.ndarray = "zero") -> ScalarPath:
    """Fixed point of ``beta = T_nu(beta)`` by damped Picard iteration.

    Parameters
    ----------
    nu : GriddedMeasure
        Absolutely continuous driver.
    tol : float
        Stop once an iteration moves the path by less than ``tol`` in sup norm.
    n_steps : int
        Uniform solver steps; the driver's own knots are merged in.
    relay_mass : float
        Normalized relay count ``r``; marks are compared with ``beta / r``.
    initial : {"zero", "cap"} or array
        Starting path. ``"cap"`` starts from ``min(r, arrivals)``.

    Returns
    -------
    ScalarPath
        The solution with a :class:`SolverReport` attached.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if relay_mass < 0:
        raise ValueError("relay mass must be nonnegative")
    knots, a_idx = _solver_grid(nu, n_steps)
    tables = _TailTables(nu.time_grid, nu.choice_grid, _batch_mass(nu, "total"))
    relay = np.array([float(relay_mass)])
    if isinstance(initial, str):
        if initial == "zero":
            start = np.zeros((knots.size, 1))
        elif initial == "cap":
            start = np.minimum(nu.cumulative_arrivals(knots).sum(axis=1), relay_mass)[:, None]
        else:
            raise ValueError(f"unknown initial path {initial!r}")
    else:
        start = np.asarray(initial, dtype=float).reshape(knots.size, 1)
    beta, iters, residual = _picard(tables, knots, a_idx, relay, tol, max_iter, start)
    return ScalarPath(knots, beta[:, 0], SolverReport(iters, residual, knots.size))


def busy_by_cell(nu: GriddedMeasure, beta: ScalarPath, relay_mass: float = 1.0) -> StepPath:
    """Per-space-cell busy mass ``int nu(ds, [beta_s / r, 1], dx)`` sampled at the knots of ``beta``."""
    knots = beta.time_grid
    if not np.all(np.isin(nu.time_grid, knots)):
        knots = np.unique(np.concatenate([knots, nu.time_grid]))
    mid = 0.5 * (knots[:-1] + knots[1:])
    a_idx = np.clip(np.searchsorted(nu.time_grid, mid, side="right") - 1, 0, nu.time_grid.size - 2)
    tables = _TailTables(nu.time_grid, nu.choice_grid, _batch_mass(nu, "space"))
    k = nu.space.size
    vals = np.repeat(beta(knots)[:, None], k, axis=1)
    out = _operator(tables, knots, a_idx, vals, np.full(k, float(relay_mass)))
    return StepPath(knots, out, nu.t_final)


@dataclass(frozen=True)
class EulerPair:
    """Blockwise over-count ``upper`` and restricted second pass ``lower``.

    ``upper_blocks[n-1]`` is the constant value of the upper path on block
    ``((n-1) delta, n delta]``. ``lower`` is a :class:`ScalarPath` for gridded
    drivers and a :class:`StepPath` (total mass) for empirical ones;
    ``lower_cells`` holds the per-cell version.
    """

    delta: float
    t_final: float
    upper_blocks: np.ndarray
    lower: ScalarPath | StepPath
    lower_cells: StepPath

    def upper(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        n = np.ceil(t / self.delta - 1e-12).astype(int)
        vals = np.concatenate([[0.0], self.upper_blocks])
        return vals[np.clip(n, 0, self.upper_blocks.size)]

    def lower_at(self, t) -> np.ndarray:
        if isinstance(self.lower, ScalarPath):
            return self.lower(t)
        return self.lower(t)[..., 0]


def euler_two_step(nu: GriddedMeasure | MarkedPointSet, delta: float, relay_mass: float = 1.0,
                   n_steps: int = 1000) -> EulerPair:
    """Two-step Euler scheme on blocks of length ``delta``.

    For block ``n`` the over-count adds the whole block mass to the lower value
    at the block start; the lower path then accrues only arrivals whose mark
    clears that over-count (divided by ``relay_mass``).
    """
    if isinstance(nu, MarkedPointSet):
        return _euler_empirical(nu, delta, relay_mass)
    n_blocks = _block_count(nu.t_final, delta)
    edges = np.linspace(0.0, nu.t_final, n_blocks + 1)
    knots, a_idx = _solver_grid(nu, n_steps, edges)
    block_of_step = np.clip(np.searchsorted(edges, 0.5 * (knots[:-1] + knots[1:]), side="right"), 1, n_blocks)
    tables = _TailTables(nu.time_grid, nu.choice_grid, _batch_mass(nu, "space"))
    block_mass = np.diff(nu.cumulative_arrivals(edges).sum(axis=1))
    k = nu.space.size
    h = np.diff(knots)
    lower = np.zeros((knots.size, k))
    upper = np.zeros(n_blocks)
    pos = 0
    for n in range(1, n_blocks + 1):
        start = lower[pos].sum()
        upper[n - 1] = start + block_mass[n - 1]
        steps = np.flatnonzero(block_of_step == n)
        if relay_mass > 0:
            b = np.full((steps.size, k), min(upper[n - 1] / relay_mass, 1.0))
            incr = h[steps, None] * tables.mean_tail(b, b, a_idx[steps])
        else:
            incr = np.zeros((steps.size, k))
        lower[steps + 1] = lower[pos] + np.cumsum(incr, axis=0)
        pos = steps[-1] + 1
    total = ScalarPath(knots, lower.sum(axis=1))
    return EulerPair(float(delta), nu.t_final, upper, total, StepPath(knots, lower, nu.t_final))


def _euler_empirical(points: MarkedPointSet, delta: float, relay_mass: float,
                     partition: Partition | None = None) -> EulerPair:
    n_blocks = _block_count(points.t_final, delta)
    w = points.weight
    capacity = relay_mass / w
    block = np.clip(np.ceil(points.times / delta - 1e-12).astype(int), 1, n_blocks)
    accepted = np.zeros(len(points), dtype=bool)
    upper = np.zeros(n_blocks)
    count = 0
    for n in range(1, n_blocks + 1):
        idx = np.flatnonzero(block == n)
        up_count = count + idx.size
        upper[n - 1] = up_count * w
        ok = points.marks[idx] * capacity >= up_count if capacity > 0 else np.zeros(idx.size, dtype=bool)
        accepted[idx] = ok
        count += int(ok.sum())
    cells = np.zeros(len(points), dtype=np.int64) if partition is None else partition.locate(points.locations)
    k = 1 if partition is None else partition.size
    lower_cells = StepPath.from_increments(points.times, cells, np.where(accepted, w, 0.0), k, points.t_final)
    return EulerPair(float(delta), points.t_final, upper, lower_cells.total(), lower_cells)


def euler_error(nu, pair: EulerPair, beta=None, relay_mass: float = 1.0) -> tuple[float, float]:
    """Return ``(max(lower - beta), sup |lower - beta|)`` for total masses.

    ``beta`` defaults to the fluid solution for gridded drivers and to the
    threshold dynamics for empirical ones.
    """
    if isinstance(nu, MarkedPointSet):
        if beta is None:
            beta = simulate_threshold(nu.with_targets(np.zeros(len(nu), dtype=np.int64)), [relay_mass]).busy.total()
        lower = pair.lower
        grid = np.union1d(lower.times, beta.times)
        d = lower(grid)[:, 0] - beta(grid)[:, 0]
        return float(d.max()), sup_norm(lower, beta)
    if beta is None:
        beta = solve_fixed_point(nu, relay_mass=relay_mass, n_steps=max(1000, pair.lower.time_grid.size))
    grid = np.union1d(pair.lower.time_grid, beta.time_grid)
    d = pair.lower(grid) - beta(grid)
    return float(d.max()), float(np.abs(d).max())


def euler_error_bound(nu, delta: float) -> float:
    """Twice the largest block mass."""
    if isinstance(nu, MarkedPointSet):
        n = _block_count(nu.t_final, delta)
        block = np.clip(np.ceil(nu.times / delta - 1e-12).astype(int), 1, n)
        return 2.0 * nu.weight * float(np.bincount(block, minlength=n + 1).max(initial=0))
    return 2.0 * float(nu.block_masses(delta).max())


def window_bound(nu: GriddedMeasure, pair: EulerPair, beta: ScalarPath, relay_mass: float = 1.0) -> float:
    """``int nu(dt, I_t, W)`` with ``I_t`` the mark window between ``beta_t`` and the over-count.

    On every solver step ``beta`` is linear and the over-count constant, so
    splitting the step where ``beta`` crosses a choice knot or the over-count
    leaves pieces on which the integrand is linear; each piece is integrated
    exactly.
    """
    knots = np.union1d(np.union1d(beta.time_grid, pair.lower.time_grid), nu.time_grid)
    knots = np.union1d(knots, np.linspace(0.0, pair.t_final, round(pair.t_final / pair.delta) + 1))
    mid = 0.5 * (knots[:-1] + knots[1:])
    a_idx = np.clip(np.searchsorted(nu.time_grid, mid, side="right") - 1, 0, nu.time_grid.size - 2)
    tables = _TailTables(nu.time_grid, nu.choice_grid, _batch_mass(nu, "total"))
    up = np.minimum(pair.upper(mid) / relay_mass, 1.0)
    b0 = np.minimum(beta(knots[:-1]) / relay_mass, 1.0)
    b1 = np.minimum(beta(knots[1:]) / relay_mass, 1.0)
    cuts = np.concatenate([np.broadcast_to(nu.choice_grid, (mid.size, nu.choice_grid.size)), up[:, None]], axis=1)
    span = b1 - b0
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = (cuts - b0[:, None]) / span[:, None]
    frac = np.where(np.isfinite(frac) & (frac > 0) & (frac < 1), frac, 1.0)
    frac = np.sort(np.concatenate([np.zeros((mid.size, 1)), frac, np.ones((mid.size, 1))], axis=1), axis=1)
    pts = b0[:, None] + frac * span[:, None]
    lo, hi = pts[:, :-1], pts[:, 1:]
    length = np.diff(frac, axis=1) * np.diff(knots)[:, None]
    rows = np.repeat(a_idx, lo.shape[1])
    g_path = tables.mean_tail(lo.reshape(-1, 1), hi.reshape(-1, 1), rows)[:, 0]
    ref = np.repeat(up, lo.shape[1])
    g_up = tables.mean_tail(ref[:, None], ref[:, None], rows)[:, 0]
    return float(np.sum(length.ravel() * np.abs(g_path - g_up)))


def frustrated_path(nu, beta) -> StepPath:
    """Per-cell arrivals minus per-cell busy mass.

    ``beta`` may be a fluid :class:`ScalarPath` (gridded ``nu``) or an
    :class:`EulerPair` (gridded or empirical ``nu``).
    """
    if isinstance(nu, MarkedPointSet):
        if not isinstance(beta, EulerPair):
            raise StructureError("empirical drivers need an EulerPair")
        busy = beta.lower_cells
        if busy.n_cells != 1:
            raise StructureError("empirical frustration is reported for the whole window")
        arrivals = StepPath.from_increments(nu.times, np.zeros(len(nu), dtype=np.int64), nu.weight, 1, nu.t_final)
        grid = np.union1d(busy.times, arrivals.times)
        out = StepPath(grid, arrivals(grid) - busy(grid), nu.t_final)
    else:
        busy = beta.lower_cells if isinstance(beta, EulerPair) else busy_by_cell(nu, beta)
        arrivals = nu.cumulative_arrivals(busy.times)
        out = StepPath(busy.times, arrivals - busy.values, nu.t_final)
    if out.values.min(initial=0.0) < -1e-12:
        raise ConsistencyError(f"negative frustrated mass {out.values.min():.3e}")
    return StepPath(out.times, np.maximum(out.values, 0.0), out.t_final)


def explicit_oracle(time_cdf: Callable | np.ndarray, spatial_mass: float, time_grid=None) -> ScalarPath:
    """Closed-form fluid factor ``(1 - exp(-m F(t))) / m`` for a uniform-mark driver.

    Here ``F`` is the time CDF and ``m`` the spatial mass; the total busy mass
    is ``m`` times the returned value.
    """
    if not spatial_mass > 0:
        raise ValueError("spatial mass must be positive")
    if callable(time_cdf):
        grid = np.linspace(0.0, 1.0, 1001) if time_grid is None else np.asarray(time_grid, dtype=float)
        f = np.asarray(time_cdf(grid), dtype=float)
    else:
        f = np.asarray(time_cdf, dtype=float)
        grid = np.linspace(0.0, 1.0, f.size) if time_grid is None else np.asarray(time_grid, dtype=float)
    return ScalarPath(grid, -np.expm1(-spatial_mass * f) / spatial_mass)


@dataclass(frozen=True)
class SpatialSolution:
    """Per-relay-cell scalar solutions of the measure-valued equation.

    ``beta[:, j]`` is the busy mass of relay cell ``j`` per unit relay mass.
    """

    driver: GriddedMeasure
    relay_mass: np.ndarray
    knots: np.ndarray
    beta: np.ndarray
    report: SolverReport

    def busy(self, x_groups=None, y_groups=None, chunk: int = 256) -> np.ndarray:
        """``b_t(X_g, Y_h)`` at every knot, shape ``(n_knots, n_x_groups, n_y_groups)``."""
        nu = self.driver
        nx, ny = nu.space.size, nu.relay.size
        xg = np.zeros(nx, dtype=np.int64) if x_groups is None else np.asarray(x_groups)
        yg = np.zeros(ny, dtype=np.int64) if y_groups is None else np.asarray(y_groups)
        gx, gy = int(xg.max()) + 1, int(yg.max()) + 1
        mass = np.zeros(nu.mass.shape[:2] + (gx, ny))
        np.add.at(np.moveaxis(mass, 2, 0), xg, np.moveaxis(nu.mass, 2, 0))
        mid = 0.5 * (self.knots[:-1] + self.knots[1:])
        a_idx = np.clip(np.searchsorted(nu.time_grid, mid, side="right") - 1, 0, nu.time_grid.size - 2)
        h = np.diff(self.knots)[:, None]
        out = np.zeros((self.knots.size, gx, gy))
        for lo in range(0, ny, chunk):
            cols = np.arange(lo, min(ny, lo + chunk))
            block = mass[..., cols].reshape(mass.shape[0], mass.shape[1], -1)
            tables = _TailTables(nu.time_grid, nu.choice_grid, block)
            b = np.repeat(self.beta[:, cols][:, None, :], gx, axis=1).reshape(self.knots.size, -1)
            incr = h * tables.mean_tail(b[:-1], b[1:], a_idx)
            dead = np.repeat((self.relay_mass[cols] <= 0)[None, :], gx, axis=0).ravel()
            incr[:, dead] = 0.0
            cum = np.zeros((self.knots.size, gx, cols.size))
            cum[1:] = np.cumsum(incr, axis=0).reshape(-1, gx, cols.size)
            for g in range(gy):
                sel = yg[cols] == g
                if sel.any():
                    out[:, :, g] += cum[:, :, sel].sum(axis=2)
        return out

    def frustrated(self, x_groups=None) -> np.ndarray:
        """``gamma_t(X_g)`` at every knot: arrivals minus busy mass over all relays."""
        nu = self.driver
        xg = np.zeros(nu.space.size, dtype=np.int64) if x_groups is None else np.asarray(x_groups)
        arrivals = nu.cumulative_arrivals(self.knots)
        arr = np.zeros((self.knots.size, int(xg.max()) + 1))
        np.add.at(arr.T, xg, arrivals.T)
        gamma = arr - self.busy(xg).sum(axis=2)
        if gamma.min(initial=0.0) < -1e-12:
            raise ConsistencyError("negative frustrated mass")
        return np.maximum(gamma, 0.0)


def solve_spatial(driver: GriddedMeasure, relay_mass=None, partition: Partition | None = None,
                  tol: float = 1e-8, n_steps: int = 1000, max_iter: int = 10_000) -> SpatialSolution:
    """Solve one scalar fixed point per relay cell of a driver with a relay axis.

    ``driver.mass[..., j]`` is the request mass aimed at relay cell ``j`` and
    ``relay_mass[j]`` that cell's relay mass. The busy mass of cell ``j`` per
    unit relay mass solves the scalar equation with driver
    ``mass[..., j] / relay_mass[j]``; a cell without relays stays idle and
    frustrates all of its requests. ``partition`` is accepted for callers that
    keep the relay masses on it.
    """
    if driver.relay is None:
        raise StructureError("spatial solve needs a driver with a relay axis")
    if relay_mass is None:
        source = partition if partition is not None and partition.relay_mass is not None else driver.relay
        if source.relay_mass is None:
            raise StructureError("relay masses are required")
        relay_mass = source.relay_mass
    rm = np.asarray(relay_mass, dtype=float)
    if rm.shape != (driver.relay.size,):
        raise StructureError("one relay mass per relay cell is required")
    knots, a_idx = _solver_grid(driver, n_steps)
    per_relay = _batch_mass(driver, "relay")
    safe = np.where(rm > 0, rm, 1.0)
    tables = _TailTables(driver.time_grid, driver.choice_grid, per_relay / safe[None, None, :])
    unit = np.where(rm > 0, 1.0, 0.0)
    beta, iters, residual = _picard(tables, knots, a_idx, unit, tol, max_iter, np.zeros((knots.size, rm.size)))
    return SpatialSolution(driver, rm, knots, beta, SolverReport(iters, residual, knots.size))
