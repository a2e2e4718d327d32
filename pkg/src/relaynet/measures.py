"""Finite measures on partitions, step paths and the distances between them.

Everything here is piecewise constant on a finite partition of a window, or
atomic on a finite ground set. Under that restriction the supremum over
measurable sets in the total-variation norm is attained by the positive or the
negative part of the difference, so all norms are computed exactly.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .errors import StructureError

__all__ = [
    "Window",
    "Partition",
    "CellMeasure",
    "MarkedPointSet",
    "GriddedMeasure",
    "StepPath",
    "total_variation",
    "sup_norm",
    "prokhorov",
    "prokhorov_matrix",
    "modulus_of_continuity",
]


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[lower, upper]`` in ``R^d``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lower))
        hi = _frozen(np.atleast_1d(self.upper))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise StructureError("window bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("window must have finite extent")
        if np.any(hi <= lo):
            raise ValueError("window must have nonempty interior")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dimension: int = 1) -> "Window":
        return cls(np.zeros(dimension), np.ones(dimension))

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)


@dataclass(frozen=True)
class Partition:
    """Grid of boxes covering a window, with optional per-cell relay mass.

    Cells are the products of consecutive edges along each axis, enumerated in
    C order. ``relay_mass`` holds ``l_lambda(W_i)`` or ``mu_R(W_i)`` when the
    partition also carries the relay measure.
    """

    window: Window
    edges: tuple
    relay_mass: np.ndarray | None = None
    cell_side: float | None = None

    def __post_init__(self):
        if len(self.edges) != self.window.dimension:
            raise StructureError("one edge array per window axis is required")
        edges = []
        for axis, e in enumerate(self.edges):
            e = _frozen(e)
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise StructureError(f"edges along axis {axis} must be strictly increasing")
            if not (np.isclose(e[0], self.window.lower[axis]) and np.isclose(e[-1], self.window.upper[axis])):
                raise StructureError(f"edges along axis {axis} do not span the window")
            edges.append(e)
        object.__setattr__(self, "edges", tuple(edges))
        if self.relay_mass is not None:
            rm = _frozen(self.relay_mass)
            if rm.shape != (self.size,):
                raise StructureError(f"relay_mass needs {self.size} entries, got {rm.shape}")
            if np.any(rm < 0):
                raise ValueError("relay masses must be nonnegative")
            object.__setattr__(self, "relay_mass", rm)

    @classmethod
    def single(cls, window: Window, relay_mass=None) -> "Partition":
        edges = tuple(np.array([lo, hi]) for lo, hi in zip(window.lower, window.upper))
        rm = None if relay_mass is None else np.atleast_1d(relay_mass)
        return cls(window, edges, rm)

    @property
    def shape(self) -> tuple:
        return tuple(e.size - 1 for e in self.edges)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def _axis_grids(self, lo_or_hi: int):
        pick = [e[:-1] if lo_or_hi == 0 else e[1:] for e in self.edges]
        mesh = np.meshgrid(*pick, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def lower(self) -> np.ndarray:
        return self._axis_grids(0)

    @property
    def upper(self) -> np.ndarray:
        return self._axis_grids(1)

    @property
    def centroids(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.upper - self.lower, axis=1)

    def locate(self, points) -> np.ndarray:
        """Cell index of each point; points on interior edges go to the upper cell."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.window.dimension:
            raise StructureError("point dimension does not match the window")
        idx = []
        for axis, e in enumerate(self.edges):
            i = np.searchsorted(e, pts[:, axis], side="right") - 1
            idx.append(np.clip(i, 0, e.size - 2))
        return np.ravel_multi_index(tuple(idx), self.shape)

    def with_relay_mass(self, mass) -> "Partition":
        return Partition(self.window, self.edges, np.asarray(mass, dtype=float), self.cell_side)

    def same_cells(self, other: "Partition") -> bool:
        return len(self.edges) == len(other.edges) and all(
            a.shape == b.shape and np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(self.edges, other.edges)
        )

    def coarsening_map(self, coarse: "Partition") -> np.ndarray:
        """Index of the coarse cell containing each cell of ``self``.

        Raises if some fine cell straddles a coarse boundary.
        """
        owner = coarse.locate(self.centroids)
        lo, hi = coarse.lower[owner], coarse.upper[owner]
        tol = 1e-9 * np.max(self.window.upper - self.window.lower)
        if np.any(self.lower < lo - tol) or np.any(self.upper > hi + tol):
            raise StructureError("partition cells do not align with the coarse partition")
        return owner


@dataclass(frozen=True)
class CellMeasure:
    """Finite (possibly signed) measure with constant density on each cell."""

    partition: Partition
    mass: np.ndarray

    def __post_init__(self):
        m = _frozen(self.mass)
        if m.shape != (self.partition.size,):
            raise StructureError(f"expected {self.partition.size} cell masses, got {m.shape}")
        object.__setattr__(self, "mass", m)

    def to_json(self) -> str:
        cells = [[lo.tolist(), hi.tolist()] for lo, hi in zip(self.partition.lower, self.partition.upper)]
        return json.dumps({"cells": cells, "mass": self.mass.tolist()})

    @classmethod
    def from_json(cls, text: str, partition: Partition) -> "CellMeasure":
        obj = json.loads(text)
        cells = np.asarray(obj["cells"], dtype=float)
        if cells.shape[0] != partition.size or not np.allclose(cells[:, 0], partition.lower):
            raise StructureError("serialized cells do not match the partition")
        return cls(partition, np.asarray(obj["mass"], dtype=float))


def _as_masses(m1, m2):
    if isinstance(m1, CellMeasure) or isinstance(m2, CellMeasure):
        if not (isinstance(m1, CellMeasure) and isinstance(m2, CellMeasure)):
            raise StructureError("cannot compare a cell measure with a bare mass vector")
        if not m1.partition.same_cells(m2.partition):
            raise StructureError("measures live on different partitions")
        return np.asarray(m1.mass), np.asarray(m2.mass)
    a = np.asarray(m1, dtype=float)
    b = np.asarray(m2, dtype=float)
    if a.shape != b.shape:
        raise StructureError(f"mass vectors have shapes {a.shape} and {b.shape}")
    return a, b


def total_variation(m1, m2) -> float:
    """``max((m1-m2)^+(V), (m1-m2)^-(V))``, the sup over sets of ``|m1(A)-m2(A)|``."""
    a, b = _as_masses(m1, m2)
    d = (a - b).ravel()
    return float(max(d[d > 0].sum(), -d[d < 0].sum(), 0.0))


@dataclass(frozen=True)
class MarkedPointSet:
    """Weighted atoms ``(t_i, u_i, x_i)`` with an optional relay-cell target.

    Atoms are kept sorted by time; ties keep their insertion order.
    """

    times: np.ndarray
    marks: np.ndarray
    locations: np.ndarray
    weight: float
    t_final: float
    targets: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        u = np.asarray(self.marks, dtype=float).ravel()
        x = np.asarray(self.locations, dtype=float)
        if x.ndim == 1:
            x = x.reshape(t.size, -1) if t.size else x.reshape(0, 1)
        if not (t.size == u.size == x.shape[0]):
            raise StructureError("times, marks and locations must have one entry per atom")
        if not self.weight > 0:
            raise ValueError("atom weight must be positive")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if t.size and (t.min() < 0 or t.max() > self.t_final):
            raise ValueError("atom times must lie in [0, t_final]")
        if u.size and (u.min() < 0 or u.max() > 1):
            raise ValueError("choice marks must lie in [0, 1]")
        order = np.argsort(t, kind="stable")
        tg = None
        if self.targets is not None:
            tg = np.asarray(self.targets, dtype=np.int64).ravel()
            if tg.size != t.size:
                raise StructureError("one target per atom is required")
            tg = _frozen(tg[order], dtype=np.int64)
        object.__setattr__(self, "times", _frozen(t[order]))
        object.__setattr__(self, "marks", _frozen(u[order]))
        object.__setattr__(self, "locations", _frozen(x[order]))
        object.__setattr__(self, "targets", tg)
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "t_final", float(self.t_final))

    def __len__(self) -> int:
        return self.times.size

    @property
    def total_mass(self) -> float:
        return self.weight * len(self)

    def with_targets(self, targets) -> "MarkedPointSet":
        tg = np.broadcast_to(np.asarray(targets, dtype=np.int64), (len(self),))
        return MarkedPointSet(self.times, self.marks, self.locations, self.weight, self.t_final, tg)

    def subset(self, mask) -> "MarkedPointSet":
        mask = np.asarray(mask)
        return MarkedPointSet(
            self.times[mask],
            self.marks[mask],
            self.locations[mask],
            self.weight,
            self.t_final,
            None if self.targets is None else self.targets[mask],
        )

    @classmethod
    def concatenate(cls, parts: Sequence["MarkedPointSet"]) -> "MarkedPointSet":
        if not parts:
            raise StructureError("nothing to concatenate")
        w, tf = parts[0].weight, parts[0].t_final
        if any(p.weight != w or p.t_final != tf for p in parts):
            raise StructureError("point sets disagree on weight or horizon")
        have_targets = [p.targets is not None for p in parts]
        if any(have_targets) and not all(have_targets):
            raise StructureError("either all or none of the point sets carry targets")
        return cls(
            np.concatenate([p.times for p in parts]),
            np.concatenate([p.marks for p in parts]),
            np.concatenate([p.locations for p in parts]),
            w,
            tf,
            np.concatenate([p.targets for p in parts]) if all(have_targets) else None,
        )


@dataclass(frozen=True)
class GriddedMeasure:
    """Measure with constant density on each time x choice x space cell.

    ``mass`` has shape ``(n_time, n_choice, n_space)`` or, with a relay axis,
    ``(n_time, n_choice, n_space, n_relay)``.
    """

    time_grid: np.ndarray
    choice_grid: np.ndarray
    space: Partition
    mass: np.ndarray
    relay: Partition | None = None

    def __post_init__(self):
        tg = _frozen(self.time_grid)
        ug = _frozen(self.choice_grid)
        if tg.ndim != 1 or tg.size < 2 or np.any(np.diff(tg) <= 0) or tg[0] != 0:
            raise StructureError("time grid must be increasing knots starting at 0")
        if ug.ndim != 1 or ug.size < 2 or np.any(np.diff(ug) <= 0) or ug[0] != 0 or ug[-1] != 1:
            raise StructureError("choice grid must be increasing knots spanning [0, 1]")
        m = _frozen(self.mass)
        expected = (tg.size - 1, ug.size - 1, self.space.size)
        if self.relay is not None:
            expected = expected + (self.relay.size,)
        if m.shape != expected:
            raise StructureError(f"mass has shape {m.shape}, expected {expected}")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite and nonnegative")
        object.__setattr__(self, "time_grid", tg)
        object.__setattr__(self, "choice_grid", ug)
        object.__setattr__(self, "mass", m)

    @classmethod
    def product(cls, time_grid, time_mass, space: Partition, space_mass, choice_bins: int = 1) -> "GriddedMeasure":
        """``mu^t (x) U (x) mu^s`` with ``mu^t`` and ``mu^s`` given per cell."""
        tm = np.asarray(time_mass, dtype=float)
        sm = np.asarray(space_mass, dtype=float)
        tm = tm / tm.sum() if tm.sum() > 0 else tm
        ug = np.linspace(0.0, 1.0, choice_bins + 1)
        um = np.diff(ug)
        mass = tm[:, None, None] * um[None, :, None] * sm[None, None, :]
        return cls(np.asarray(time_grid, dtype=float), ug, space, mass)

    @classmethod
    def uniform(cls, t_final: float = 1.0, total: float = 1.0, space: Partition | None = None, choice_bins: int = 1):
        """Uniform time and choice marks, spatial mass proportional to volume."""
        space = space or Partition.single(Window.unit(1))
        vol = space.volumes
        return cls.product(np.array([0.0, t_final]), [1.0], space, total * vol / vol.sum(), choice_bins)

    @property
    def t_final(self) -> float:
        return float(self.time_grid[-1])

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def scaled(self, factor: float) -> "GriddedMeasure":
        return GriddedMeasure(self.time_grid, self.choice_grid, self.space, self.mass * factor, self.relay)

    def with_mass(self, mass) -> "GriddedMeasure":
        return GriddedMeasure(self.time_grid, self.choice_grid, self.space, mass, self.relay)

    def spatial_mass(self) -> np.ndarray:
        """Total mass per space cell (summed over any relay axis)."""
        m = self.mass.sum(axis=(0, 1))
        return m.sum(axis=-1) if self.relay is not None else m

    def cumulative_arrivals(self, times) -> np.ndarray:
        """``nu([0,t] x [0,1] x cell)`` for each requested t, shape ``(len(t), n_space)``.

        Mass inside a time cell accrues linearly in time.
        """
        t = np.atleast_1d(np.asarray(times, dtype=float))
        per_cell = self.mass.sum(axis=1)
        if self.relay is not None:
            per_cell = per_cell.sum(axis=-1)
        cum = np.vstack([np.zeros(per_cell.shape[1]), np.cumsum(per_cell, axis=0)])
        out = np.empty((t.size, per_cell.shape[1]))
        for j in range(per_cell.shape[1]):
            out[:, j] = np.interp(t, self.time_grid, cum[:, j])
        return out

    def block_masses(self, delta: float) -> np.ndarray:
        """Total mass of each time block ``((i-1) delta, i delta]``."""
        n = _block_count(self.t_final, delta)
        edges = np.linspace(0.0, self.t_final, n + 1)
        return np.diff(self.cumulative_arrivals(edges).sum(axis=1))


def _block_count(t_final: float, delta: float) -> int:
    if not delta > 0:
        raise ValueError("block length must be positive")
    ratio = t_final / delta
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"t_final/delta = {ratio} is not an integer")
    return n


@dataclass(frozen=True)
class StepPath:
    """Right-continuous piecewise-constant path of per-cell measures.

    ``values[i]`` holds on ``[times[i], times[i+1])``; ``times[0]`` is 0 and
    carries the initial value.
    """

    times: np.ndarray
    values: np.ndarray
    t_final: float
    increasing: bool = field(default=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.size == 0 or t[0] != 0:
            raise StructureError("step path must start with an event at time 0")
        if v.shape[0] != t.size:
            raise StructureError("one value row per event time is required")
        if np.any(np.diff(t) < 0) or t[-1] > self.t_final:
            raise StructureError("event times must be sorted inside [0, t_final]")
        inc = bool(np.all(np.diff(v, axis=0) >= -1e-15))
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "t_final", float(self.t_final))
        object.__setattr__(self, "increasing", inc)

    @classmethod
    def constant(cls, value, t_final: float) -> "StepPath":
        return cls(np.array([0.0]), np.atleast_2d(np.asarray(value, dtype=float)), t_final)

    @classmethod
    def from_increments(cls, times, cells, masses, n_cells: int, t_final: float) -> "StepPath":
        """Accumulate jumps ``masses[i]`` in ``cells[i]`` at ``times[i]``."""
        t = np.asarray(times, dtype=float).ravel()
        order = np.argsort(t, kind="stable")
        t = t[order]
        c = np.asarray(cells, dtype=np.int64).ravel()[order]
        m = np.broadcast_to(np.asarray(masses, dtype=float), t.shape)[order]
        jumps = np.zeros((t.size, n_cells))
        jumps[np.arange(t.size), c] = m
        values = np.vstack([np.zeros(n_cells), np.cumsum(jumps, axis=0)])
        return cls(np.concatenate([[0.0], t]), values, t_final)

    @property
    def n_cells(self) -> int:
        return self.values.shape[1]

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, None)]

    def left_limit(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="left") - 1
        return self.values[np.clip(idx, 0, None)]

    def total(self) -> "StepPath":
        return StepPath(self.times, self.values.sum(axis=1, keepdims=True), self.t_final)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "cell_index", "mass"])
        for t, row in zip(self.times, self.values):
            for j, m in enumerate(row):
                w.writerow([repr(float(t)), j, repr(float(m))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, t_final: float) -> "StepPath":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise StructureError("empty path file")
        times = np.array([float(r["time"]) for r in rows])
        cells = np.array([int(r["cell_index"]) for r in rows])
        mass = np.array([float(r["mass"]) for r in rows])
        k = cells.max() + 1
        if times.size % k:
            raise StructureError("path file must list every cell at every event")
        return cls(times[::k], mass.reshape(-1, k), t_final)


def sup_norm(p1: StepPath, p2: StepPath) -> float:
    """Supremum over time of the total-variation distance between two paths."""
    if abs(p1.t_final - p2.t_final) > 1e-12:
        raise StructureError("paths have different horizons")
    if p1.n_cells != p2.n_cells:
        raise StructureError("paths live on different partitions")
    grid = np.union1d(p1.times, p2.times)
    d = p1(grid) - p2(grid)
    pos = np.where(d > 0, d, 0).sum(axis=1)
    neg = -np.where(d < 0, d, 0).sum(axis=1)
    return float(np.max(np.maximum(pos, neg)))


def _max_deficiency(src, dst, adjacency) -> float:
    """``max_F src(F) - dst(N(F))`` via the max-flow dual (deficiency Hall theorem)."""
    total = float(src.sum())
    if total <= 0:
        return 0.0
    ii, jj = np.nonzero(adjacency & (src[:, None] > 0) & (dst[None, :] > 0))
    if ii.size == 0:
        return total
    n_src, n_dst = src.size, dst.size
    rows = np.concatenate([ii, n_src + jj])
    cols = np.concatenate([np.arange(ii.size), np.arange(ii.size)])
    a_ub = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n_src + n_dst, ii.size)).tocsr()
    b_ub = np.concatenate([src, dst])
    res = linprog(-np.ones(ii.size), A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"flow problem failed: {res.message}")
    return max(total + float(res.fun), 0.0)


def prokhorov(m1, m2, cell_centroids=None) -> float:
    """Prokhorov distance between nonnegative cell measures.

    Halos are unions of cells whose centroids lie within distance ``eps`` of
    the set. For a fixed halo graph the defining inequalities reduce to a
    transport deficiency, and the graph only changes at pairwise centroid
    distances, so the infimum over ``eps`` is found exactly by scanning those.
    """
    if isinstance(m1, CellMeasure):
        if cell_centroids is None:
            cell_centroids = m1.partition.centroids
    a, b = _as_masses(m1, m2)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("Prokhorov distance needs nonnegative measures")
    if cell_centroids is None:
        raise StructureError("cell centroids are required")
    c = np.asarray(cell_centroids, dtype=float).reshape(a.size, -1)
    dist = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(axis=2))
    levels = np.unique(np.round(dist.ravel(), 12))
    best = np.inf
    for d in levels:
        if d >= best:
            break
        adj = dist <= d + 1e-12
        defect = max(_max_deficiency(a, b, adj), _max_deficiency(b, a, adj))
        best = min(best, max(d, defect))
    return float(best)


def prokhorov_matrix(path: StepPath, cell_centroids) -> np.ndarray:
    """Pairwise Prokhorov distances between the values of a step path."""
    n = path.times.size
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if np.array_equal(path.values[i], path.values[j]):
                continue
            out[i, j] = out[j, i] = prokhorov(path.values[i], path.values[j], cell_centroids)
    return out


def modulus_of_continuity(path: StepPath, delta: float, cell_centroids=None) -> float:
    """Skorohod modulus ``w'_delta``: best partition of ``[0, t_f]`` with gaps > delta.

    Exact for step paths. A boundary placed exactly at an event time starts the
    next interval with the post-jump value; a boundary strictly between events
    ``e_j < s < e_{j+1}`` puts value ``j`` in both neighbouring intervals but can
    sit anywhere in that open slot. Feasibility of a cost level is decided by a
    forward pass tracking the earliest admissible position of each boundary
    type, and the optimum is the smallest feasible pairwise-distance level.
    """
    tf = path.t_final
    if not 0 < delta < tf:
        raise ValueError("delta must satisfy 0 < delta < t_final")
    if cell_centroids is None:
        cell_centroids = np.zeros((path.n_cells, 1))
    # values visible on [0, t_f): drop events at t_f and values hidden by ties
    keep = path.times < tf
    keep[:-1] &= path.times[:-1] != path.times[1:]
    times = path.times[keep]
    values = path.values[keep]
    m = times.size
    dmat = prokhorov_matrix(StepPath(times, values, tf), cell_centroids)
    diam = np.zeros((m, m))
    for i in range(m - 1, -1, -1):
        for j in range(i + 1, m):
            diam[i, j] = max(diam[i + 1, j], diam[i, j - 1], dmat[i, j])
    slot_end = np.append(times[1:], tf)

    def feasible(level: float) -> bool:
        # earliest[s]: infimum position of a boundary after which value s starts
        earliest = np.full(m, np.inf)
        earliest[0] = 0.0
        for s in range(m):
            q = earliest[s]
            if not np.isfinite(q):
                continue
            if diam[s, m - 1] <= level and tf > q + delta:
                return True
            for j in range(s + 1, m):
                if diam[s, j - 1] > level:
                    break
                if times[j] > q + delta:
                    earliest[j] = min(earliest[j], times[j])
                if diam[s, j] <= level:
                    lo = max(times[j], q + delta)
                    if lo < slot_end[j]:
                        earliest[j] = min(earliest[j], lo)
        return False

    levels = np.unique(np.concatenate([[0.0], dmat.ravel()]))
    lo, hi = 0, levels.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(levels[lo])
