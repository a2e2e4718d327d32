"""Finite-lambda relay network: Poisson transmitters, relay choice and thresholds.

Two equivalent dynamics are provided. In the relay-choice form every
transmitter draws one relay with probability proportional to the preference
kernel and is frustrated if that relay is taken. In the threshold form each
transmitter targets a relay cell and succeeds iff its choice mark is at least
the busy fraction of that cell.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ModelAssumptionError, StructureError
from .measures import GriddedMeasure, MarkedPointSet, Partition, StepPath, Window, total_variation
from .spatial import KernelTable
from .streams import generator

__all__ = [
    "RelayConfig",
    "NetworkTrace",
    "ExtendedPointSet",
    "CoupledSample",
    "sample_transmitters",
    "sample_fixed_transmitters",
    "simulate_relay_choice",
    "simulate_threshold",
    "coupled_poisson",
    "coupled_tv_matches",
    "assigned_frustration",
    "batch_threshold_frustration",
    "batch_relay_choice_frustration",
]


def _rng(seed, *labels) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return generator(seed, *labels)


@dataclass(frozen=True)
class RelayConfig:
    """Relay locations together with the intensity scale used to normalize counts."""

    locations: np.ndarray
    lam: float
    window: Window | None = None

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float, copy=True)
        if loc.ndim == 1:
            loc = loc[:, None]
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.window is not None and loc.size and not np.all(self.window.contains(loc)):
            raise ValueError("relay locations must lie inside the window")
        loc.setflags(write=False)
        object.__setattr__(self, "locations", loc)

    @classmethod
    def uniform(cls, count: int, lam: float, window: Window, seed) -> "RelayConfig":
        rng = _rng(seed, "relays")
        span = window.upper - window.lower
        return cls(window.lower + span * rng.random((count, window.dimension)), lam, window)

    @property
    def count(self) -> int:
        return self.locations.shape[0]

    @property
    def normalized_count(self) -> float:
        return self.count / self.lam


@dataclass(frozen=True)
class NetworkTrace:
    """Frustrated and busy paths of a single run plus per-transmitter outcomes.

    Paths are per cell of ``partition`` (transmitter locations). ``choice``
    holds the chosen relay in the relay-choice form and the target cell in the
    threshold form.
    """

    frustrated: StepPath
    busy: StepPath
    partition: Partition
    times: np.ndarray
    marks: np.ndarray
    cells: np.ndarray
    choice: np.ndarray
    frustrated_flags: np.ndarray
    weight: float

    @property
    def frustrated_total(self) -> float:
        return float(self.frustrated_flags.sum()) * self.weight

    @property
    def busy_total(self) -> float:
        return float((~self.frustrated_flags).sum()) * self.weight

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "cell", "frustrated_mass", "busy_mass"])
        for t, fr, bu in zip(self.frustrated.times, self.frustrated.values, self.busy.values):
            for c in range(fr.size):
                w.writerow([repr(float(t)), c, repr(float(fr[c])), repr(float(bu[c]))])
        return buf.getvalue()

    def outcomes_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "t", "u", "cell", "frustrated"])
        for i, (t, u, c, f) in enumerate(zip(self.times, self.marks, self.choice, self.frustrated_flags)):
            w.writerow([i, repr(float(t)), repr(float(u)), int(c), int(f)])
        return buf.getvalue()


def _build_trace(points: MarkedPointSet, partition: Partition | None, choice, flags) -> NetworkTrace:
    if partition is None:
        dim = points.locations.shape[1] if points.locations.ndim == 2 else 1
        partition = Partition.single(Window(np.full(dim, -1e300), np.full(dim, 1e300)))
    cells = partition.locate(points.locations) if len(points) else np.zeros(0, dtype=np.int64)
    flags = np.asarray(flags, dtype=bool)
    k = partition.size
    w = points.weight
    fr = StepPath.from_increments(points.times, cells, np.where(flags, w, 0.0), k, points.t_final)
    bu = StepPath.from_increments(points.times, cells, np.where(flags, 0.0, w), k, points.t_final)
    return NetworkTrace(fr, bu, partition, points.times, points.marks, cells,
                        np.asarray(choice, dtype=np.int64), flags, w)


def sample_transmitters(lam: float, intensity: GriddedMeasure, seed) -> MarkedPointSet:
    """Poisson process with intensity ``lam * intensity``, atoms weighted ``1/lam``.

    Atoms are uniform inside their grid cell. With a relay axis every atom also
    receives the index of its relay cell as target.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    rng = _rng(seed, "transmitters")
    total = float(intensity.mass.sum())
    n = int(rng.poisson(lam * total)) if total > 0 else 0
    return _sample_atoms(n, intensity, 1.0 / lam, rng)


def sample_fixed_transmitters(count: int, lam: float, intensity: GriddedMeasure, seed) -> MarkedPointSet:
    """Exactly ``count`` i.i.d. atoms drawn proportionally to ``intensity``, weighted ``1/lam``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count and not intensity.mass.sum() > 0:
        raise ValueError("cannot place atoms under a zero intensity")
    return _sample_atoms(int(count), intensity, 1.0 / lam, _rng(seed, "transmitters"))


def _sample_atoms(n: int, intensity: GriddedMeasure, weight: float, rng) -> MarkedPointSet:
    mass = intensity.mass
    space = intensity.space
    dim = space.window.dimension
    if n == 0:
        empty = MarkedPointSet(np.zeros(0), np.zeros(0), np.zeros((0, dim)), weight, intensity.t_final)
        return empty.with_targets(np.zeros(0, dtype=np.int64)) if intensity.relay is not None else empty
    flat = mass.ravel() / mass.sum()
    idx = rng.choice(flat.size, size=n, p=flat)
    sub = np.unravel_index(idx, mass.shape)
    tg, ug = intensity.time_grid, intensity.choice_grid
    t = tg[sub[0]] + (tg[sub[0] + 1] - tg[sub[0]]) * rng.random(n)
    u = ug[sub[1]] + (ug[sub[1] + 1] - ug[sub[1]]) * rng.random(n)
    lo, hi = space.lower[sub[2]], space.upper[sub[2]]
    x = lo + (hi - lo) * rng.random((n, dim))
    targets = sub[3] if intensity.relay is not None else None
    return MarkedPointSet(t, u, x, weight, intensity.t_final, targets)


def _kernel_weights(kernel, x, relays: RelayConfig) -> np.ndarray:
    if isinstance(kernel, KernelTable):
        xi = kernel.x_partition.locate(x)
        yj = kernel.y_partition.locate(relays.locations)
        return kernel.values[np.ix_(xi, yj)]
    if callable(kernel):
        xs = x[:, None, :] if x.shape[1] > 1 else x[:, None, 0]
        ys = relays.locations[None, :, :] if relays.locations.shape[1] > 1 else relays.locations[None, :, 0]
        return np.broadcast_to(np.asarray(kernel(xs, ys), dtype=float), (x.shape[0], relays.count))
    return np.full((x.shape[0], relays.count), float(kernel))


def simulate_relay_choice(points: MarkedPointSet, relays: RelayConfig, kernel: KernelTable | Callable | float,
                          seed, partition: Partition | None = None) -> NetworkTrace:
    """Relay-choice dynamics: draw a relay proportional to the kernel, frustrate on collision.

    Draws are keyed by ``seed`` and consumed one per transmitter in time order,
    so a given point set and seed always replay identically.
    """
    n = len(points)
    if n and relays.count == 0:
        raise ModelAssumptionError("no relays to choose from")
    weights = _kernel_weights(kernel, points.locations, relays) if n else np.zeros((0, relays.count))
    totals = weights.sum(axis=1)
    if np.any(~(totals > 0)):
        bad = int(np.flatnonzero(~(totals > 0))[0])
        raise ModelAssumptionError(f"transmitter {bad} has zero preference for every relay")
    cdf = np.cumsum(weights, axis=1) / totals[:, None]
    draws = _rng(seed, "relay-choice").random(n)
    chosen = np.minimum((cdf < draws[:, None]).sum(axis=1), relays.count - 1)
    # first arrival at each relay succeeds, later ones collide
    flags = np.ones(n, dtype=bool)
    if n:
        _, first = np.unique(chosen, return_index=True)
        flags[first] = False
    return _build_trace(points, partition, chosen, flags)


def simulate_threshold(points: MarkedPointSet, relay_mass=None, partition: Partition | None = None) -> NetworkTrace:
    """Threshold dynamics per target cell.

    A transmitter aimed at cell ``c`` succeeds iff ``u >= B_{t-}(c) / r(c)``
    where ``B`` counts earlier successes in that cell times the atom weight.
    Cells with zero relay mass frustrate everyone.
    """
    if points.targets is None:
        raise StructureError("every atom needs a target relay cell")
    if relay_mass is None:
        if partition is None or partition.relay_mass is None:
            raise StructureError("relay masses are required")
        relay_mass = partition.relay_mass
    rm = np.atleast_1d(np.asarray(relay_mass, dtype=float))
    if np.any(rm < 0):
        raise ValueError("relay masses must be nonnegative")
    tg = points.targets
    if tg.size and (tg.min() < 0 or tg.max() >= rm.size):
        raise StructureError("target cell index out of range")
    capacity = rm / points.weight
    flags = _threshold_flags(points.marks, tg, capacity)
    return _build_trace(points, partition, tg, flags)


def _threshold_flags(marks, targets, capacity) -> np.ndarray:
    busy = np.zeros(capacity.size)
    flags = np.empty(marks.size, dtype=bool)
    cap = capacity.tolist()
    for i, (u, c) in enumerate(zip(marks.tolist(), targets.tolist())):
        k = busy[c]
        if cap[c] > 0 and u * cap[c] >= k:
            busy[c] = k + 1
            flags[i] = False
        else:
            flags[i] = True
    return flags


def assigned_frustration(times, relays) -> np.ndarray:
    """Frustration flags when every transmitter's relay is fixed in advance.

    Processed in time order (ties by index); an atom is frustrated iff an
    earlier atom already holds its relay.
    """
    t = np.asarray(times, dtype=float)
    r = np.asarray(relays)
    order = np.argsort(t, kind="stable")
    flags = np.ones(t.size, dtype=bool)
    if t.size:
        _, first = np.unique(r[order], return_index=True)
        flags[order[first]] = False
    return flags


@dataclass(frozen=True)
class ExtendedPointSet:
    """Points ``(t, x, y, v)`` of a Poisson process on time x space x relay x level."""

    times: np.ndarray
    x_cells: np.ndarray
    y_cells: np.ndarray
    locations: np.ndarray
    levels: np.ndarray
    level_cap: float
    weight: float

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class CoupledSample:
    points: ExtendedPointSet
    in_f: np.ndarray
    in_g: np.ndarray
    z_f: MarkedPointSet
    z_g: MarkedPointSet
    tv: float
    band: int

    def atom_counts(self):
        """Both projections as unit-atom vectors on the common ground set (multiply by ``weight`` for mass)."""
        return self.in_f.astype(float), self.in_g.astype(float)


def coupled_poisson(f: KernelTable, g: KernelTable, base_mass, lam: float, seed, t_final: float = 1.0,
                    level_cap: float | None = None) -> CoupledSample:
    """Sample one level-extended Poisson process and restrict it below ``f`` and ``g``.

    ``base_mass[i, j]`` is the base intensity mass of x-cell ``i`` times y-cell
    ``j`` (time uniform on ``[0, t_final]``). The extended process has
    intensity ``lam * base * Leb`` on ``[0, level_cap]``; keeping points with
    ``v <= f(x, y)`` yields a Poisson process with intensity ``lam * f * base``.
    """
    if f.values.shape != g.values.shape:
        raise StructureError("kernels must share grids")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    top = float(max(f.values.max(initial=0.0), g.values.max(initial=0.0)))
    cap = top if level_cap is None else float(level_cap)
    if cap < top:
        raise ValueError(f"level cap {cap} is below the kernel supremum {top}")
    base = np.asarray(base_mass, dtype=float)
    if base.shape != f.values.shape or np.any(base < 0):
        raise StructureError("base mass must be a nonnegative x-cell by y-cell matrix")
    rng = _rng(seed, "coupling")
    total = float(base.sum()) * cap
    n = int(rng.poisson(lam * total)) if total > 0 else 0
    idx = rng.choice(base.size, size=n, p=(base / base.sum()).ravel()) if n else np.zeros(0, dtype=np.int64)
    xi, yj = np.unravel_index(idx, base.shape)
    t = t_final * rng.random(n)
    v = cap * rng.random(n)
    px = f.x_partition
    lo, hi = px.lower[xi], px.upper[xi]
    x = lo + (hi - lo) * rng.random((n, px.window.dimension))
    u = rng.random(n)
    pts = ExtendedPointSet(t, xi, yj, x, v, cap, 1.0 / lam)
    fv, gv = f.values[xi, yj], g.values[xi, yj]
    in_f, in_g = v <= fv, v <= gv
    band = max(int(np.sum(in_f & ~in_g)), int(np.sum(in_g & ~in_f)))
    z_f = MarkedPointSet(t[in_f], u[in_f], x[in_f], 1.0 / lam, t_final, yj[in_f])
    z_g = MarkedPointSet(t[in_g], u[in_g], x[in_g], 1.0 / lam, t_final, yj[in_g])
    return CoupledSample(pts, in_f, in_g, z_f, z_g, band / lam, band)


def coupled_tv_matches(sample: CoupledSample) -> bool:
    """Exact comparison of the band-count formula with the atomic total variation.

    Counting in unit atoms keeps every sum an integer, so equality is exact.
    """
    a, b = sample.atom_counts()
    return total_variation(a, b) == sample.band


def batch_threshold_frustration(counts, capacity: float, rng: np.random.Generator) -> np.ndarray:
    """Frustrated counts for many independent single-cell threshold runs.

    ``counts[r]`` transmitters arrive in replica ``r``; the ``k``-th success
    requires a uniform mark at least ``k / capacity``. Vectorized over
    replicas, sequential in arrival index.
    """
    counts = np.asarray(counts, dtype=np.int64)
    busy = np.zeros(counts.size, dtype=np.int64)
    if capacity <= 0:
        return counts.copy()
    for i in range(int(counts.max(initial=0))):
        active = counts > i
        u = rng.random(counts.size)
        busy += active & (u * capacity >= busy)
    return counts - busy


def batch_relay_choice_frustration(counts, n_relays: int, rng: np.random.Generator) -> np.ndarray:
    """Frustrated counts for many flat-kernel relay-choice runs (uniform relay draws)."""
    counts = np.asarray(counts, dtype=np.int64)
    occupied = np.zeros((counts.size, n_relays), dtype=bool)
    frustrated = np.zeros(counts.size, dtype=np.int64)
    rows = np.arange(counts.size)
    for i in range(int(counts.max(initial=0))):
        active = counts > i
        pick = rng.integers(0, n_relays, size=counts.size)
        hit = occupied[rows, pick]
        frustrated += active & hit
        occupied[rows, pick] |= active
    return frustrated
