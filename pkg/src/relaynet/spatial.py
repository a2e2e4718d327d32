"""Window partitions, preference kernels and their cell-wise flattening."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ModelAssumptionError, StructureError
from .measures import GriddedMeasure, MarkedPointSet, Partition, Window

__all__ = [
    "KernelTable",
    "partition_window",
    "normalize_kernel",
    "flatten_kernel",
    "flattening_error",
    "cell_choice_probabilities",
    "augment_empirical",
    "request_measure",
]


def partition_window(window: Window, delta: float) -> Partition:
    """Cubes of side ``delta`` anchored at the lower corner, clipped to the window."""
    if not delta > 0:
        raise ValueError("cell side must be positive")
    edges = []
    for lo, hi in zip(window.lower, window.upper):
        n = max(1, math.ceil((hi - lo) / delta - 1e-12))
        e = lo + delta * np.arange(n + 1, dtype=float)
        e[-1] = hi
        edges.append(e)
    return Partition(window, tuple(edges), cell_side=float(delta))


@dataclass(frozen=True)
class KernelTable:
    """Preference values ``kappa(x, y)`` sampled at cell midpoints.

    ``values[i, j]`` is the kernel between x-cell ``i`` and y-cell ``j``.
    A table produced by :func:`normalize_kernel` or :func:`flatten_kernel` is a
    density with respect to ``reference`` (per-y-cell relay masses), so each
    row integrates to one against it.
    """

    values: np.ndarray
    x_partition: Partition
    y_partition: Partition
    reference: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (self.x_partition.size, self.y_partition.size):
            raise StructureError(f"kernel has shape {v.shape}, partitions need "
                                 f"{(self.x_partition.size, self.y_partition.size)}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("kernel values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.reference is not None:
            r = np.array(self.reference, dtype=float, copy=True)
            r.setflags(write=False)
            object.__setattr__(self, "reference", r)

    @classmethod
    def from_function(cls, func: Callable, x_partition: Partition, y_partition: Partition) -> "KernelTable":
        """Evaluate ``func(x, y)`` on all pairs of cell centroids (vectorized)."""
        xc = x_partition.centroids
        yc = y_partition.centroids
        xs = np.repeat(xc[:, None, :], yc.shape[0], axis=1)
        ys = np.repeat(yc[None, :, :], xc.shape[0], axis=0)
        x_arg = xs[..., 0] if xs.shape[-1] == 1 else xs
        y_arg = ys[..., 0] if ys.shape[-1] == 1 else ys
        vals = np.broadcast_to(np.asarray(func(x_arg, y_arg), dtype=float), (xc.shape[0], yc.shape[0]))
        return cls(vals, x_partition, y_partition)

    @classmethod
    def constant(cls, value: float, x_partition: Partition, y_partition: Partition) -> "KernelTable":
        return cls(np.full((x_partition.size, y_partition.size), float(value)), x_partition, y_partition)

    @classmethod
    def from_csv(cls, path, x_partition: Partition, y_partition: Partition) -> "KernelTable":
        """Load a headerless numeric matrix, one row per x-cell."""
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"kernel file not found: {path}")
        rows = [[float(v) for v in row] for row in csv.reader(io.StringIO(path.read_text())) if row]
        return cls(np.array(rows), x_partition, y_partition)

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.values.tolist())
        return buf.getvalue()

    def normalizers(self, relay_mass) -> np.ndarray:
        """``int kappa(x, z) nu_R(dz)`` for every x-cell."""
        rm = np.asarray(relay_mass, dtype=float)
        if rm.shape != (self.y_partition.size,):
            raise StructureError("relay masses must be given per y-cell")
        return self.values @ rm


def normalize_kernel(kernel: KernelTable, relay_mass) -> KernelTable:
    """Divide each row by its normalizer, giving the density of kappa_{nu_R}(dy|x) w.r.t. nu_R."""
    rm = np.asarray(relay_mass, dtype=float)
    z = kernel.normalizers(rm)
    bad = np.flatnonzero(~(z > 0))
    if bad.size:
        raise ModelAssumptionError(f"x-cells {bad[:5].tolist()} reach no relay (zero normalizer)")
    return KernelTable(kernel.values / z[:, None], kernel.x_partition, kernel.y_partition, rm)


def _cell_owner(kernel: KernelTable, partition: Partition) -> np.ndarray:
    return kernel.y_partition.coarsening_map(partition)


def cell_choice_probabilities(kernel: KernelTable, partition: Partition, relay_mass=None) -> np.ndarray:
    """Probability that a transmitter in x-cell ``i`` picks a relay in coarse cell ``c``."""
    if relay_mass is None:
        if kernel.reference is None:
            raise StructureError("kernel is not normalized and no relay mass was supplied")
        norm = kernel
    else:
        norm = normalize_kernel(kernel, relay_mass)
    owner = _cell_owner(kernel, partition)
    weighted = norm.values * norm.reference[None, :]
    out = np.zeros((kernel.x_partition.size, partition.size))
    np.add.at(out.T, owner, weighted.T)
    return out


def flatten_kernel(kernel: KernelTable, partition: Partition, relay_mass, relay_mass_flat=None) -> KernelTable:
    """Kernel averaged per coarse relay cell.

    The result is a density with respect to ``relay_mass_flat`` (defaults to
    ``relay_mass``) that is constant on each cell and gives every cell the same
    choice probability as the normalized original.
    """
    rm = np.asarray(relay_mass, dtype=float)
    rm_flat = rm if relay_mass_flat is None else np.asarray(relay_mass_flat, dtype=float)
    owner = _cell_owner(kernel, partition)
    probs = cell_choice_probabilities(kernel, partition, rm)
    cell_mass = np.bincount(owner, weights=rm_flat, minlength=partition.size)
    empty = cell_mass <= 0
    if np.any(probs[:, empty] > 0):
        raise ModelAssumptionError("a relay cell with zero mass carries positive choice probability")
    density = np.divide(probs, cell_mass[None, :], out=np.zeros_like(probs), where=~empty[None, :])
    return KernelTable(density[:, owner], kernel.x_partition, kernel.y_partition, rm_flat)


def flattening_error(kernel_norm: KernelTable, kernel_flat: KernelTable, transmitter_mass, relay_mass) -> float:
    """L1 distance between two kernel densities against ``mu^s (x) mu_R`` on the grid."""
    if kernel_norm.values.shape != kernel_flat.values.shape:
        raise StructureError("kernels live on different grids")
    xm = np.asarray(transmitter_mass, dtype=float)
    ym = np.asarray(relay_mass, dtype=float)
    return float(xm @ np.abs(kernel_norm.values - kernel_flat.values) @ ym)


def augment_empirical(per_cell_points: Sequence[MarkedPointSet], relay_mass) -> MarkedPointSet:
    """Merge per-relay-cell point sets, tagging every atom with its relay cell.

    The tag is all the threshold dynamics need: within cell ``i`` the relay
    coordinate follows ``nu_R`` restricted to ``W_i``, which only matters for
    quantities finer than the partition.
    """
    rm = np.asarray(relay_mass, dtype=float)
    if len(per_cell_points) != rm.size:
        raise StructureError(f"{len(per_cell_points)} point sets for {rm.size} relay cells")
    tagged = [p.with_targets(np.full(len(p), i)) for i, p in enumerate(per_cell_points)]
    return MarkedPointSet.concatenate(tagged)


def request_measure(transmitters: GriddedMeasure, kernel: KernelTable, relay_mass) -> GriddedMeasure:
    """Joint transmitter/relay measure ``mu_T(dt, du, dx) kappa_{nu_R}(dy|x) nu_R(dy)``.

    The relay axis of the result holds the full mass on each relay cell.
    """
    if not transmitters.space.same_cells(kernel.x_partition):
        raise StructureError("transmitter measure and kernel use different x-partitions")
    rm = np.asarray(relay_mass, dtype=float)
    norm = normalize_kernel(kernel, rm)
    choice = norm.values * rm[None, :]
    mass = transmitters.mass[..., None] * choice[None, None, :, :]
    return GriddedMeasure(transmitters.time_grid, transmitters.choice_grid, transmitters.space, mass,
                          kernel.y_partition.with_relay_mass(rm))
