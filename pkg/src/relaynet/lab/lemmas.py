"""Randomized campaigns checking the quantitative inequalities of the model.

Each campaign returns a :class:`LemmaResult` whose ``max_slack`` is the
largest observed ``lhs - rhs`` of the inequality written as ``lhs <= rhs``;
a violation is a slack above the campaign's numerical tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..fluid import (
    busy_by_cell,
    euler_error,
    euler_error_bound,
    euler_two_step,
    solve_fixed_point,
    window_bound,
)
from ..measures import GriddedMeasure, Partition, Window, total_variation
from ..simulator import (
    assigned_frustration,
    batch_relay_choice_frustration,
    batch_threshold_frustration,
    coupled_poisson,
    sample_transmitters,
    simulate_threshold,
)
from ..spatial import KernelTable, augment_empirical
from ..streams import generator

__all__ = [
    "LemmaResult",
    "random_gridded_driver",
    "euler_campaign",
    "relay_dominance_campaign",
    "contraction_campaign",
    "coupling_campaign",
    "previsible_campaign",
    "stability_campaign",
    "uniqueness_campaign",
    "window_bound_campaign",
    "localization_campaign",
    "markov_equivalence",
    "run_campaigns",
]

# solver error allowance when a campaign compares against a numerical fluid path
FLUID_TOL = 1e-7


@dataclass(frozen=True)
class LemmaResult:
    lemma_id: str
    instances: int
    violations: int
    max_slack: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def row(self) -> dict:
        return {"lemma_id": self.lemma_id, "instances": self.instances, "violations": self.violations,
                "max_slack": self.max_slack}


def _tally(lemma_id: str, slacks, tol: float = 0.0) -> LemmaResult:
    s = np.asarray(slacks, dtype=float)
    return LemmaResult(lemma_id, int(s.size), int(np.sum(s > tol)), float(s.max()) if s.size else float("nan"))


def random_gridded_driver(rng: np.random.Generator, max_mass: float = 3.0) -> GriddedMeasure:
    """Random piecewise-constant driver on ``[0, 1]`` with a few cells per axis."""
    nt, nu, k = int(rng.integers(1, 12)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
    tg = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, nt - 1)), [1.0]])
    ug = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, nu - 1)), [1.0]])
    if np.any(np.diff(tg) < 1e-3) or np.any(np.diff(ug) < 1e-3):
        tg, ug = np.linspace(0, 1, nt + 1), np.linspace(0, 1, nu + 1)
    mass = rng.gamma(0.8, size=(nt, nu, k)) * (rng.random((nt, nu, k)) > 0.2)
    if mass.sum() == 0:
        mass[0, -1, 0] = 1.0
    mass *= rng.uniform(0.2, max_mass) / mass.sum()
    space = Partition(Window.unit(1), (np.linspace(0, 1, k + 1),))
    return GriddedMeasure(tg, ug, space, mass)


def _random_delta(rng) -> float:
    return 1.0 / int(rng.integers(1, 21))


def euler_campaign(instances: int, seed: int = 0) -> list[LemmaResult]:
    """Lower Euler path below the fluid path, and within twice the largest block mass of it."""
    dom_g, err_g, dom_e, err_e = [], [], [], []
    for i in range(instances):
        rng = generator(seed, "euler-gridded", i)
        nu = random_gridded_driver(rng)
        delta = _random_delta(rng)
        beta = solve_fixed_point(nu, tol=1e-11, n_steps=2000)
        pair = euler_two_step(nu, delta, n_steps=2000)
        above, gap = euler_error(nu, pair, beta)
        dom_g.append(above)
        err_g.append(gap - euler_error_bound(nu, delta))
    for i in range(instances):
        rng = generator(seed, "euler-empirical", i)
        nu = random_gridded_driver(rng)
        lam = float(rng.uniform(20, 400))
        points = sample_transmitters(lam, nu, rng)
        delta = _random_delta(rng)
        pair = euler_two_step(points, delta)
        above, gap = euler_error(points, pair)
        dom_e.append(above)
        err_e.append(gap - euler_error_bound(points, delta))
    return [
        _tally("euler_dominance_gridded", dom_g, FLUID_TOL),
        _tally("euler_error_gridded", err_g, FLUID_TOL),
        _tally("euler_dominance_empirical", dom_e, 1e-12),
        _tally("euler_error_empirical", err_e, 1e-12),
    ]


def relay_dominance_campaign(instances: int, seed: int = 0, ratios=(0.5, 0.9)) -> LemmaResult:
    """``(s/r)(B^r - 1/lam) <= B^s <= B^r`` along whole paths on shared atoms."""
    slacks = []
    for i in range(instances):
        rng = generator(seed, "relay-dominance", i)
        lam = float(rng.uniform(10, 300))
        nu = GriddedMeasure.uniform(total=float(rng.uniform(0.3, 3.0)))
        points = sample_transmitters(lam, nu, rng).with_targets(0)
        r = float(rng.uniform(0.2, 2.0))
        s = r * ratios[i % len(ratios)]
        big = simulate_threshold(points, [r]).busy.total()
        small = simulate_threshold(points, [s]).busy.total()
        grid = big.times
        b_r, b_s = big(grid)[:, 0], small(grid)[:, 0]
        slacks.append(max(np.max(b_s - b_r), np.max((s / r) * (b_r - 1.0 / lam) - b_s)))
    return _tally("relay_dominance", slacks, 1e-12)


def contraction_campaign(instances: int, seed: int = 0) -> LemmaResult:
    """Single-atom edits move the frustrated counting measure by at most twice the edit."""
    slacks = []
    for i in range(instances):
        rng = generator(seed, "contraction", i)
        n, n_relays = int(rng.integers(1, 40)), int(rng.integers(1, 12))
        w = 1.0 / float(rng.uniform(5, 100))
        times = rng.random(n + 1)
        relays = rng.integers(0, n_relays, size=n + 1)
        present = np.ones(n + 1, dtype=bool)
        present[-1] = False
        edited = present.copy()
        j = int(rng.integers(0, n + 1))
        edited[j] = not edited[j]
        def frustrated(mask):
            out = np.zeros(n + 1)
            idx = np.flatnonzero(mask)
            out[idx] = assigned_frustration(times[idx], relays[idx]) * w
            return out
        lhs = total_variation(frustrated(present), frustrated(edited))
        rhs = 2.0 * total_variation(present * w, edited * w)
        slacks.append(lhs - rhs)
    return _tally("contraction", slacks, 1e-12)


def coupling_campaign(instances: int, seed: int = 0) -> LemmaResult:
    """Band-count formula equals the atomic total variation of the two projections."""
    mismatches = []
    for i in range(instances):
        rng = generator(seed, "coupling", i)
        kx, ky = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        px = Partition(Window.unit(1), (np.linspace(0, 1, kx + 1),))
        py = Partition(Window.unit(1), (np.linspace(0, 1, ky + 1),))
        f = KernelTable(rng.uniform(0, 2, (kx, ky)), px, py)
        g = KernelTable(rng.uniform(0, 2, (kx, ky)), px, py)
        base = rng.uniform(0, 1, (kx, ky))
        sample = coupled_poisson(f, g, base, float(rng.uniform(5, 200)), rng, level_cap=2.0)
        a, b = sample.atom_counts()
        mismatches.append(abs(total_variation(a, b) - sample.band) * sample.points.weight)
    return _tally("coupling_identity", mismatches, 0.0)


def near_threshold_counts(replicas: int, lam: float, eps: float, seed: int = 0, spatial_mass: float = 1.0):
    """Per replica, the number of atoms whose mark lies within ``eps`` of ``B_{t-}``."""
    nu = GriddedMeasure.uniform(total=spatial_mass)
    counts = np.empty(replicas, dtype=np.int64)
    for i in range(replicas):
        rng = generator(seed, "previsible", lam, i)
        pts = sample_transmitters(lam, nu, rng).with_targets(0)
        trace = simulate_threshold(pts, [1.0])
        busy_before = np.concatenate([[0], np.cumsum(~trace.frustrated_flags)[:-1]]) * pts.weight
        counts[i] = int(np.sum(np.abs(busy_before - pts.marks) <= eps))
    return counts


def previsible_campaign(replicas: int, lam: float = 200.0, eps: float = 0.05, seed: int = 0,
                        alpha: float = 1e-3) -> tuple[LemmaResult, dict]:
    """Empirical CDF of near-threshold counts against the dominating Poisson CDF.

    Stochastic dominance means the empirical CDF may not fall below the
    Poisson CDF by more than one DKW band. The slack is the largest shortfall
    minus the band, and the result counts replicas rather than CDF points.
    """
    counts = near_threshold_counts(replicas, lam, eps, seed)
    ks = np.arange(counts.max(initial=0) + 1)
    ecdf = np.searchsorted(np.sort(counts), ks, side="right") / replicas
    pois = stats.poisson.cdf(ks, 2 * eps * lam)
    band = float(np.sqrt(np.log(2 / alpha) / (2 * replicas)))
    gaps = pois - ecdf
    detail = {"band": band, "max_gap": float(gaps.max()), "mean_count": float(counts.mean()),
              "poisson_mean": 2 * eps * lam}
    worst = float(gaps.max()) - band
    return LemmaResult("previsible", replicas, int(np.sum(gaps > band)), worst), detail


def stability_campaign(instances: int, seed: int = 0) -> LemmaResult:
    """Fluid paths of two drivers differ by at most the drivers' total variation."""
    slacks = []
    for i in range(instances):
        rng = generator(seed, "stability", i)
        nu = random_gridded_driver(rng)
        mass = nu.mass.copy()
        flat = mass.reshape(-1)
        pick = rng.choice(flat.size, size=max(1, flat.size // 3), replace=False)
        flat[pick] = np.maximum(flat[pick] + rng.normal(0, 0.2, pick.size), 0)
        other = nu.with_mass(mass)
        b1 = solve_fixed_point(nu, tol=1e-11, n_steps=2000)
        b2 = solve_fixed_point(other, tol=1e-11, n_steps=2000)
        grid = np.union1d(b1.time_grid, b2.time_grid)
        lhs = float(np.max(np.abs(b1(grid) - b2(grid))))
        slacks.append(lhs - total_variation(nu.mass, other.mass))
    return _tally("stability", slacks, FLUID_TOL)


def uniqueness_campaign(instances: int, seed: int = 0, tol: float = 1e-8) -> LemmaResult:
    """Picard from below and from the arrival cap meet within four tolerances."""
    slacks = []
    for i in range(instances):
        nu = random_gridded_driver(generator(seed, "uniqueness", i))
        lo = solve_fixed_point(nu, tol=tol)
        hi = solve_fixed_point(nu, tol=tol, initial="cap")
        slacks.append(float(np.max(np.abs(lo.values - hi.values))) - 4 * tol)
    return _tally("uniqueness", slacks, 0.0)


def window_bound_campaign(instances: int, seed: int = 0) -> LemmaResult:
    """Lower Euler path within the driver mass of the window between fluid path and over-count."""
    slacks = []
    for i in range(instances):
        rng = generator(seed, "window-bound", i)
        nu = random_gridded_driver(rng)
        delta = _random_delta(rng)
        beta = solve_fixed_point(nu, tol=1e-11, n_steps=2000)
        pair = euler_two_step(nu, delta, n_steps=2000)
        lower, fluid = pair.lower_cells, busy_by_cell(nu, beta)
        grid = np.union1d(lower.times, fluid.times)
        signed = _interp_cells(grid, lower) - _interp_cells(grid, fluid)
        pos = np.where(signed > 0, signed, 0.0).sum(axis=1)
        neg = -np.where(signed < 0, signed, 0.0).sum(axis=1)
        lhs = float(np.max(np.maximum(pos, neg)))
        slacks.append(lhs - window_bound(nu, pair, beta))
    return _tally("window_bound", slacks, FLUID_TOL)


def _interp_cells(grid, path):
    """Per-cell values of a knot-sampled path, linearly interpolated onto ``grid``."""
    return np.stack([np.interp(grid, path.times, path.values[:, c]) for c in range(path.n_cells)], axis=1)


def localization_campaign(instances: int, seed: int = 0) -> LemmaResult:
    """Per-cell threshold runs on the augmented measure sum to the global run."""
    mismatches = []
    for i in range(instances):
        rng = generator(seed, "localization", i)
        k = int(rng.integers(1, 5))
        lam = float(rng.uniform(10, 200))
        rm = rng.uniform(0, 1, k) * (rng.random(k) > 0.15)
        parts = [sample_transmitters(lam, GriddedMeasure.uniform(total=float(rng.uniform(0.1, 1.5))), rng)
                 for _ in range(k)]
        merged = augment_empirical(parts, rm)
        whole = simulate_threshold(merged, rm)
        flags = np.zeros(len(merged), dtype=bool)
        for c in range(k):
            sel = merged.targets == c
            sub = merged.subset(sel).with_targets(0)
            flags[sel] = simulate_threshold(sub, [rm[c]]).frustrated_flags
        mismatches.append(float(np.sum(flags != whole.frustrated_flags)))
    return _tally("localization", mismatches, 0.0)


def markov_equivalence(replicas: int, seed: int = 0, transmitters: int = 3, relays: int = 2,
                       alpha: float = 1e-3) -> dict:
    """Frustration law of the two dynamics on a fixed-size flat instance.

    Returns the empirical laws, the chi-square homogeneity p-value and the
    exact law obtained by recursion over the busy count.
    """
    counts = np.full(replicas, transmitters)
    fr_choice = batch_relay_choice_frustration(counts, relays, generator(seed, "markov", "choice"))
    fr_thresh = batch_threshold_frustration(counts, float(relays), generator(seed, "markov", "threshold"))
    support = np.arange(transmitters + 1)
    table = np.array([np.bincount(fr_choice, minlength=support.size),
                      np.bincount(fr_thresh, minlength=support.size)])
    keep = table.sum(axis=0) > 0
    chi2 = stats.chi2_contingency(table[:, keep])
    exact = np.zeros(transmitters + 1)
    law = {0: 1.0}  # busy count -> probability
    for _ in range(transmitters):
        nxt = {}
        for b, p in law.items():
            ok = max(0.0, 1.0 - b / relays)
            nxt[b + 1] = nxt.get(b + 1, 0.0) + p * ok
            nxt[b] = nxt.get(b, 0.0) + p * (1 - ok)
        law = nxt
    for b, p in law.items():
        exact[transmitters - b] += p
    return {"choice": table[0] / replicas, "threshold": table[1] / replicas, "exact": exact,
            "chi2_pvalue": float(chi2.pvalue), "rejected": bool(chi2.pvalue < alpha), "replicas": replicas}


def run_campaigns(instances: int, seed: int = 0) -> list[LemmaResult]:
    """All campaigns at a common instance count (used by reports and the CLI)."""
    results = []
    results += euler_campaign(instances, seed)
    results.append(relay_dominance_campaign(instances, seed))
    results.append(contraction_campaign(instances, seed))
    results.append(coupling_campaign(instances, seed))
    results.append(stability_campaign(instances, seed))
    results.append(uniqueness_campaign(instances, seed))
    results.append(window_bound_campaign(instances, seed))
    results.append(localization_campaign(instances, seed))
    prev, _ = previsible_campaign(max(instances, 200), seed=seed)
    results.append(prev)
    return results
