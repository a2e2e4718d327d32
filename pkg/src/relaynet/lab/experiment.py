"""Replica fan-out, event probabilities and report bundles."""
from __future__ import annotations

import csv
import io
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..fluid import euler_two_step, explicit_oracle, solve_fixed_point
from ..measures import GriddedMeasure, Partition, Window
from ..rate import event_rate, ldp_slope
from ..simulator import (
    RelayConfig,
    batch_relay_choice_frustration,
    batch_threshold_frustration,
    sample_fixed_transmitters,
    sample_transmitters,
    simulate_relay_choice,
    simulate_threshold,
)
from ..spatial import KernelTable, cell_choice_probabilities, partition_window
from ..streams import generator
from .config import ExperimentConfig, config_hash

__all__ = [
    "Model",
    "build_model",
    "replica_outcomes",
    "estimate_event_probability",
    "fluid_comparison",
    "run_experiment",
    "write_csv",
]


@dataclass(frozen=True)
class Model:
    """Deterministic objects derived from a configuration."""

    config: ExperimentConfig
    window: Window
    partition: Partition
    kernel_partition: Partition
    intensity: GriddedMeasure
    kernel: KernelTable
    flat: bool

    @property
    def event_time(self) -> float:
        ev = self.config.run.event.time
        return self.intensity.t_final if ev is None else ev

    def relay_count(self, lam: float) -> int:
        rule = self.config.model.relays
        return int(rule.count) if rule.rule == "count" else int(round(rule.ratio * lam))

    def arrival_fraction(self, t: float) -> float:
        """Share of the intensity mass arriving by time ``t``."""
        total = self.intensity.total
        return float(self.intensity.cumulative_arrivals([t]).sum() / total) if total > 0 else 0.0


def build_model(cfg: ExperimentConfig) -> Model:
    m = cfg.model
    window = Window(np.array(m.window.lower), np.array(m.window.upper))
    partition = Partition.single(window) if m.delta is None else partition_window(window, m.delta)
    if m.kernel.kind == "csv":
        kpart = partition_window(window, m.kernel.grid_delta)
        kernel = KernelTable.from_csv(cfg.kernel_path, kpart, kpart)
    else:
        kpart = partition
        kernel = KernelTable.constant(m.kernel.value, kpart, kpart)
    tf = m.intensity.t_final
    weights = np.ones(1) if m.intensity.time_weights is None else np.asarray(m.intensity.time_weights, float)
    tgrid = np.linspace(0.0, tf, weights.size + 1)
    vol = kpart.volumes
    intensity = GriddedMeasure.product(tgrid, weights, kpart, m.intensity.mass * vol / vol.sum(),
                                       m.intensity.choice_bins)
    flat = m.kernel.kind == "constant" and partition.size == 1 and cfg.run.event.cell is None
    return Model(cfg, window, partition, kpart, intensity, kernel, flat)


def _event_value(model: Model, frustrated, arrived, lam: float):
    ev = model.config.run.event
    val = frustrated if ev.functional == "frustrated" else arrived - frustrated
    return np.asarray(val, dtype=float) if ev.units == "count" else np.asarray(val, dtype=float) / lam


def _event_holds(model: Model, value) -> np.ndarray:
    ev = model.config.run.event
    thr = ev.threshold
    tol = 1e-9 * max(1.0, abs(thr))
    if ev.comparison == "ge":
        return value >= thr - tol
    if ev.comparison == "le":
        return value <= thr + tol
    return np.abs(value - thr) <= tol


def _flat_block(model: Model, lam: float, size: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Frustrated and arrived counts by the event time for ``size`` replicas."""
    rule = model.config.model.transmitters
    frac = model.arrival_fraction(model.event_time)
    if rule.rule == "count":
        arrived = rng.binomial(int(rule.count), frac, size=size)
    else:
        arrived = rng.poisson(lam * model.intensity.total * frac, size=size)
    n_relays = model.relay_count(lam)
    if model.config.model.dynamics == "threshold":
        fr = batch_threshold_frustration(arrived, float(n_relays), rng)
    else:
        if n_relays == 0:
            fr = arrived.copy()
        else:
            fr = batch_relay_choice_frustration(arrived, n_relays, rng)
    return fr, arrived


def _single_replica(model: Model, lam: float, rng) -> tuple[float, float]:
    cfg = model.config
    rule = cfg.model.transmitters
    if rule.rule == "count":
        points = sample_fixed_transmitters(int(rule.count), lam, model.intensity, rng)
    else:
        points = sample_transmitters(lam, model.intensity, rng)
    relays = RelayConfig.uniform(model.relay_count(lam), lam, model.window, rng)
    if cfg.model.dynamics == "relay_choice":
        trace = simulate_relay_choice(points, relays, model.kernel, rng, partition=model.partition)
    else:
        yp = model.kernel_partition
        fine = np.bincount(yp.locate(relays.locations), minlength=yp.size) / lam if relays.count else np.zeros(yp.size)
        coarse_owner = yp.coarsening_map(model.partition)
        relay_mass = np.bincount(coarse_owner, weights=fine, minlength=model.partition.size)
        if len(points) and fine.sum() > 0:
            probs = cell_choice_probabilities(model.kernel, model.partition, np.maximum(fine, 0.0))
            xi = model.kernel.x_partition.locate(points.locations)
            cdf = np.cumsum(probs[xi], axis=1)
            draws = rng.random(len(points))
            targets = np.minimum((cdf < draws[:, None] * cdf[:, -1:]).sum(axis=1), model.partition.size - 1)
        else:
            targets = np.zeros(len(points), dtype=np.int64)
        trace = simulate_threshold(points.with_targets(targets), relay_mass, partition=model.partition)
    t = model.event_time
    ev = cfg.run.event
    fr_path = trace.frustrated(t)
    ar_path = fr_path + trace.busy(t)
    if ev.cell is not None:
        if ev.cell >= model.partition.size:
            raise ValueError(f"run.event.cell {ev.cell} is outside the partition")
        return float(fr_path[ev.cell]) * lam, float(ar_path[ev.cell]) * lam
    return float(fr_path.sum()) * lam, float(ar_path.sum()) * lam


def _block_outcomes(model: Model, lam: float, block: int, size: int) -> np.ndarray:
    rng = generator(model.config.run.seed, "replicas", lam, block)
    if model.flat:
        fr, arr = _flat_block(model, lam, size, rng)
    else:
        pairs = np.array([_single_replica(model, lam, generator(model.config.run.seed, "replica", lam, block, i))
                          for i in range(size)]).reshape(-1, 2)
        fr, arr = np.rint(pairs[:, 0]), np.rint(pairs[:, 1])
    return _event_value(model, fr, arr, lam)


def replica_outcomes(model: Model, lam: float, replicas: int, threads: int = 1) -> np.ndarray:
    """Event functional of every replica, in replica order.

    Replicas are grouped in blocks of ``run.block_size``; each block draws from
    its own stream keyed by (seed, lambda, block), so the outcomes do not depend
    on how blocks are spread over workers.
    """
    bs = model.config.run.block_size
    blocks = [(b, min(bs, replicas - b * bs)) for b in range(-(-replicas // bs))]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _block_outcomes(model, lam, *b), blocks))
    else:
        parts = [_block_outcomes(model, lam, *b) for b in blocks]
    return np.concatenate(parts) if parts else np.zeros(0)


def estimate_event_probability(config: ExperimentConfig | Model, lam: float, replicas: int | None = None,
                               threads: int = 1) -> tuple[float, float]:
    """Fraction of replicas in which the configured event occurs, with its standard error."""
    model = config if isinstance(config, Model) else build_model(config)
    n = model.config.run.replicas if replicas is None else int(replicas)
    hits = _event_holds(model, replica_outcomes(model, lam, n, threads))
    p = float(hits.mean())
    return p, float(np.sqrt(p * (1 - p) / n))


def fluid_comparison(model: Model) -> list[dict]:
    """Fluid solution against the closed form and the Euler pair on the solver grid."""
    cfg = model.config
    rule = cfg.model.relays
    r = rule.ratio if rule.rule == "ratio" else 1.0
    nu = model.intensity
    beta = solve_fixed_point(nu, tol=cfg.solver.tol, n_steps=cfg.solver.time_steps,
                             max_iter=cfg.solver.max_iter, relay_mass=r)
    t = beta.time_grid
    mass = nu.total
    frac = nu.cumulative_arrivals(t).sum(axis=1) / mass if mass > 0 else np.zeros_like(t)
    if mass > 0 and r > 0 and cfg.model.intensity.choice_bins == 1:
        oracle = mass * explicit_oracle(frac, mass / r, t).values
    else:
        oracle = np.full_like(t, np.nan)
    rows = []
    try:
        pair = euler_two_step(nu, cfg.solver.euler_delta, relay_mass=r, n_steps=cfg.solver.time_steps)
        lower, upper = pair.lower(t), pair.upper(t)
    except ValueError:
        lower = upper = np.full_like(t, np.nan)
    for k in range(t.size):
        rows.append({"time": t[k], "beta": beta.values[k], "oracle": oracle[k],
                     "euler_lower": lower[k], "euler_upper": upper[k]})
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row[h]) for h in header])
    path.write_text(buf.getvalue())


def manifest(cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    body = {
        "config_hash": config_hash(cfg),
        "seed": cfg.run.seed,
        "versions": {"relaynet": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "config": cfg.canonical(),
    }
    if extra:
        body.update(extra)
    body["created_utc"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return body


def probability_rows(model: Model, threads: int = 1) -> list[dict]:
    rows = []
    reps = model.config.run.replicas
    for lam in model.config.run.lam:
        p, se = estimate_event_probability(model, lam, reps, threads)
        rows.append({"lambda": lam, "replicas": reps, "p_hat": p, "stderr": se})
    return rows


def slope_report(model: Model, rows: list[dict]) -> tuple[list[dict], dict]:
    lam = np.array([r["lambda"] for r in rows])
    p = np.array([r["p_hat"] for r in rows])
    table = [{"lambda": l, "minus_log_p": (-np.log(q) if q > 0 else float("inf"))} for l, q in zip(lam, p)]
    fit = {"slope": None, "rate": None, "relative_error": None}
    if lam.size >= 2 and np.all(p > 0):
        fit["slope"] = ldp_slope(lam, p)
    ev = model.config.run.event
    model_cfg = model.config.model
    scalar_case = (model.flat and ev.functional == "frustrated" and ev.comparison == "ge"
                   and ev.units == "mass" and model_cfg.intensity.mass == 1.0
                   and model_cfg.intensity.t_final == 1.0 and model_cfg.intensity.time_weights is None
                   and model_cfg.relays.rule == "ratio" and model_cfg.relays.ratio == 1.0
                   and model_cfg.transmitters.rule == "poisson" and model.event_time == 1.0)
    if scalar_case:
        rate = event_rate(ev.threshold, model.config.solver.rate_time_steps).value
        fit["rate"] = rate
        if fit["slope"] is not None and rate > 0:
            fit["relative_error"] = abs(fit["slope"] - rate) / rate
    return table, fit


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1, lemma_instances: int | None = None) -> dict:
    """Write the full report bundle and return the paths written."""
    from .lemmas import run_campaigns

    out = Path(cfg.output if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg)
    prob = probability_rows(model, threads)
    write_csv(out / "probabilities.csv", ["lambda", "replicas", "p_hat", "stderr"], prob)
    table, fit = slope_report(model, prob)
    write_csv(out / "slope.csv", ["lambda", "minus_log_p"], table)
    (out / "slope_fit.json").write_text(json.dumps(fit, sort_keys=True, indent=2) + "\n")
    fluid = fluid_comparison(model)
    write_csv(out / "fluid.csv", ["time", "beta", "oracle", "euler_lower", "euler_upper"], fluid)
    n = cfg.lemmas.instances if lemma_instances is None else lemma_instances
    results = run_campaigns(n, cfg.run.seed)
    write_csv(out / "lemmas.csv", ["lemma_id", "instances", "violations", "max_slack"],
              [r.row() for r in results])
    files = ["probabilities.csv", "slope.csv", "slope_fit.json", "fluid.csv", "lemmas.csv"]
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, {"files": files}), sort_keys=True, indent=2) + "\n")
    return {name: out / name for name in files + ["manifest.json"]}
