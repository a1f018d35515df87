"""Ensembles of trajectories and the observables derived from them.

Trajectory ``i`` always runs with ``child_seed(master_seed, i)``.  Trajectories
are grouped into fixed chunks by index; each chunk produces means and summed
squared deviations, and the chunks are merged strictly in index order.  The
merged statistics therefore do not depend on how many workers ran the chunks
or in which order they finished.  BLAS threading is pinned to one thread while
chunks run so that every floating-point reduction is identical as well.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigurationError, ConsistencyError, MoltcError
from .propagator import PropagatorConfig
from .reduced import ExactEngine
from .trajectory import DEFAULT_STRIDE, child_seed, plan_steps, run_trajectory

WORKERS_ENV = "MOLTC_WORKERS"
CHUNK_SIZE = 25


def default_workers() -> int:
    """Worker count from the ``MOLTC_WORKERS`` environment variable (default 1)."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be at least 1")
    return value


@dataclass
class EnsembleStatistics:
    """Means and standard errors of the sampled observables.

    ``mean`` and ``stderr`` map observable names (``populations``, ``energy``,
    ``dark`` and optionally ``coherences``, ``polaritonic``) to arrays whose
    first axis is time.  For complex observables the standard error of the
    real and imaginary parts is stored as the real and imaginary part.
    """

    n_trajectories: int
    master_seed: int
    times_fs: np.ndarray
    channels: tuple
    mean: dict
    stderr: dict
    final_energy: np.ndarray
    jump_counts: np.ndarray
    n_emitters: int
    pairs: tuple = ()
    records: list | None = field(default=None, repr=False)

    @property
    def populations(self):
        return self.mean["populations"]

    @property
    def energy(self):
        return self.mean["energy"]

    @property
    def dark(self):
        return self.mean["dark"]


def _split(value):
    value = np.asarray(value)
    if np.iscomplexobj(value):
        return np.stack([value.real, value.imag])
    return value


def _merge(part_a, part_b):
    """Chan's pairwise merge of (count, mean, M2) triples."""
    na, ma, sa = part_a
    nb, mb, sb = part_b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), sa + sb + delta ** 2 * (na * nb / n)


@dataclass
class _Task:
    model: object
    cfg: PropagatorConfig
    duration: float | None
    stride: int
    engine: str
    pairs: tuple
    surfaces: object
    master_seed: int
    keep_records: bool
    exact_engine: ExactEngine | None = None


_TASK: _Task | None = None


def _init_worker(task):
    global _TASK
    _TASK = task


def _run_chunk(bounds):
    start, stop = bounds
    task = _TASK
    with threadpool_limits(limits=1):
        records = []
        for i in range(start, stop):
            seed = child_seed(task.master_seed, i)
            try:
                records.append(run_trajectory(task.model, task.cfg, seed, task.duration, task.stride,
                                              task.engine, task.pairs, task.surfaces,
                                              task.exact_engine))
            except MoltcError as exc:
                raise type(exc)(f"trajectory {i} (seed {seed}) failed: {exc}") from exc
    stats = {}
    for key in records[0].observables:
        stack = np.stack([_split(r.observables[key]) for r in records])
        mean = stack.mean(axis=0)
        stats[key] = (len(records), mean, ((stack - mean) ** 2).sum(axis=0))
    final = np.array([r.energy[-1] for r in records])
    counts = np.array([len(r.jumps) for r in records])
    return stats, final, counts, (records if task.keep_records else None)


def chunk_bounds(n_trajectories: int, chunk_size: int = CHUNK_SIZE):
    return [(s, min(s + chunk_size, n_trajectories)) for s in range(0, n_trajectories, chunk_size)]


def run_ensemble(model, n_trajectories: int, master_seed: int = 0, workers: int | None = None,
                 cfg: PropagatorConfig | None = None, duration: float | None = None,
                 stride: int = DEFAULT_STRIDE, engine: str = "exact", pairs=(), surfaces=None,
                 keep_records: bool = False, chunk_size: int = CHUNK_SIZE) -> EnsembleStatistics:
    """Run ``n_trajectories`` trajectories and reduce them deterministically."""
    if n_trajectories < 1:
        raise ConfigurationError("need at least one trajectory")
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigurationError("workers must be at least 1")
    cfg = cfg or PropagatorConfig(dt=model.params.dt)
    plan = plan_steps(model, cfg.dt, duration, stride)
    task = _Task(model, cfg, duration, stride, engine, tuple(pairs), surfaces, master_seed, keep_records)
    if engine == "exact":
        with threadpool_limits(limits=1):
            task.exact_engine = ExactEngine(model, plan.dt)
    bounds = chunk_bounds(n_trajectories, chunk_size)
    if workers == 1 or len(bounds) == 1:
        _init_worker(task)
        results = [_run_chunk(b) for b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds)),
                                 initializer=_init_worker, initargs=(task,)) as pool:
            results = list(pool.map(_run_chunk, bounds))
    merged = None
    for stats, *_ in results:
        merged = stats if merged is None else {k: _merge(merged[k], stats[k]) for k in merged}
    n = n_trajectories
    mean, stderr = {}, {}
    for key, (_, m, m2) in merged.items():
        se = np.sqrt(m2 / (n - 1) / n) if n > 1 else np.zeros_like(m)
        if key == "coherences":
            m, se = m[0] + 1j * m[1], se[0] + 1j * se[1]
        mean[key], stderr[key] = m, se
    records = [r for *_, recs in results for r in recs] if keep_records else None
    return EnsembleStatistics(
        n_trajectories=n, master_seed=master_seed, times_fs=plan.times_fs,
        channels=model.basis.channels, mean=mean, stderr=stderr,
        final_energy=np.concatenate([r[1] for r in results]),
        jump_counts=np.concatenate([r[2] for r in results]),
        n_emitters=model.basis.n_emitters, pairs=task.pairs, records=records)


def energy_retention(stats: EnsembleStatistics, params, E0: float, check: bool = True):
    """Retention (<H>(t) - E0) / (hbar w_c) and its standard error."""
    ret = (stats.energy - E0) / params.omega_c
    se = stats.stderr["energy"] / params.omega_c
    if check and (ret.min() < -0.01 or ret.max() > 1.01):
        raise ConsistencyError(
            f"energy retention left [-0.01, 1.01]: range [{ret.min():.4f}, {ret.max():.4f}]")
    return ret, se


def final_retention_samples(stats: EnsembleStatistics, params, E0: float) -> np.ndarray:
    """Per-trajectory retention at the last sample time."""
    return (stats.final_energy - E0) / params.omega_c


def channel_and_dark_populations(stats: EnsembleStatistics, surfaces) -> dict:
    """Polaritonic population series: bright states, summed DARK, and GROUND.

    Returns ``{label: (mean, stderr)}``.
    """
    if surfaces.n_emitters != stats.n_emitters:
        raise ConfigurationError(
            f"surfaces have N={surfaces.n_emitters}, ensemble has N={stats.n_emitters}")
    if "polaritonic" not in stats.mean:
        raise ConfigurationError("the ensemble was run without polaritonic projections")
    labels = list(surfaces.labels[:surfaces.n_bright]) + ["DARK", "GROUND"]
    m, se = stats.mean["polaritonic"], stats.stderr["polaritonic"]
    return {lab: (m[:, i], se[:, i]) for i, lab in enumerate(labels)}
