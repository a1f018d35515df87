"""Single stochastic trajectories (Monte Carlo wave functions).

Each step first draws one uniform number and compares it with the jump
probabilities of the current state (see :mod:`moltc.jumps`).  If a jump fires
it is applied and the step ends there; otherwise the state is propagated by
one step of the effective Hamiltonian and renormalized.  A photon decay leaves
the system in GROUND, where nothing else can happen: the trajectory is then
frozen and its observables held.

Two engines implement the same loop:

``"arnoldi"``
    step-by-step Krylov propagation on the full channel basis, the reference;
``"exact"``
    the event-driven diagonalized propagator of :mod:`moltc.reduced`, which
    consumes the same uniform stream and is orders of magnitude faster.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import units
from .basis import GROUND, StateVector
from .errors import ConfigurationError, PropagationError
from .hamiltonian import expectation_energy
from .jumps import apply_jump, jump_probabilities, sample_jump, subdivision_level
from .polaritons import bright_populations, reduced_amplitudes
from .propagator import PropagatorConfig, arnoldi_step
from .reduced import ExactEngine, run_exact

ENGINES = ("exact", "arnoldi")
DEFAULT_STRIDE = 100


def child_seed(master_seed: int, index: int) -> int:
    """Seed of trajectory ``index``: a counter-based split of ``master_seed``.

    >>> child_seed(7, 3) == child_seed(7, 3) != child_seed(7, 4)
    True
    """
    if master_seed < 0 or index < 0:
        raise ConfigurationError("seeds and trajectory indices must be non-negative")
    words = np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(2, np.uint64)
    return (int(words[0]) << 64) | int(words[1])


@dataclass
class TrajectoryRecord:
    """Sampled observables of one trajectory.

    ``populations`` is (sample, channel); ``energy`` is <H> in hartree;
    ``dark`` the population outside the symmetric emitter combination;
    ``jumps`` a list of ``(time_fs, jump index)``.  ``coherences`` holds
    <psi_a|psi_b> for the requested channel pairs and ``polaritonic`` the
    bright-state populations followed by the dark sum and GROUND.
    """

    times_fs: np.ndarray
    populations: np.ndarray
    energy: np.ndarray
    dark: np.ndarray
    jumps: list
    seed: int
    channels: tuple
    pairs: tuple = ()
    coherences: np.ndarray | None = None
    polaritonic: np.ndarray | None = None
    engine: str = "exact"

    @property
    def observables(self) -> dict:
        out = {"populations": self.populations, "energy": self.energy, "dark": self.dark}
        if self.coherences is not None:
            out["coherences"] = self.coherences
        if self.polaritonic is not None:
            out["polaritonic"] = self.polaritonic
        return out


@dataclass(frozen=True)
class StepPlan:
    """Sub-step length, step counts and sample indices of a run."""

    dt: float
    level: int
    n_steps: int
    sample_steps: np.ndarray = field(repr=False)

    @property
    def times_fs(self) -> np.ndarray:
        return units.au_to_fs(self.sample_steps * self.dt)


def plan_steps(model, dt: float, duration_fs: float | None = None, stride: int = DEFAULT_STRIDE) -> StepPlan:
    """Choose the sub-step so the jump guard holds; keep sample times fixed."""
    if stride < 1:
        raise ConfigurationError("stride must be at least 1")
    duration = model.params.duration if duration_fs is None else duration_fs
    if duration < 0:
        raise ConfigurationError("duration must be non-negative")
    level = subdivision_level(model.jumps, dt)
    factor = 2 ** level
    n_steps = int(round(units.fs_to_au(duration) / dt)) * factor
    stride_sub = stride * factor
    samples = np.arange(0, n_steps + 1, stride_sub)
    if samples[-1] != n_steps:
        samples = np.append(samples, n_steps)
    return StepPlan(dt / factor, level, n_steps, samples)


def state_observables(model, psi: StateVector, pairs=(), surfaces=None) -> dict:
    """Observables of a single state, normalized by its squared norm."""
    norm2 = psi.norm2()
    out = {
        "populations": psi.populations() / norm2,
        "energy": expectation_energy(model.hamiltonian, psi),
    }
    photon, pi, sym, dark = reduced_amplitudes(psi)
    out["dark"] = dark / norm2
    dq = psi.grid.spacing_au
    if pairs:
        a = psi.amplitudes
        out["coherences"] = np.array([np.vdot(a[i], a[j]) * dq for i, j in pairs]) / norm2
    if surfaces is not None:
        bright = bright_populations(photon, pi, sym, surfaces, dq)
        out["polaritonic"] = np.concatenate(
            [bright, [dark, out["populations"][GROUND] * norm2]]) / norm2
    return out


def _check_pairs(model, pairs):
    pairs = tuple((int(a), int(b)) for a, b in pairs)
    for a, b in pairs:
        if not (0 <= a < model.basis.n_channels and 0 <= b < model.basis.n_channels):
            raise ConfigurationError(f"coherence pair {(a, b)} outside the channel range")
    return pairs


def _check_surfaces(model, surfaces):
    if surfaces is not None and (surfaces.n_emitters != model.basis.n_emitters
                                 or surfaces.grid != model.grid):
        raise ConfigurationError("polaritonic surfaces belong to a different model")


def _run_arnoldi(model, cfg, plan, rng, seed, pairs, surfaces):
    h = model.hamiltonian
    jumps = model.jumps
    step_cfg = replace(cfg, dt=plan.dt)
    psi = model.psi0.normalized()
    samples = set(plan.sample_steps.tolist())
    rows = [state_observables(model, psi, pairs, surfaces)]
    log = []
    frozen = None
    for i in range(plan.n_steps):
        if frozen is None:
            u = rng.random()
            k = sample_jump(jump_probabilities(psi, jumps, plan.dt), u)
            if k is None:
                try:
                    psi = arnoldi_step(h, psi, step_cfg)
                except PropagationError as exc:
                    raise PropagationError(str(exc), seed=seed, step=i) from exc
            else:
                psi = apply_jump(psi, jumps, k)
                log.append((i, k))
                if k == jumps.decay_index:
                    frozen = state_observables(model, psi, pairs, surfaces)
        if i + 1 in samples:
            rows.append(frozen or state_observables(model, psi, pairs, surfaces))
    return {key: np.array([r[key] for r in rows]) for key in rows[0]}, log


def run_trajectory(model, cfg: PropagatorConfig | None = None, seed: int = 0,
                   duration: float | None = None, stride: int = DEFAULT_STRIDE,
                   engine: str = "exact", pairs=(), surfaces=None,
                   exact_engine: ExactEngine | None = None) -> TrajectoryRecord:
    """Run one trajectory of ``model`` (a :class:`~moltc.model.ModelBundle`).

    ``duration`` in fs defaults to the model's; ``stride`` is the number of
    nominal steps between samples.  ``exact_engine`` may be passed to reuse a
    prepared :class:`~moltc.reduced.ExactEngine`.
    """
    if engine not in ENGINES:
        raise ConfigurationError(f"unknown engine {engine!r}; choose from {ENGINES}")
    cfg = cfg or PropagatorConfig(dt=model.params.dt)
    plan = plan_steps(model, cfg.dt, duration, stride)
    pairs = _check_pairs(model, pairs)
    _check_surfaces(model, surfaces)
    rng = np.random.default_rng(seed)
    if engine == "exact":
        eng = exact_engine or ExactEngine(model, plan.dt)
        if abs(eng.dt - plan.dt) > 1e-15 * plan.dt:
            raise ConfigurationError("prepared engine uses a different step")
        bright = surfaces.bright_vectors if surfaces is not None else None
        obs, log = run_exact(eng, model.psi0, rng, plan.n_steps, plan.sample_steps,
                             seed=seed, pairs=pairs, bright_vectors=bright)
    else:
        obs, log = _run_arnoldi(model, cfg, plan, rng, seed, pairs, surfaces)
    jumps = [(float(units.au_to_fs(i * plan.dt)), int(k)) for i, k in log]
    return TrajectoryRecord(
        times_fs=plan.times_fs, populations=obs["populations"], energy=obs["energy"],
        dark=obs["dark"], jumps=jumps, seed=seed, channels=model.basis.channels,
        pairs=pairs, coherences=obs.get("coherences"), polaritonic=obs.get("polaritonic"),
        engine=engine)


def reference_state(model, psi: StateVector, steps: int, cfg: PropagatorConfig | None = None) -> StateVector:
    """No-jump Krylov evolution over ``steps`` steps (deterministic helper)."""
    cfg = cfg or PropagatorConfig(dt=model.params.dt)
    for _ in range(steps):
        psi = arnoldi_step(model.hamiltonian, psi, cfg)
    return psi

