"""Dense density-matrix integration of the Lindblad equation (small models only).

    d rho/dt = -i[H, rho] + sum_k ( L_k rho L_k^dagger - 1/2 {L_k^dagger L_k, rho} )

integrated with classical fourth-order Runge-Kutta.  Used as the reference
against which trajectory ensembles are checked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import units
from .basis import FIRST_EMITTER, BasisLayout, SpatialGrid
from .errors import ConfigurationError, ConsistencyError

DENSE_CAP = 1024
CHECK_EVERY = 100
MAX_PHASE_STEP = 0.1


@dataclass
class DensityMatrix:
    """Density matrix in orthonormal grid coordinates, channel-major.

    ``basis`` and ``grid`` may be ``None`` for a generic square matrix (toy
    systems); channel-resolved helpers then are unavailable.
    """

    rho: np.ndarray
    basis: BasisLayout | None = None
    grid: SpatialGrid | None = None
    time: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.ndim != 2 or self.rho.shape[0] != self.rho.shape[1]:
            raise ConfigurationError("density matrix must be square")
        if (self.basis is None) != (self.grid is None):
            raise ConfigurationError("give both basis and grid or neither")
        if self.basis is not None:
            dim = self.basis.n_channels * self.grid.n_points
            if self.rho.shape != (dim, dim):
                raise ConfigurationError(f"density matrix must be {dim}x{dim}")

    @classmethod
    def from_state(cls, psi, time: float = 0.0) -> DensityMatrix:
        x = (psi.amplitudes * np.sqrt(psi.grid.spacing_au)).ravel()
        x = x / np.linalg.norm(x)
        return cls(np.outer(x, x.conj()), psi.basis, psi.grid, time)

    def check(self, tol: float = 1e-10, psd_tol: float = 1e-8) -> None:
        herm = np.abs(self.rho - self.rho.conj().T).max()
        if herm > tol:
            raise ConsistencyError(f"density matrix lost hermiticity by {herm:.2e} at t={self.time:.4g}")
        tr = np.trace(self.rho).real
        if abs(tr - 1.0) > tol:
            raise ConsistencyError(f"trace drifted to {tr:.12f} at t={self.time:.4g}")
        low = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min()
        if low < -psd_tol:
            raise ConsistencyError(f"negative eigenvalue {low:.2e} at t={self.time:.4g}")

    def purity(self) -> float:
        return float(np.vdot(self.rho, self.rho).real)

    def channel_block(self, a: int, b: int) -> np.ndarray:
        if self.grid is None:
            raise ConfigurationError("channel blocks need a basis layout")
        n = self.grid.n_points
        return self.rho[a * n:(a + 1) * n, b * n:(b + 1) * n]


class LindbladGenerator:
    """Right-hand side with the diagonal dephasing operators handled elementwise."""

    def __init__(self, h, jump_ops):
        h = np.asarray(h, dtype=complex)
        if np.abs(h - h.conj().T).max() > 1e-12 * max(1.0, np.abs(h).max()):
            raise ConfigurationError("Hamiltonian must be Hermitian")
        self.dim = h.shape[0]
        loss = np.zeros_like(h)
        self.mask = np.zeros(h.shape, dtype=complex)
        self.general = []
        for op in jump_ops:
            op = np.asarray(op, dtype=complex)
            loss += op.conj().T @ op
            if np.count_nonzero(op - np.diag(np.diag(op))) == 0:
                d = np.diag(op)
                self.mask = self.mask + np.outer(d, d.conj())
            else:
                self.general.append(op)
        self.heff = h - 0.5j * loss
        self.h = h

    def __call__(self, rho):
        hr = self.heff @ rho
        out = -1j * (hr - hr.conj().T) + self.mask * rho
        for op in self.general:
            out += op @ rho @ op.conj().T
        return out


def spectral_half_width(h) -> float:
    """Largest |E - E_mid| where E_mid is the centre of the spectrum of ``h``."""
    ev = np.linalg.eigvalsh(np.asarray(h))
    return float(0.5 * (ev[-1] - ev[0]))


def integrate_lindblad(h, jump_ops, rho0: DensityMatrix, t_final: float, dt: float,
                       sample_times=None, check_every: int = CHECK_EVERY):
    """RK4 integration; returns the density matrices at ``sample_times``.

    Times are in atomic units.  ``sample_times`` defaults to ``[t_final]``;
    every interval between samples is divided into equal steps no longer than
    ``dt``, so samples are hit exactly.  The Hamiltonian is shifted by the
    centre of its spectrum (a constant that drops out of the commutator)
    before the step-size guard ``dt * half_width < 0.1`` is applied.
    """
    h = np.asarray(h, dtype=complex)
    dim = h.shape[0]
    if dim > DENSE_CAP:
        raise ConfigurationError(f"dense dimension {dim} exceeds the oracle cap {DENSE_CAP}")
    if rho0.rho.shape != (dim, dim):
        raise ConfigurationError("initial density matrix does not match the Hamiltonian")
    ev = np.linalg.eigvalsh(h)
    centre = 0.5 * (ev[0] + ev[-1])
    half = 0.5 * (ev[-1] - ev[0])
    if dt * half >= MAX_PHASE_STEP:
        raise ConfigurationError(
            f"dt={dt:.3g} does not resolve the spectrum (dt*|H| = {dt * half:.3g} >= {MAX_PHASE_STEP})")
    gen = LindbladGenerator(h - centre * np.eye(dim), jump_ops)
    times = [float(t_final)] if sample_times is None else [float(t) for t in sample_times]
    if any(b < a for a, b in zip(times, times[1:])) or times[0] < rho0.time:
        raise ConfigurationError("sample times must be increasing and not before the start")
    rho = rho0.rho.copy()
    t = rho0.time
    steps_done = 0
    out = []
    for target in times:
        span = target - t
        n_sub = int(np.ceil(span / dt - 1e-12)) if span > 0 else 0
        if n_sub:
            h_step = span / n_sub
            for k in range(n_sub):
                k1 = gen(rho)
                k2 = gen(rho + 0.5 * h_step * k1)
                k3 = gen(rho + 0.5 * h_step * k2)
                k4 = gen(rho + h_step * k3)
                rho = rho + (h_step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                steps_done += 1
                if steps_done % check_every == 0:
                    DensityMatrix(rho, rho0.basis, rho0.grid, t + (k + 1) * h_step).check()
        t = target
        snap = DensityMatrix(rho.copy(), rho0.basis, rho0.grid, t)
        snap.check()
        out.append(snap)
    return out


def density_observables(rho: DensityMatrix, h_dense, pairs=()) -> dict:
    """Populations, energy, dark population and coherences of a density matrix."""
    basis, n = rho.basis, rho.grid.n_points
    c = basis.n_channels
    diag = np.diag(rho.rho).real.reshape(c, n)
    pops = diag.sum(axis=1)
    out = {"populations": pops, "energy": float(np.vdot(h_dense.conj().T, rho.rho).real)}
    n_em = basis.n_emitters
    if n_em:
        em = slice(FIRST_EMITTER * n, (FIRST_EMITTER + n_em) * n)
        blk = rho.rho[em, em].reshape(n_em, n, n_em, n)
        sym = np.einsum("ajbj->", blk).real / n_em
        out["dark"] = float(pops[FIRST_EMITTER:].sum() - sym)
    else:
        out["dark"] = 0.0
    if pairs:
        out["coherences"] = np.array([np.trace(rho.channel_block(b, a)) for a, b in pairs])
    return out


@dataclass
class OracleResult:
    times_fs: np.ndarray
    observables: dict
    states: list


def run_oracle(model, times_fs, dt: float = 0.25, pairs=()) -> OracleResult:
    """Integrate ``model`` densely and evaluate observables at ``times_fs``."""
    h = model.hamiltonian.dense()
    ops = model.jumps.dense(model.basis, model.grid)
    rho0 = DensityMatrix.from_state(model.psi0)
    times_au = units.fs_to_au(np.asarray(times_fs, dtype=float))
    states = integrate_lindblad(h, ops, rho0, float(times_au[-1]), dt, sample_times=times_au)
    rows = [density_observables(s, h, pairs) for s in states]
    obs = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    return OracleResult(np.asarray(times_fs, float), obs, states)


@dataclass
class ComparisonReport:
    z_scores: dict
    max_abs_z: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_abs_z < self.threshold


def compare(stats, oracle: OracleResult, observables=("populations", "energy", "dark"),
            threshold: float = 3.0, exact_tol: float = 1e-8) -> ComparisonReport:
    """z-scores (ensemble mean - oracle) / stderr at the oracle's sample times.

    Differences below ``exact_tol`` count as agreement (z = 0), which covers
    deterministic runs and observables that vanish identically; any larger
    difference with zero standard error gives an infinite z-score.
    """
    idx = []
    for t in oracle.times_fs:
        i = int(np.argmin(np.abs(stats.times_fs - t)))
        if abs(stats.times_fs[i] - t) > 1e-9 * max(1.0, t):
            raise ConfigurationError(f"ensemble has no sample at t={t} fs")
        idx.append(i)
    z_scores = {}
    worst = 0.0
    for key in observables:
        if key not in stats.mean or key not in oracle.observables:
            raise ConfigurationError(f"observable {key!r} missing from one side of the comparison")
        mean = np.asarray(stats.mean[key])[idx]
        se = np.asarray(stats.stderr[key])[idx]
        ref = np.asarray(oracle.observables[key])
        if mean.shape != ref.shape:
            raise ConfigurationError(f"observable {key!r} has mismatched shapes")
        parts = [(mean.real, se.real, ref.real)]
        if np.iscomplexobj(mean) or np.iscomplexobj(ref):
            parts.append((mean.imag, np.imag(se), ref.imag))
        zs = []
        for m, s, r in parts:
            diff = m - r
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(np.abs(diff) <= exact_tol, 0.0,
                             np.where(s > 0, diff / np.where(s > 0, s, 1.0), np.inf))
            zs.append(z)
        z = zs[0] if len(zs) == 1 else zs[0] + 1j * zs[1]
        z_scores[key] = z
        worst = max(worst, float(np.max(np.abs(np.concatenate([np.ravel(q) for q in zs])))))
    return ComparisonReport(z_scores, worst, threshold)
