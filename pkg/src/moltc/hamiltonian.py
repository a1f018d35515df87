"""Cavity + emitters + molecule Hamiltonian as a matrix-free operator.

Channel potentials (see :mod:`moltc.basis` for the ordering)::

    GROUND      V_sigma(q)
    PHOTON      V_sigma(q) + hbar*w_c
    MOL_PI      V_pi(q)
    EMITTER(n)  V_sigma(q) + hbar*w_a

Couplings under the rotating-wave approximation are PHOTON<->MOL_PI with
profile E_c(N) * mu_m(q) and PHOTON<->EMITTER(n) with the constant
E_c(N) * mu_a.  The vacuum field is reduced as E_c(N) = E_base / sqrt(N + 1).
Kinetic energy is applied to every channel with the Fourier spectral second
derivative (periodic wrap on the grid window).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from . import units
from .basis import (GROUND, MOL_PI, PHOTON, BasisLayout, SpatialGrid, StateVector,
                    check_layout, kinetic_matrix, kinetic_multiplier)
from .errors import ConfigurationError, ConsistencyError
from .molecular import CO_REDUCED_MASS, GriddedCurves

HBAR_EV_FS = 0.6582119569


@dataclass(frozen=True)
class ModelParams:
    """Physical constants in laboratory units.

    Energies in eV, dipoles in Debye, field in V/nm, rates in 1/fs, duration in
    fs and the propagation step ``dt`` in atomic time units.
    """

    photon_energy: float = 8.27
    emitter_energy: float | None = None
    mu_a: float = 1.5
    field_base: float = 3.00
    n_emitters: int = 0
    reduced_mass: float = CO_REDUCED_MASS
    kappa: float = 0.01
    gamma: float = 0.0
    duration: float = 500.0
    dt: float = 0.5

    def __post_init__(self):
        if self.emitter_energy is None:
            object.__setattr__(self, "emitter_energy", self.photon_energy)
        for name in ("photon_energy", "emitter_energy", "mu_a", "field_base",
                     "reduced_mass", "kappa", "gamma", "duration"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ConfigurationError(f"{name} must be finite and non-negative, got {value}")
        if not self.reduced_mass > 0:
            raise ConfigurationError("reduced_mass must be positive")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError("dt must be positive")
        if int(self.n_emitters) != self.n_emitters or self.n_emitters < 0:
            raise ConfigurationError("n_emitters must be a non-negative integer")
        object.__setattr__(self, "n_emitters", int(self.n_emitters))

    def replace(self, **changes) -> ModelParams:
        return replace(self, **changes)

    def field(self) -> float:
        """Vacuum field E_c(N) in V/nm."""
        return self.field_base / np.sqrt(self.n_emitters + 1)

    # atomic-unit views
    @property
    def omega_c(self) -> float:
        return units.ev_to_au(self.photon_energy)

    @property
    def omega_a(self) -> float:
        return units.ev_to_au(self.emitter_energy)

    @property
    def field_au(self) -> float:
        return units.field_v_per_nm_to_au(self.field())

    @property
    def mu_a_au(self) -> float:
        return units.debye_to_au(self.mu_a)

    @property
    def kappa_au(self) -> float:
        return units.rate_fs_to_au(self.kappa)

    @property
    def gamma_au(self) -> float:
        return units.rate_fs_to_au(self.gamma)

    @property
    def duration_au(self) -> float:
        return units.fs_to_au(self.duration)

    @property
    def quality_factor(self) -> float:
        """Q = w_c / kappa."""
        return (self.photon_energy / HBAR_EV_FS) / self.kappa if self.kappa > 0 else np.inf

    def coupling_ratio(self, mu_debye: float = 1.5) -> float:
        """Single-particle coupling E_c * mu over the photon energy."""
        return self.field_au * units.debye_to_au(mu_debye) / self.omega_c


@dataclass(frozen=True, eq=False)
class HamiltonianOperator:
    """Channel-block operator; all energies in hartree, lengths in bohr."""

    basis: BasisLayout
    grid: SpatialGrid
    mass: float
    potentials: np.ndarray          # (channels, n_points)
    coupling_a: np.ndarray          # (K,) channel indices
    coupling_b: np.ndarray          # (K,)
    coupling_profiles: np.ndarray   # (K, n_points), real
    kappa: float = 0.0
    kinetic: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        shape = (self.basis.n_channels, self.grid.n_points)
        if self.potentials.shape != shape:
            raise ConfigurationError("potential table does not match the layout")
        if self.coupling_profiles.shape != (len(self.coupling_a), self.grid.n_points):
            raise ConfigurationError("coupling table does not match the grid")
        if np.any(self.coupling_a == GROUND) or np.any(self.coupling_b == GROUND):
            raise ConfigurationError("the GROUND channel must not couple to anything")
        object.__setattr__(self, "kinetic", kinetic_multiplier(self.grid, self.mass))

    @property
    def couplings(self):
        """The coupling table as ``(channel A, channel B, profile)`` triples."""
        return [(int(a), int(b), p) for a, b, p in
                zip(self.coupling_a, self.coupling_b, self.coupling_profiles)]

    def _apply(self, amps):
        out = sfft.ifft(self.kinetic * sfft.fft(amps, axis=1), axis=1)
        out += self.potentials * amps
        a, b, prof = self.coupling_a, self.coupling_b, self.coupling_profiles
        np.add.at(out, a, prof * amps[b])
        np.add.at(out, b, prof * amps[a])
        return out

    def apply(self, psi: StateVector) -> StateVector:
        check_layout(psi, self.basis, self.grid)
        return StateVector(self._apply(psi.amplitudes), self.basis, self.grid)

    def apply_effective(self, psi: StateVector) -> StateVector:
        """Non-Hermitian H' = H - i(kappa/2) a^dagger a.

        The dephasing term is a multiple of the identity and is dropped since
        the propagation renormalizes every step.
        """
        check_layout(psi, self.basis, self.grid)
        out = self._apply(psi.amplitudes)
        out[PHOTON] -= 0.5j * self.kappa * psi.amplitudes[PHOTON]
        return StateVector(out, self.basis, self.grid)

    def effective_array(self, amps):
        out = self._apply(amps)
        out[PHOTON] -= 0.5j * self.kappa * amps[PHOTON]
        return out

    def dense(self, effective: bool = False) -> np.ndarray:
        """Dense matrix in orthonormal grid coordinates, channel-major ordering."""
        n = self.grid.n_points
        c = self.basis.n_channels
        t = kinetic_matrix(self.grid, self.mass)
        h = np.zeros((c * n, c * n), dtype=complex)
        for ch in range(c):
            blk = slice(ch * n, (ch + 1) * n)
            h[blk, blk] = t + np.diag(self.potentials[ch])
        for a, b, prof in self.couplings:
            h[a * n:(a + 1) * n, b * n:(b + 1) * n] += np.diag(prof)
            h[b * n:(b + 1) * n, a * n:(a + 1) * n] += np.diag(prof)
        if effective:
            idx = np.arange(PHOTON * n, (PHOTON + 1) * n)
            h[idx, idx] -= 0.5j * self.kappa
        return h


def assemble(basis: BasisLayout, curves: GriddedCurves, params: ModelParams) -> HamiltonianOperator:
    if basis.n_emitters != params.n_emitters:
        raise ConfigurationError(
            f"layout has {basis.n_emitters} emitters, parameters have {params.n_emitters}")
    grid = curves.grid
    n_ch = basis.n_channels
    pots = np.empty((n_ch, grid.n_points))
    pots[GROUND] = curves.V_sigma
    pots[PHOTON] = curves.V_sigma + params.omega_c
    pots[MOL_PI] = curves.V_pi
    pots[basis.emitter_slice] = curves.V_sigma + params.omega_a
    ec = params.field_au
    a_idx = [PHOTON]
    b_idx = [MOL_PI]
    profiles = [ec * np.asarray(curves.mu_m)]
    for n in range(1, basis.n_emitters + 1):
        a_idx.append(PHOTON)
        b_idx.append(basis.emitter(n))
        profiles.append(np.full(grid.n_points, ec * params.mu_a_au))
    return HamiltonianOperator(basis, grid, params.reduced_mass, pots,
                               np.array(a_idx), np.array(b_idx), np.array(profiles),
                               kappa=params.kappa_au)


def apply(h: HamiltonianOperator, psi: StateVector) -> StateVector:
    return h.apply(psi)


def apply_effective(h: HamiltonianOperator, psi: StateVector) -> StateVector:
    return h.apply_effective(psi)


def expectation_energy(h: HamiltonianOperator, psi: StateVector) -> float:
    """<psi|H|psi> / <psi|psi> for the Hermitian part, in hartree."""
    hpsi = h.apply(psi)
    num = np.vdot(psi.amplitudes, hpsi.amplitudes) * psi.grid.spacing_au
    energy = num / psi.norm2()
    if abs(energy.imag) > 1e-10 * max(abs(energy.real), 1e-300):
        raise ConsistencyError(f"energy has imaginary part {energy.imag:.3e}")
    return float(energy.real)
