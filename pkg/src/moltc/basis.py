"""Spatial grid, single-excitation channel layout and state vectors.

Channel ordering is fixed for the whole package::

    0        GROUND      0 photons, all emitters in g, molecule in Sigma
    1        PHOTON      1 photon,  all emitters in g, molecule in Sigma
    2        MOL_PI      0 photons, all emitters in g, molecule in Pi
    2 + n    EMITTER(n)  0 photons, emitter n excited, molecule in Sigma

Nuclear wave functions are stored as samples on a uniform grid (atomic
units).  The norm of a state is ``sum |psi|^2 * spacing`` with the spacing in
bohr.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .errors import ConfigurationError, NumericalError
from .units import angstrom_to_au

GROUND = 0
PHOTON = 1
MOL_PI = 2
FIRST_EMITTER = 3


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid over the internuclear distance (bounds in angstrom)."""

    q_min: float
    q_max: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.q_min) and np.isfinite(self.q_max)):
            raise ConfigurationError("grid bounds must be finite")
        if self.q_max <= self.q_min:
            raise ConfigurationError(
                f"grid span must be positive, got [{self.q_min}, {self.q_max}]")
        if self.n_points < 2:
            raise ConfigurationError("a grid needs at least two points")

    @property
    def spacing(self) -> float:
        """Grid spacing in angstrom."""
        return (self.q_max - self.q_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        """Grid points in angstrom."""
        return np.linspace(self.q_min, self.q_max, self.n_points)

    @property
    def spacing_au(self) -> float:
        return angstrom_to_au(self.spacing)

    @property
    def points_au(self) -> np.ndarray:
        return angstrom_to_au(self.points)

    def momenta(self) -> np.ndarray:
        """Angular wave numbers (1/bohr) in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing_au)


def build_grid(q_min: float, q_max: float, n_points: int) -> SpatialGrid:
    """Build the uniform simulation grid.

    >>> round(build_grid(0.90, 2.12, 96).spacing, 6)
    0.012842
    """
    if n_points < 8:
        raise ConfigurationError(f"need at least 8 grid points, got {n_points}")
    return SpatialGrid(float(q_min), float(q_max), int(n_points))


@dataclass(frozen=True)
class BasisLayout:
    n_emitters: int
    channels: tuple = field(init=False)

    def __post_init__(self):
        if self.n_emitters < 0:
            raise ConfigurationError("number of emitters must be non-negative")
        tags = ("GROUND", "PHOTON", "MOL_PI") + tuple(
            f"EMITTER({n})" for n in range(1, self.n_emitters + 1))
        object.__setattr__(self, "channels", tags)

    @property
    def n_channels(self) -> int:
        return self.n_emitters + 3

    def emitter(self, n: int) -> int:
        """Channel index of EMITTER(n), 1-based like the physics notation."""
        if not 1 <= n <= self.n_emitters:
            raise IndexError(f"emitter {n} out of range 1..{self.n_emitters}")
        return FIRST_EMITTER + n - 1

    @property
    def emitter_slice(self) -> slice:
        return slice(FIRST_EMITTER, FIRST_EMITTER + self.n_emitters)

    def index(self, tag: str) -> int:
        return self.channels.index(tag)


def build_basis(n_emitters: int) -> BasisLayout:
    return BasisLayout(int(n_emitters))


@dataclass
class StateVector:
    """Amplitudes indexed ``(channel, grid point)`` plus their layout."""

    amplitudes: np.ndarray
    basis: BasisLayout
    grid: SpatialGrid

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        expected = (self.basis.n_channels, self.grid.n_points)
        if self.amplitudes.shape != expected:
            raise ConfigurationError(
                f"amplitudes have shape {self.amplitudes.shape}, layout needs {expected}")

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy(), self.basis, self.grid)

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real * self.grid.spacing_au)

    def normalized(self) -> StateVector:
        n2 = self.norm2()
        if not n2 > 0:
            raise NumericalError("cannot normalize a zero state")
        return StateVector(self.amplitudes / np.sqrt(n2), self.basis, self.grid)

    def populations(self) -> np.ndarray:
        """Population of every channel (sums to the squared norm)."""
        return (np.abs(self.amplitudes) ** 2).sum(axis=1) * self.grid.spacing_au

    def overlap(self, other: StateVector) -> complex:
        check_layout(self, other.basis, other.grid)
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.spacing_au)


def check_layout(psi: StateVector, basis: BasisLayout, grid: SpatialGrid) -> None:
    if psi.basis != basis or psi.grid != grid:
        raise ConfigurationError(
            f"state layout ({psi.basis.n_channels} channels, {psi.grid.n_points} points) "
            f"does not match operator layout ({basis.n_channels} channels, {grid.n_points} points)")


def kinetic_multiplier(grid: SpatialGrid, mass: float) -> np.ndarray:
    """Spectral kinetic energy k^2/2M (hartree) in FFT order."""
    return grid.momenta() ** 2 / (2.0 * mass)


def kinetic_matrix(grid: SpatialGrid, mass: float, boundary: str = "periodic") -> np.ndarray:
    """Dense kinetic-energy matrix on the grid.

    ``periodic`` is the Fourier-grid representation used by the propagator;
    ``dirichlet`` is the sine-basis (particle in a box) variant whose walls sit
    one spacing outside the first and last grid point.
    """
    n = grid.n_points
    if boundary == "periodic":
        t = sfft.ifft(kinetic_multiplier(grid, mass)[:, None] * sfft.fft(np.eye(n), axis=0), axis=0)
        t = t.real
    elif boundary == "dirichlet":
        length = (n + 1) * grid.spacing_au
        j = np.arange(1, n + 1)
        s = np.sqrt(2.0 / (n + 1)) * np.sin(np.outer(j, j) * np.pi / (n + 1))
        t = s @ np.diag((j * np.pi / length) ** 2 / (2.0 * mass)) @ s
    else:
        raise ConfigurationError(f"unknown boundary {boundary!r}")
    return 0.5 * (t + t.T)


def vibrational_states(grid: SpatialGrid, potential: np.ndarray, mass: float,
                       boundary: str = "periodic"):
    """All eigenpairs of the single-surface nuclear Hamiltonian.

    Returns energies (hartree, ascending) and eigenfunctions as columns, each
    normalized with the grid weight ``spacing_au``.
    """
    v = np.asarray(potential, dtype=float)
    if v.shape != (grid.n_points,) or not np.all(np.isfinite(v)):
        raise ConfigurationError("potential must be finite and sampled on the grid")
    if not mass > 0:
        raise ConfigurationError("mass must be positive")
    h = kinetic_matrix(grid, mass, boundary) + np.diag(v)
    energies, vecs = np.linalg.eigh(h)
    return energies, vecs / np.sqrt(grid.spacing_au)


def vibrational_ground(grid: SpatialGrid, potential: np.ndarray, mass: float,
                       boundary: str = "periodic"):
    """Lowest vibrational eigenpair ``(energy, wave function)``.

    The wave function is real, normalized on the grid and chosen positive.
    """
    energies, vecs = vibrational_states(grid, potential, mass, boundary)
    scale = max(1.0, abs(energies[0]))
    if energies[1] - energies[0] < 1e-10 * scale:
        raise NumericalError("vibrational ground state is degenerate")
    chi = vecs[:, 0].copy()
    if chi[np.argmax(np.abs(chi))] < 0:
        chi = -chi
    if not np.all(np.isfinite(chi)):
        raise NumericalError("non-finite vibrational ground state")
    return float(energies[0]), chi


def initial_state(basis: BasisLayout, grid: SpatialGrid, vib_ground: np.ndarray) -> StateVector:
    """One cavity photon on top of the vibrational ground state, emitters in g."""
    chi = np.asarray(vib_ground, dtype=complex)
    if chi.shape != (grid.n_points,):
        raise ConfigurationError("vibrational function does not match the grid")
    n2 = float(np.vdot(chi, chi).real * grid.spacing_au)
    if abs(n2 - 1.0) > 1e-8:
        raise ConfigurationError(f"vibrational function is not normalized (norm^2 = {n2:.6g})")
    amps = np.zeros((basis.n_channels, grid.n_points), dtype=complex)
    amps[PHOTON] = chi
    return StateVector(amps, basis, grid)
