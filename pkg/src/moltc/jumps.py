"""Lindblad jump operators and first-order jump sampling.

Jump indices are ordered ``emitter 1..N``, ``molecule``, ``photon decay``.
Dephasing operators are sqrt(gamma/2) * sigma_z of one emitter (or of the
molecule's Sigma/Pi pair); up to a global phase sigma_z just negates the
excited channel, so L^dagger L = gamma/2 and the jump probability does not
depend on the state.  Photon decay sqrt(kappa) * a moves the PHOTON channel's
nuclear function to GROUND and annihilates every zero-photon channel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import GROUND, MOL_PI, PHOTON, BasisLayout, SpatialGrid, StateVector
from .errors import ConfigurationError, InvalidJumpError

MAX_STEP_PROBABILITY = 0.1


@dataclass(frozen=True)
class JumpOperatorSet:
    """Rates in 1/(atomic time unit)."""

    n_emitters: int
    gamma: float
    kappa: float

    @property
    def n_dephasing(self) -> int:
        return self.n_emitters + 1

    @property
    def molecule_index(self) -> int:
        return self.n_emitters

    @property
    def decay_index(self) -> int:
        return self.n_emitters + 1

    @property
    def n_jumps(self) -> int:
        return self.n_emitters + 2

    def flipped_channel(self, k: int, basis: BasisLayout) -> int:
        if k < self.n_emitters:
            return basis.emitter(k + 1)
        if k == self.molecule_index:
            return MOL_PI
        raise ValueError(f"jump {k} is not a dephasing jump")

    def max_total_rate(self) -> float:
        """Upper bound of sum_k <L_k^dagger L_k> over all normalized states."""
        return self.n_dephasing * 0.5 * self.gamma + self.kappa

    def dense(self, basis: BasisLayout, grid: SpatialGrid):
        """Dense jump matrices (orthonormal grid coordinates) with rates included."""
        n = grid.n_points
        dim = basis.n_channels * n
        ops = []
        for k in range(self.n_dephasing):
            ch = self.flipped_channel(k, basis)
            diag = -np.ones(dim)
            diag[ch * n:(ch + 1) * n] = 1.0
            ops.append(np.sqrt(0.5 * self.gamma) * np.diag(diag).astype(complex))
        decay = np.zeros((dim, dim), dtype=complex)
        decay[np.arange(GROUND * n, (GROUND + 1) * n), np.arange(PHOTON * n, (PHOTON + 1) * n)] = 1.0
        ops.append(np.sqrt(self.kappa) * decay)
        return ops


def build_jumps(n_emitters: int, gamma_au: float, kappa_au: float) -> JumpOperatorSet:
    if gamma_au < 0 or kappa_au < 0:
        raise ConfigurationError("rates must be non-negative")
    return JumpOperatorSet(int(n_emitters), float(gamma_au), float(kappa_au))


def check_step(ops: JumpOperatorSet, dt: float) -> None:
    if dt * ops.max_total_rate() >= MAX_STEP_PROBABILITY:
        raise ConfigurationError(
            f"jump probability per step {dt * ops.max_total_rate():.3g} exceeds "
            f"{MAX_STEP_PROBABILITY}; use a smaller dt")


def subdivision_level(ops: JumpOperatorSet, dt: float) -> int:
    """Smallest k such that dt / 2**k passes the step-probability guard."""
    k = 0
    while (dt / 2 ** k) * ops.max_total_rate() >= MAX_STEP_PROBABILITY:
        k += 1
    return k


def jump_probabilities(psi: StateVector, ops: JumpOperatorSet, dt: float) -> np.ndarray:
    """p_k = dt * <psi|L_k^dagger L_k|psi> for a normalized state."""
    check_step(ops, dt)
    probs = np.full(ops.n_jumps, dt * 0.5 * ops.gamma)
    pops = psi.populations()
    probs[ops.decay_index] = dt * ops.kappa * pops[PHOTON] / pops.sum()
    return probs


def sample_jump(probs, u: float):
    """Pick a jump from cumulative intervals; ``None`` means no jump.

    >>> sample_jump([0.1, 0.2], 0.25)
    1
    """
    cum = np.cumsum(probs)
    if cum[-1] >= 1.0:
        raise ConfigurationError(f"total jump probability {cum[-1]:.3g} must stay below 1")
    if u >= cum[-1]:
        return None
    return int(np.searchsorted(cum, u, side="right"))


def apply_jump(psi: StateVector, ops: JumpOperatorSet, k: int) -> StateVector:
    """Apply jump ``k`` and renormalize (global phases are dropped)."""
    amps = psi.amplitudes.copy()
    if k == ops.decay_index:
        if not np.any(amps[PHOTON]):
            raise InvalidJumpError("photon decay requested on a state without photon population")
        new = np.zeros_like(amps)
        new[GROUND] = amps[PHOTON]
        out = StateVector(new, psi.basis, psi.grid)
    elif 0 <= k < ops.n_dephasing:
        amps[ops.flipped_channel(k, psi.basis)] *= -1.0
        out = StateVector(amps, psi.basis, psi.grid)
    else:
        raise InvalidJumpError(f"unknown jump index {k}")
    return out.normalized()
