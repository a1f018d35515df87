"""Short-time Arnoldi (Krylov) propagation of the effective Hamiltonian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .basis import StateVector
from .errors import ConfigurationError, PropagationError

BREAKDOWN_TOL = 1e-14


@dataclass(frozen=True)
class PropagatorConfig:
    krylov_order: int = 10
    dt: float = 0.5
    renormalize: bool = True

    def __post_init__(self):
        if self.krylov_order < 2:
            raise ConfigurationError("krylov_order must be at least 2")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")


def arnoldi(matvec, v, order):
    """Arnoldi iteration with modified Gram-Schmidt and one reorthogonalization.

    Returns the orthonormal basis (order, size), the square Hessenberg matrix
    and the norm of ``v``.  On breakdown the returned order is reduced.
    """
    beta = np.linalg.norm(v)
    basis = np.zeros((order, v.size), dtype=complex)
    hess = np.zeros((order, order), dtype=complex)
    basis[0] = v.ravel() / beta
    m = order
    for j in range(order):
        w = matvec(basis[j])
        for _ in range(2):
            for i in range(j + 1):
                c = np.vdot(basis[i], w)
                hess[i, j] += c
                w = w - c * basis[i]
        if j + 1 == order:
            break
        h_next = np.linalg.norm(w)
        if not np.isfinite(h_next):
            raise PropagationError("non-finite vector in Krylov iteration")
        if h_next < BREAKDOWN_TOL:
            m = j + 1
            break
        hess[j + 1, j] = h_next
        basis[j + 1] = w / h_next
    return basis[:m], hess[:m, :m], beta


def krylov_expm(matvec, v, t, order=10):
    """Approximate ``exp(-1j * t * A) v`` in an order-``order`` Krylov space."""
    v = np.asarray(v, dtype=complex)
    if not np.all(np.isfinite(v)):
        raise PropagationError("non-finite input state")
    beta = np.linalg.norm(v)
    if beta == 0:
        return np.zeros_like(v)
    order = min(order, v.size)
    basis, hess, beta = arnoldi(lambda x: matvec(x.reshape(v.shape)).ravel(), v, order)
    small = expm(-1j * t * hess)[:, 0]
    out = beta * (small @ basis)
    if not np.all(np.isfinite(out)):
        raise PropagationError("Krylov propagation produced non-finite values")
    return out.reshape(v.shape)


def arnoldi_step(h, psi: StateVector, cfg: PropagatorConfig) -> StateVector:
    """One step ``exp(-i H' dt) psi`` using the operator's effective Hamiltonian.

    ``h`` is a :class:`~moltc.hamiltonian.HamiltonianOperator` or any callable
    mapping an amplitude array to an amplitude array.
    """
    matvec = h.effective_array if hasattr(h, "effective_array") else h
    amps = krylov_expm(matvec, psi.amplitudes, cfg.dt, cfg.krylov_order)
    out = StateVector(amps, psi.basis, psi.grid)
    return out.normalized() if cfg.renormalize else out
