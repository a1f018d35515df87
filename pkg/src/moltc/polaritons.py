"""Polaritonic surfaces, eigenvector tracking and polaritonic populations.

Surfaces come from diagonalizing the excited-sector potential matrix at every
grid point with the kinetic energy left out.  The emitter block is permutation
symmetric, so the matrix splits exactly into a bright block spanned by
(PHOTON, MOL_PI, symmetric emitter combination) and an (N-1)-fold degenerate
dark block at V_sigma + hbar*w_a whose vectors are the emitter combinations
with zero sum.  Diagonalizing the two blocks separately keeps the dark
manifold well defined even where the middle polariton becomes degenerate with
it (exactly at the resonance point).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .basis import FIRST_EMITTER, GROUND, MOL_PI, PHOTON, StateVector, vibrational_states
from .errors import ConfigurationError
from .hamiltonian import ModelParams, assemble
from .basis import build_basis
from .molecular import GriddedCurves, resonance_position

log = logging.getLogger(__name__)

TIE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PolaritonSurfaces:
    """Eigen-surfaces along q.

    ``eigenvectors`` has shape (state, excited channel, grid point) where the
    excited channels are PHOTON, MOL_PI, EMITTER(1..N) (GROUND is decoupled and
    reported through ``ground_energy``).  ``bright_vectors`` holds the bright
    states in the reduced (PHOTON, MOL_PI, symmetric emitter) coordinates.
    """

    grid: object
    n_emitters: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: tuple
    ground_energy: np.ndarray
    bright_vectors: np.ndarray
    q_star: float | None = None
    splitting: float | None = None

    @property
    def n_bright(self) -> int:
        return self.bright_vectors.shape[0]

    @property
    def dark_mask(self) -> np.ndarray:
        return np.array([lab.startswith("DARK") for lab in self.labels])

    @property
    def splitting_rate_fs(self) -> float | None:
        """Collective splitting as an angular frequency in 1/fs."""
        from .units import AU_TIME_FS
        return None if self.splitting is None else self.splitting / AU_TIME_FS


def dark_basis(n_emitters: int) -> np.ndarray:
    """Orthonormal zero-sum emitter vectors as columns, shape (N, N-1)."""
    if n_emitters < 2:
        return np.zeros((n_emitters, 0))
    ones = np.ones((n_emitters, 1)) / np.sqrt(n_emitters)
    q, _ = np.linalg.qr(np.hstack([ones, np.eye(n_emitters)[:, :-1]]))
    q = q[:, 1:]
    return q - ones @ (ones.T @ q)


def bright_matrices(v_sigma, v_pi, mu_m, params: ModelParams) -> np.ndarray:
    """Bright-block potential matrices, shape (points, B, B) with B = 2 or 3."""
    v_sigma, v_pi, mu_m = np.broadcast_arrays(*(np.atleast_1d(np.asarray(x, float))
                                                for x in (v_sigma, v_pi, mu_m)))
    n = params.n_emitters
    b = 3 if n > 0 else 2
    ec = params.field_au
    m = np.zeros((v_sigma.size, b, b))
    m[:, 0, 0] = v_sigma + params.omega_c
    m[:, 1, 1] = v_pi
    m[:, 0, 1] = m[:, 1, 0] = ec * mu_m
    if n > 0:
        m[:, 2, 2] = v_sigma + params.omega_a
        m[:, 0, 2] = m[:, 2, 0] = ec * params.mu_a_au * np.sqrt(n)
    return m


def excited_potential_matrix(curves: GriddedCurves, params: ModelParams, j: int) -> np.ndarray:
    """Full (N+2)x(N+2) excited-sector potential matrix at grid point ``j``."""
    h = assemble(build_basis(params.n_emitters), curves, params)
    idx = list(range(PHOTON, h.basis.n_channels))
    m = np.diag(h.potentials[idx, j])
    for a, b, prof in h.couplings:
        m[a - 1, b - 1] += prof[j]
        m[b - 1, a - 1] += prof[j]
    return m


def _bright_eig(mats):
    w, v = np.linalg.eigh(mats)
    return w[:, ::-1], v[:, :, ::-1]   # descending: UP first


def diagonalize_at(q: float, curves: GriddedCurves, params: ModelParams):
    """Bright eigenvalues (descending) at an arbitrary q (angstrom) via splines."""
    grid_q = curves.grid.points
    vals = [CubicSpline(grid_q, np.asarray(a), bc_type="natural")(q)
            for a in (curves.V_sigma, curves.V_pi, curves.mu_m)]
    w, _ = _bright_eig(bright_matrices(*vals, params))
    return w[0]


def collective_splitting(params: ModelParams, mu_m_au: float) -> float:
    """Closed-form UP-LP gap at resonance, 2 E_c sqrt(N mu_a^2 + mu_m^2), hartree."""
    return 2.0 * params.field_au * np.sqrt(params.n_emitters * params.mu_a_au ** 2 + mu_m_au ** 2)


def pointwise_diagonalize(curves: GriddedCurves, params: ModelParams, track: bool = True) -> PolaritonSurfaces:
    n = params.n_emitters
    npts = curves.grid.n_points
    w, v = _bright_eig(bright_matrices(curves.V_sigma, curves.V_pi, curves.mu_m, params))
    nb = w.shape[1]
    labels = ("UP", "LP") if nb == 2 else ("UP", "MP", "LP")
    dark = dark_basis(n)
    n_dark = dark.shape[1]
    labels = labels + tuple(f"DARK({i})" for i in range(1, n_dark + 1))
    n_states = nb + n_dark
    vals = np.empty((n_states, npts))
    vecs = np.zeros((n_states, n + 2, npts))
    bright = np.transpose(v, (2, 1, 0))           # (state, reduced channel, point)
    vals[:nb] = w.T
    vecs[:nb, 0] = bright[:, 0]
    vecs[:nb, 1] = bright[:, 1]
    if n > 0:
        vecs[:nb, 2:] = bright[:, 2][:, None, :] / np.sqrt(n)
    vals[nb:] = np.asarray(curves.V_sigma) + params.omega_a
    vecs[nb:, 2:] = dark.T[:, :, None]
    q_star = splitting = None
    try:
        q_star = resonance_position(curves, params.omega_c)
    except ConfigurationError:
        pass
    if q_star is not None:
        gaps = diagonalize_at(q_star, curves, params)
        splitting = float(gaps[0] - gaps[-1])
    surf = PolaritonSurfaces(curves.grid, n, vals, vecs, labels, np.asarray(curves.V_sigma).copy(),
                             bright, q_star, splitting)
    return track_eigenvectors(surf) if track else surf


def track(eigenvalues, eigenvectors, tie_tol=TIE_TOL):
    """Reorder states point to point by greedy overlap maximization.

    ``eigenvalues`` is (state, point) and ``eigenvectors`` (state, component,
    point).  Returns reordered copies, sign/phase fixed so that overlaps
    between neighbouring points are real and positive, plus the list of grid
    indices where a tie had to be broken by eigenvalue proximity.
    """
    vals = np.array(eigenvalues, copy=True)
    vecs = np.array(eigenvectors, copy=True)
    n_states, _, npts = vecs.shape
    ties = []
    for j in range(npts - 1):
        ovl = np.abs(vecs[:, :, j].conj() @ vecs[:, :, j + 1].T)
        perm = np.full(n_states, -1)
        free_r = set(range(n_states))
        free_c = set(range(n_states))
        while free_r:
            rows = sorted(free_r)
            cols = sorted(free_c)
            sub = ovl[np.ix_(rows, cols)]
            r_i, c_i = np.unravel_index(np.argmax(sub), sub.shape)
            r = rows[r_i]
            close = [cols[k] for k in range(len(cols)) if sub[r_i, k] > sub[r_i, c_i] - tie_tol]
            if len(close) > 1:
                c = min(close, key=lambda cc: abs(vals[cc, j + 1] - vals[r, j]))
                ties.append(j + 1)
                log.debug("tracking tie at point %d between states %s", j + 1, close)
            else:
                c = cols[c_i]
            perm[r] = c
            free_r.remove(r)
            free_c.remove(c)
        vals[:, j + 1] = vals[perm, j + 1]
        vecs[:, :, j + 1] = vecs[perm, :, j + 1]
        ovl_signed = np.einsum("sc,sc->s", vecs[:, :, j].conj(), vecs[:, :, j + 1])
        phase = np.where(np.abs(ovl_signed) > 0, ovl_signed / np.maximum(np.abs(ovl_signed), 1e-300), 1.0)
        vecs[:, :, j + 1] *= phase.conj()[:, None]
        if np.isrealobj(eigenvectors):
            vecs = vecs.real if np.iscomplexobj(vecs) else vecs
    return vals, vecs, sorted(set(ties))


def track_eigenvectors(surfaces: PolaritonSurfaces) -> PolaritonSurfaces:
    vals, vecs, ties = track(surfaces.eigenvalues, surfaces.eigenvectors)
    if ties:
        log.info("eigenvector tracking broke %d ties by eigenvalue proximity", len(ties))
    nb = surfaces.n_bright
    bright = np.array(surfaces.bright_vectors, copy=True)
    # keep the reduced bright vectors consistent with the reordered full vectors
    bright[:, 0] = vecs[:nb, 0]
    bright[:, 1] = vecs[:nb, 1]
    if surfaces.n_emitters > 0:
        bright[:, 2] = vecs[:nb, 2:].sum(axis=1) / np.sqrt(surfaces.n_emitters)
    return replace(surfaces, eigenvalues=vals, eigenvectors=vecs, bright_vectors=bright)


def project_populations(psi: StateVector, surfaces: PolaritonSurfaces):
    """Populations of each polaritonic state and of GROUND.

    Returns ``(state_populations, ground_population)``; for a normalized state
    they sum to one.
    """
    if psi.basis.n_emitters != surfaces.n_emitters or psi.grid != surfaces.grid:
        raise ConfigurationError("state and surfaces belong to different models")
    excited = psi.amplitudes[PHOTON:]
    amps = np.einsum("scj,cj->sj", surfaces.eigenvectors.conj(), excited)
    dq = psi.grid.spacing_au
    pops = (np.abs(amps) ** 2).sum(axis=1) * dq
    ground = float((np.abs(psi.amplitudes[GROUND]) ** 2).sum() * dq)
    return pops, ground


def reduced_amplitudes(psi: StateVector):
    """(PHOTON, MOL_PI, symmetric emitter) amplitudes and the dark population."""
    a = psi.amplitudes
    n = psi.basis.n_emitters
    em = a[FIRST_EMITTER:]
    if n:
        sym = em.sum(axis=0) / np.sqrt(n)
        dark = float(((np.abs(em) ** 2).sum() - (np.abs(sym) ** 2).sum()) * psi.grid.spacing_au)
    else:
        sym = np.zeros(psi.grid.n_points, complex)
        dark = 0.0
    return a[PHOTON], a[MOL_PI], sym, max(dark, 0.0)


def bright_populations(photon, pi, sym, surfaces: PolaritonSurfaces, spacing: float) -> np.ndarray:
    """Bright-state populations from reduced amplitudes (grid samples)."""
    red = np.stack([photon, pi, sym])[: surfaces.bright_vectors.shape[1]]
    amps = np.einsum("scj,cj->sj", surfaces.bright_vectors.conj(), red)
    return (np.abs(amps) ** 2).sum(axis=1) * spacing


# ---------------------------------------------------------------------------
# dephasing operator in the full vibronic eigenbasis

def _optimal_partition(energies, mass, eps):
    """Contiguous blocks of width <= eps that keep the most of ``mass`` inside blocks.

    Dynamic programming over the energy-ordered states; ``mass`` is the
    elementwise squared modulus of the operator.
    """
    n = energies.size
    prefix = np.zeros((n + 1, n + 1))
    prefix[1:, 1:] = mass.cumsum(axis=0).cumsum(axis=1)
    best = np.full(n + 1, -np.inf)
    best[0] = 0.0
    start = np.zeros(n + 1, dtype=int)
    for j in range(1, n + 1):
        for i in range(j - 1, -1, -1):
            if energies[j - 1] - energies[i] > eps:
                break
            inside = prefix[j, j] - prefix[i, j] - prefix[j, i] + prefix[i, i]
            if best[i] + inside > best[j]:
                best[j] = best[i] + inside
                start[j] = i
    cuts = []
    j = n
    while j > 0:
        cuts.append(start[j])
        j = start[j]
    ids = np.zeros(n, dtype=int)
    for c in sorted(cuts)[1:]:
        ids[c:] += 1
    return ids


def cluster_energies(energies, eps, linkage="optimal", mass=None):
    """Group sorted energies into blocks; returns a block id per state.

    ``diameter``: greedy from the lowest level, each block spans at most
    ``eps``.  ``single``: a new block starts whenever the gap to the previous
    level exceeds ``eps``.  ``optimal``: blocks span at most ``eps`` and are
    placed to keep the largest share of ``mass`` (required) inside blocks.
    """
    energies = np.asarray(energies)
    if energies.size == 0:
        return np.zeros(0, dtype=int)
    if linkage == "optimal":
        if mass is None:
            raise ConfigurationError("optimal linkage needs the operator mass")
        return _optimal_partition(energies, np.asarray(mass), eps)
    ids = np.zeros(energies.size, dtype=int)
    start = energies[0]
    for i in range(1, energies.size):
        if linkage == "diameter":
            new = energies[i] - start > eps
        elif linkage == "single":
            new = energies[i] - energies[i - 1] > eps
        else:
            raise ConfigurationError(f"unknown linkage {linkage!r}")
        ids[i] = ids[i - 1] + int(new)
        if new:
            start = energies[i]
    return ids


def off_block_fraction(matrix, block_ids) -> float:
    """Share of the squared Frobenius mass lying between different blocks."""
    mass = np.abs(matrix) ** 2
    same = block_ids[:, None] == block_ids[None, :]
    total = mass.sum()
    return float(mass[~same].sum() / total) if total > 0 else 0.0


@dataclass(frozen=True)
class DephasingBlockReport:
    off_block_fraction: float
    off_block_fraction_bound: float
    n_blocks: int
    eps_block: float
    linkage: str
    unitarity_error: float
    frobenius_error: float
    energy_cutoff: float
    n_bound_states: int


def eigenbasis_dephasing_matrix(model, emitter=1, eps_block=None, linkage="optimal",
                                max_dim=4096, energy_cutoff=None):
    """Transform one dephasing operator into the eigenbasis of the full Hamiltonian.

    ``model`` is a :class:`~moltc.model.ModelBundle`.  ``emitter`` is 1..N or
    ``"molecule"``.  GROUND is excluded from the diagonalization.  The block
    metric uses blocks no wider than ``eps_block`` (default: the Sigma
    fundamental E1 - E0) grouped by ``linkage`` (see :func:`cluster_energies`)
    and is computed for all states and for the states below
    ``energy_cutoff`` (default: the lowest excited-channel potential at the
    grid edges, above which states touch the window boundary, i.e. would
    dissociate).  Returns ``(transformed matrix, energies, report)``.
    """
    h = model.hamiltonian
    basis, grid = model.basis, model.grid
    n = grid.n_points
    dim = (basis.n_channels - 1) * n
    if dim > max_dim:
        raise ConfigurationError(
            f"dense dimension {dim} exceeds the cap {max_dim}; reduce N or the grid")
    full = h.dense()
    hx = full[n:, n:]
    energies, u = np.linalg.eigh(hx)
    if emitter == "molecule":
        ch = MOL_PI
    else:
        ch = basis.emitter(int(emitter))
    sz = -np.ones(dim)
    sz[(ch - 1) * n:ch * n] = 1.0
    lt = (u.conj().T * sz) @ u
    if eps_block is None:
        ev, _ = vibrational_states(grid, model.curves.V_sigma, model.params.reduced_mass)
        eps_block = float(ev[1] - ev[0])
    if energy_cutoff is None:
        edge = h.potentials[PHOTON:, [0, -1]]
        energy_cutoff = float(edge.min())
    mass = np.abs(lt) ** 2
    ids = cluster_energies(energies, eps_block, linkage, mass)
    bound = energies < energy_cutoff
    sub = lt[np.ix_(bound, bound)]
    sub_ids = cluster_energies(energies[bound], eps_block, linkage, mass[np.ix_(bound, bound)])
    report = DephasingBlockReport(
        off_block_fraction=off_block_fraction(lt, ids),
        off_block_fraction_bound=off_block_fraction(sub, sub_ids) if bound.any() else 0.0,
        n_blocks=int(ids[-1] + 1),
        eps_block=eps_block,
        linkage=linkage,
        unitarity_error=float(np.abs(u.conj().T @ u - np.eye(dim)).max()),
        frobenius_error=float(abs(np.linalg.norm(lt) - np.sqrt(dim)) / np.sqrt(dim)),
        energy_cutoff=energy_cutoff,
        n_bound_states=int(bound.sum()),
    )
    return lt, energies, report
