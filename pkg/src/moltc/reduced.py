"""Event-driven exact propagation for identical emitters.

With identical emitters the Hamiltonian never mixes the permutation-symmetric
emitter combination with the zero-sum (dark) combinations.  The state is
therefore stored as

* a bright part ``y`` on the blocks GROUND, PHOTON, MOL_PI and SYM (the
  symmetric emitter combination, kept in the eigenbasis ``W`` of the emitter
  surface Hamiltonian ``T + V_sigma + hbar*w_a``), and
* a dark part ``D`` of shape (N, n) whose rows sum to zero, also in the
  eigenbasis ``W``.  Under the Hamiltonian each of its columns only picks up
  the phase ``exp(-i eps_k t)``.

The bright effective Hamiltonian is diagonalized once, ``H' = V diag(lam) V^-1``,
so the no-jump evolution over any number of steps is a diagonal phase.  Steps
in which no jump can fire (uniform above the largest possible total jump
probability) are skipped in bulk; the remaining steps are resolved one by one
with the same sampling rule as the step-by-step engine, consuming the same
uniform stream.  The result is the same unraveling as repeated exact one-step
propagation with per-step renormalization, since renormalization does not
change any of the probability ratios.
"""
from __future__ import annotations

from bisect import bisect_right

import numpy as np
from scipy.linalg import expm

from .basis import FIRST_EMITTER, GROUND, MOL_PI, PHOTON, StateVector, kinetic_matrix
from .errors import ConfigurationError, NumericalError, PropagationError
from .jumps import sample_jump

EIG_CHECK_TOL = 1e-10
_BUFFER = 4096


class ExactEngine:
    """Diagonalized bright-sector propagator plus dark phases.

    Parameters
    ----------
    model : ModelBundle
    dt : float
        Sub-step length in atomic time units.
    """

    def __init__(self, model, dt: float):
        h = model.hamiltonian
        grid = model.grid
        self.n_emitters = n_em = model.basis.n_emitters
        self.n = n = grid.n_points
        self.dt = float(dt)
        self.jumps = model.jumps
        self.sqrt_dq = np.sqrt(grid.spacing_au)
        t = kinetic_matrix(grid, h.mass)
        pots = h.potentials
        couplings = {(a, b): prof for a, b, prof in h.couplings}
        if n_em:
            em_pots = pots[FIRST_EMITTER:]
            em_prof = np.array([couplings.get((PHOTON, FIRST_EMITTER + k)) for k in range(n_em)])
            if np.ptp(em_pots, axis=0).max() > 0 or np.ptp(em_prof, axis=0).max() > 0:
                raise ConfigurationError("the exact engine needs identical emitters")
            self.eps, self.W = np.linalg.eigh(t + np.diag(em_pots[0]))
        else:
            self.eps = np.zeros(n)
            self.W = np.zeros((n, 0))
        nb = 4 if n_em else 3
        self.n_blocks = nb
        hb = np.zeros((nb * n, nb * n))
        for blk, ch in enumerate((GROUND, PHOTON, MOL_PI)):
            hb[blk * n:(blk + 1) * n, blk * n:(blk + 1) * n] = t + np.diag(pots[ch])
        pi_prof = couplings.get((PHOTON, MOL_PI), np.zeros(n))
        hb[n:2 * n, 2 * n:3 * n] = np.diag(pi_prof)
        hb[2 * n:3 * n, n:2 * n] = np.diag(pi_prof)
        if n_em:
            hb[3 * n:, 3 * n:] = np.diag(self.eps)
            blk = np.sqrt(n_em) * em_prof[0][:, None] * self.W
            hb[n:2 * n, 3 * n:] = blk
            hb[3 * n:, n:2 * n] = blk.T
        self.h_bright = hb
        # GROUND never couples, so it is diagonalized on its own (Hermitian)
        self.lam_g, self.W_g = np.linalg.eigh(hb[:n, :n])
        heff = hb[n:, n:].astype(complex)
        idx = np.arange(n)
        heff[idx, idx] -= 0.5j * h.kappa
        lam, vec = np.linalg.eig(heff)
        self.lam_x, self.V_x = lam, vec
        self.Vinv_x = np.linalg.inv(vec)
        one_step = (vec * np.exp(-1j * lam * self.dt)) @ self.Vinv_x
        err = np.abs(one_step - expm(-1j * heff * self.dt)).max()
        if not err < EIG_CHECK_TOL:
            raise NumericalError(
                f"eigen-decomposition of the effective Hamiltonian is too inaccurate ({err:.2e})")

    def bright_columns(self, zg, zx):
        """Bright vectors from ground and excited eigen-coefficients (dim, S)."""
        return np.vstack([self.W_g @ zg, self.V_x @ zx])

    # -- state conversion -------------------------------------------------
    def split(self, psi: StateVector):
        """Bright vector and dark matrix (orthonormal coordinates) of a state."""
        x = psi.amplitudes * self.sqrt_dq
        n, n_em = self.n, self.n_emitters
        y = np.zeros(self.n_blocks * n, complex)
        y[:n], y[n:2 * n], y[2 * n:3 * n] = x[GROUND], x[PHOTON], x[MOL_PI]
        dark = np.zeros((n_em, n), complex)
        if n_em:
            em = x[FIRST_EMITTER:]
            s = em.sum(axis=0) / np.sqrt(n_em)
            y[3 * n:] = self.W.T @ s
            dark = (em - s / np.sqrt(n_em)) @ self.W
        return y, dark

    def join(self, y, dark, psi_like: StateVector) -> StateVector:
        n, n_em = self.n, self.n_emitters
        amps = np.zeros_like(psi_like.amplitudes)
        amps[GROUND], amps[PHOTON], amps[MOL_PI] = y[:n], y[n:2 * n], y[2 * n:3 * n]
        if n_em:
            s = self.W @ y[3 * n:]
            amps[FIRST_EMITTER:] = dark @ self.W.T + s / np.sqrt(n_em)
        return StateVector(amps / self.sqrt_dq, psi_like.basis, psi_like.grid)

    # -- jumps --------------------------------------------------------------
    def apply_jump(self, y, dark, k: int):
        """Apply jump ``k`` to a bright vector and dark matrix, then renormalize.

        Reference implementation of the jump rules; :func:`run_exact` applies
        the same rules incrementally.
        """
        n, n_em = self.n, self.n_emitters
        y = y.copy()
        dark = dark.copy()
        if k == self.jumps.decay_index:
            photon = y[n:2 * n].copy()
            y[:] = 0
            y[:n] = photon
            dark[:] = 0
        elif k == self.jumps.molecule_index:
            y[2 * n:3 * n] *= -1
        elif 0 <= k < n_em:
            s = y[3 * n:]
            e_k = dark[k] + s / np.sqrt(n_em)
            y[3 * n:] = s - 2 * e_k / np.sqrt(n_em)
            dark += 2 * e_k / n_em
            dark[k] -= 2 * e_k
        else:
            raise ConfigurationError(f"unknown jump index {k}")
        nrm = np.sqrt(np.vdot(y, y).real + np.vdot(dark, dark).real)
        if not nrm > 0:
            raise NumericalError("jump produced a zero state")
        return y / nrm, dark / nrm

    # -- observables --------------------------------------------------------
    def observables(self, y_cols, dark, pairs=(), bright_vectors=None):
        """Observables of S states.

        ``y_cols`` holds the bright vectors as columns (dim, S) and ``dark``
        the dark matrices (S, N, n), both in orthonormal coordinates.  Returns
        a dict with populations (S, channels), energy, dark and optionally
        coherences and polaritonic populations, all divided by the norm.
        """
        dark = np.asarray(dark)
        sym = y_cols[3 * self.n:] if self.n_emitters else None
        rows = np.einsum("smj,smj->sm", dark.conj(), dark).real
        terms = {
            "rows": rows,
            "energy": np.einsum("smj,j->s", np.abs(dark) ** 2, self.eps),
            "cross": np.einsum("smj,js->sm", dark.conj(), sym) if self.n_emitters else None,
            "row": lambda m: dark[:, m, :].T,
        }
        return self._observables(y_cols, terms, pairs, bright_vectors)

    def segment_observables(self, y_cols, segments, pairs=(), bright_vectors=None):
        """Like :meth:`observables` with the dark part given as segments.

        Each segment is ``(base, cs)``: the dark matrix is ``base * exp(-i eps
        dt c)`` at the step counts ``cs``.  Row norms and the dark energy are
        phase independent, so only the overlap with the symmetric part needs
        the phases.
        """
        n_em = self.n_emitters
        rows, energy, cross, phases = [], [], [], []
        start = 0
        for base, cs in segments:
            ph = np.exp(-1j * np.outer(self.eps * self.dt, cs))          # (n, S_seg)
            r = np.einsum("mj,mj->m", base.conj(), base).real
            rows.append(np.broadcast_to(r, (len(cs), n_em)))
            energy.append(np.full(len(cs), (np.abs(base) ** 2).sum(axis=0) @ self.eps))
            if n_em:
                s = y_cols[3 * self.n:, start:start + len(cs)]
                cross.append((base.conj() @ (ph.conj() * s)).T)
            phases.append((base, ph))
            start += len(cs)

        def row(m):
            return np.hstack([base[m][:, None] * ph for base, ph in phases])

        terms = {"rows": np.vstack(rows), "energy": np.concatenate(energy),
                 "cross": np.vstack(cross) if n_em else None, "row": row}
        return self._observables(y_cols, terms, pairs, bright_vectors)

    def _observables(self, y_cols, terms, pairs, bright_vectors):
        n, n_em = self.n, self.n_emitters
        n_s = y_cols.shape[1]
        blocks = [y_cols[b * n:(b + 1) * n] for b in range(self.n_blocks)]
        bpop = [np.einsum("ij,ij->j", b.conj(), b).real for b in blocks]
        dark_rows = terms["rows"]                                           # (S, N)
        dark_norm = dark_rows.sum(axis=1)
        norm2 = sum(bpop) + dark_norm
        pops = np.zeros((n_s, 3 + n_em))
        pops[:, GROUND], pops[:, PHOTON], pops[:, MOL_PI] = bpop[:3]
        energy = np.einsum("ij,ij->j", y_cols.conj(), self.h_bright @ y_cols).real
        if n_em:
            pops[:, FIRST_EMITTER:] = (dark_rows + bpop[3][:, None] / n_em
                                       + 2 * terms["cross"].real / np.sqrt(n_em))
            energy = energy + terms["energy"]
        out = {
            "populations": pops / norm2[:, None],
            "energy": energy / norm2,
            "dark": dark_norm / norm2,
        }
        if pairs:
            amps = {}

            def channel(ch):
                if ch not in amps:
                    if ch < FIRST_EMITTER:
                        amps[ch] = blocks[ch]
                    else:
                        eig = terms["row"](ch - FIRST_EMITTER) + blocks[3] / np.sqrt(n_em)
                        amps[ch] = self.W @ eig
                return amps[ch]

            out["coherences"] = np.array(
                [np.einsum("ij,ij->j", channel(a).conj(), channel(b)) for a, b in pairs]).T / norm2[:, None]
        if bright_vectors is not None:
            red = [blocks[PHOTON], blocks[MOL_PI]]
            if n_em:
                red.append(self.W @ blocks[3])
            proj = np.einsum("scj,cjt->sjt", bright_vectors.conj(), np.stack(red))
            bright = (np.abs(proj) ** 2).sum(axis=1).T
            out["polaritonic"] = np.column_stack([bright, dark_norm, bpop[GROUND]]) / norm2[:, None]
        return out


class _DarkRows:
    """Zero-sum dark rows stored as ``(R_m + b) * exp(-i eps c dt)``.

    An emitter jump changes every row by the same vector and one row by an
    extra amount, so keeping the common part ``b`` separately makes a jump
    O(n) instead of O(N n).
    """

    def __init__(self, dark0, eps, dt):
        self.R = np.array(dark0, dtype=complex)
        self.b = np.zeros(dark0.shape[1], complex)
        self.eps_dt = eps * dt

    def phase(self, c):
        return np.exp(-1j * self.eps_dt * c)

    def row(self, k, ph):
        return (self.R[k] + self.b) * ph

    def flip(self, k, e_k, ph):
        n_em = self.R.shape[0]
        back = e_k * ph.conj()
        self.b += 2 * back / n_em
        self.R[k] -= 2 * back

    def clear(self):
        self.R[:] = 0
        self.b[:] = 0

    def snapshots(self, cs):
        """Dark matrices at the step counts ``cs``, shape (S, N, n)."""
        ph = np.exp(-1j * np.outer(cs, self.eps_dt))
        return (self.R + self.b)[None, :, :] * ph[:, None, :]

    def segment(self, cs):
        """``(base, cs)`` pair for :meth:`ExactEngine.segment_observables`."""
        return self.R + self.b, cs

    def norm2(self):
        return np.vdot(self.R, self.R).real - self.R.shape[0] * np.vdot(self.b, self.b).real


def run_exact(engine: ExactEngine, psi0: StateVector, rng, n_steps: int, sample_steps,
              seed=None, pairs=(), bright_vectors=None, flush_every: int = 64):
    """Event-driven unraveling; returns (observable dict, jump list of (step, k)).

    ``sample_steps`` is an increasing array of step indices (0 = initial state).
    """
    jumps = engine.jumps
    n, n_em, dt = engine.n, engine.n_emitters, engine.dt
    gamma_p = 0.5 * jumps.gamma * dt
    probs = np.full(jumps.n_jumps, gamma_p)
    # prefix of the cumulative table used by sample_jump; identical floats
    cum_deph = np.cumsum(probs[:jumps.n_dephasing]).tolist()
    deph_total = cum_deph[-1]
    threshold = deph_total + dt * jumps.kappa
    lam_g_dt, lam_x_dt = engine.lam_g * dt, engine.lam_x * dt
    V_x, Vinv_x, W_g = engine.V_x, engine.Vinv_x, engine.W_g
    # row blocks of the excited vector: PHOTON, MOL_PI, SYM
    V_photon, V_pi, V_sym = V_x[:n], V_x[n:2 * n], V_x[2 * n:]
    Vinv_pi, Vinv_sym = Vinv_x[:, n:2 * n], Vinv_x[:, 2 * n:]
    sqrt_n = np.sqrt(n_em) if n_em else 1.0

    y, dark0 = engine.split(psi0)
    nrm = np.sqrt(np.vdot(y, y).real + np.vdot(dark0, dark0).real)
    y = y / nrm
    zg = W_g.T @ y[:n]
    zx = Vinv_x @ y[n:]
    cg_ref = cx_ref = 0
    dark = _DarkRows(dark0 / nrm, engine.eps, dt)
    n_jump = 0
    absorbed = False
    log = []
    sample_steps = np.asarray(sample_steps)
    sp = 0
    pend_g, pend_x, pend_d = [], [], []
    n_pending = 0
    chunks = []
    buf = np.empty(0)
    buf_start = 0
    pos = 0

    def flush():
        if pend_g:
            cols = engine.bright_columns(np.hstack(pend_g), np.hstack(pend_x))
            chunks.append(engine.segment_observables(cols, list(pend_d), pairs, bright_vectors))
            pend_g.clear()
            pend_x.clear()
            pend_d.clear()

    def record_upto(limit):
        nonlocal sp, n_pending
        hi = int(np.searchsorted(sample_steps, limit, side="right"))
        if hi <= sp:
            return
        cs = (sample_steps[sp:hi] - n_jump).astype(float)
        pend_g.append(zg[:, None] * np.exp(-1j * np.outer(lam_g_dt, cs - cg_ref)))
        pend_x.append(zx[:, None] * np.exp(-1j * np.outer(lam_x_dt, cs - cx_ref)))
        pend_d.append(dark.segment(cs))
        n_pending += hi - sp
        sp = hi
        if n_pending >= flush_every:
            flush()
            n_pending = 0

    hits = np.empty(0, dtype=np.int64)
    hp = 0
    next_sample = sample_steps[0]
    while True:
        j = n_steps
        if not absorbed and threshold > 0:
            while pos < n_steps:
                if pos >= buf_start + buf.size:
                    buf_start += buf.size
                    buf = rng.random(_BUFFER)
                    hits = np.flatnonzero(buf < threshold) + buf_start
                    hp = 0
                while hp < hits.size and hits[hp] < pos:
                    hp += 1
                if hp < hits.size:
                    j = min(int(hits[hp]), n_steps)
                    break
                pos = buf_start + buf.size
        if next_sample <= j:
            record_upto(j)
            next_sample = sample_steps[sp] if sp < sample_steps.size else n_steps + 1
        if j >= n_steps:
            break
        u = float(buf[j - buf_start])
        pos = j + 1
        c = j - n_jump
        zc = zx * np.exp(-1j * lam_x_dt * (c - cx_ref))
        if u < deph_total:
            k = bisect_right(cum_deph, u)
        else:
            photon = V_photon @ zc
            yx = V_x @ zc
            norm2 = np.vdot(yx, yx).real + np.vdot(zg, zg).real + dark.norm2()
            if not (np.isfinite(norm2) and norm2 > 0):
                raise PropagationError("state lost its norm", seed=seed, step=j)
            probs[jumps.decay_index] = dt * jumps.kappa * np.vdot(photon, photon).real / norm2
            k = sample_jump(probs, u)
            if k is None:
                continue
        if k == jumps.decay_index:
            photon = V_photon @ zc
            zg = W_g.T @ (photon / np.linalg.norm(photon))
            cg_ref = c
            zc = np.zeros_like(zc)
            dark.clear()
            absorbed = True
        elif k == jumps.molecule_index:
            zc = zc - 2 * (Vinv_pi @ (V_pi @ zc))
        else:
            ph = dark.phase(c)
            e_k = dark.row(k, ph) + (V_sym @ zc) / sqrt_n
            zc = zc - (2 / sqrt_n) * (Vinv_sym @ e_k)
            dark.flip(k, e_k, ph)
        zx, cx_ref = zc, c
        n_jump += 1
        log.append((j, k))
    flush()
    out = {key: np.concatenate([ch[key] for ch in chunks]) for key in chunks[0]}
    for key, val in out.items():
        if not np.all(np.isfinite(val)):
            raise PropagationError(f"non-finite {key}", seed=seed, step=n_steps)
    return out, log
