"""Potential-energy and transition-dipole curves of the diatomic molecule.

Curves either come from a four-column text table or from an analytic
surrogate: two Morse wells and a tanh-shaped transition dipole, pinned to the
resonance with the cavity photon (8.27 eV gap at 1.17 angstrom) and a dipole
of about 1.5 Debye there.

Table format::

    # units: angstrom eV eV debye
    # q  V_sigma  V_pi  mu_m
    0.926  5.12  16.3  2.9
    ...
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import units
from .basis import SpatialGrid
from .errors import ConfigurationError, ExtrapolationError, FittingError, IngestionError

log = logging.getLogger(__name__)

CO_REDUCED_MASS = 12498.0  # electron masses

_LENGTH_UNITS = {"angstrom": 1.0, "bohr": units.BOHR_ANGSTROM}
_ENERGY_UNITS = {"ev": 1.0, "hartree": units.HARTREE_EV}
_DIPOLE_UNITS = {"debye": 1.0, "au": units.AU_DIPOLE_DEBYE}


@dataclass(frozen=True)
class MolecularCurves:
    """Sampled curves in angstrom / eV / Debye."""

    q: np.ndarray
    V_sigma: np.ndarray
    V_pi: np.ndarray
    mu_m: np.ndarray
    provenance: str = "tabulated"

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (self.q, self.V_sigma, self.V_pi, self.mu_m)]
        n = len(arrays[0])
        if any(a.shape != (n,) for a in arrays):
            raise ConfigurationError("curve arrays must be one-dimensional and equally long")
        if n < 4:
            raise ConfigurationError(f"need at least 4 samples, got {n}")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ConfigurationError("curves contain non-finite values")
        if np.any(np.diff(arrays[0]) <= 0):
            raise ConfigurationError("q samples must be strictly increasing")
        if self.provenance not in ("tabulated", "surrogate"):
            raise ConfigurationError(f"unknown provenance {self.provenance!r}")
        for name, a in zip(("q", "V_sigma", "V_pi", "mu_m"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class GriddedCurves:
    """Curves on the simulation grid, atomic units (hartree, e*bohr)."""

    grid: SpatialGrid
    V_sigma: np.ndarray
    V_pi: np.ndarray
    mu_m: np.ndarray

    def __post_init__(self):
        for name in ("V_sigma", "V_pi", "mu_m"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (self.grid.n_points,) or not np.all(np.isfinite(a)):
                raise ConfigurationError(f"{name} must be finite and sampled on the grid")
            a.setflags(write=False)
            object.__setattr__(self, name, a)


# ---------------------------------------------------------------------------
# file ingestion

def _parse_units(line, lineno):
    words = line.lstrip("#").split(":", 1)[1].split()
    if len(words) != 4:
        raise IngestionError("units header needs four entries (q V_sigma V_pi mu_m)", lineno)
    lu, eu1, eu2, du = (w.lower() for w in words)
    try:
        return (_LENGTH_UNITS[lu], _ENERGY_UNITS[eu1], _ENERGY_UNITS[eu2], _DIPOLE_UNITS[du])
    except KeyError as exc:
        raise IngestionError(f"unsupported unit {exc.args[0]!r}", lineno) from None


def load_curves(path) -> MolecularCurves:
    """Read a curve table; errors carry the offending line number."""
    factors = None
    rows = []
    prev_q = -np.inf
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.lstrip("#").strip().lower().startswith("units:"):
                    factors = _parse_units(line, lineno)
                continue
            if factors is None:
                raise IngestionError("data before the '# units:' header", lineno)
            fields = line.split()
            if len(fields) != 4:
                raise IngestionError(f"expected 4 columns, found {len(fields)}", lineno)
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise IngestionError(f"cannot parse numbers from {line!r}", lineno) from None
            if not all(np.isfinite(values)):
                raise IngestionError("non-finite value", lineno)
            if values[0] <= prev_q:
                raise IngestionError("q values must be strictly increasing", lineno)
            prev_q = values[0]
            rows.append(values)
    if factors is None:
        raise IngestionError("missing '# units:' header")
    if len(rows) < 4:
        raise IngestionError(f"need at least 4 samples, found {len(rows)}")
    data = np.array(rows) * np.array(factors)
    return MolecularCurves(data[:, 0], data[:, 1], data[:, 2], data[:, 3], provenance="tabulated")


def save_curves(curves: MolecularCurves, path) -> None:
    path = Path(path)
    lines = ["# units: angstrom eV eV debye", f"# provenance: {curves.provenance}",
             "# q V_sigma V_pi mu_m"]
    for row in zip(curves.q, curves.V_sigma, curves.V_pi, curves.mu_m):
        lines.append(" ".join(f"{v:.12e}" for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# analytic surrogate

@dataclass(frozen=True)
class SurrogateParams:
    """Morse wells (eV, 1/angstrom, angstrom) and dipole shape (Debye, angstrom)."""

    sigma_De: float
    sigma_a: float
    sigma_qe: float
    sigma_offset: float
    pi_De: float
    pi_a: float
    pi_qe: float
    pi_Te: float
    mu0: float = 3.0
    mu_center: float = 1.17
    mu_width: float = 0.3
    resonance_q: float = 1.17
    resonance_gap: float = 8.27

    def __post_init__(self):
        positive = dict(sigma_De=self.sigma_De, sigma_a=self.sigma_a, pi_De=self.pi_De,
                        pi_a=self.pi_a, mu0=self.mu0, mu_width=self.mu_width)
        bad = [k for k, v in positive.items() if not v > 0]
        if bad:
            raise ConfigurationError(f"surrogate parameters must be positive: {', '.join(bad)}")


def morse(q, De, a, qe, offset=0.0):
    return De * (1.0 - np.exp(-a * (np.asarray(q) - qe))) ** 2 + offset


def morse_from_spectroscopic(we_cm, wexe_cm, mass=CO_REDUCED_MASS):
    """Morse ``(D_e [eV], a [1/angstrom])`` from harmonic and anharmonic constants."""
    we = units.wavenumber_to_au(we_cm)
    wexe = units.wavenumber_to_au(wexe_cm)
    De = we ** 2 / (4.0 * wexe)
    a = we * np.sqrt(mass / (2.0 * De))
    return units.au_to_ev(De), a / units.BOHR_ANGSTROM


def fit_surrogate(sigma=(2169.81, 13.29, 1.128), pi=(1518.2, 19.4, 1.2353),
                  mass=CO_REDUCED_MASS, resonance_q=1.17, resonance_gap=8.27,
                  mu0=3.0, mu_center=1.17, mu_width=0.3) -> SurrogateParams:
    """Fit Morse parameters to spectroscopic constants ``(w_e, w_e x_e, r_e)``.

    The Pi term energy is solved so that the gap equals ``resonance_gap`` at
    ``resonance_q``.  Defaults are the X and A states of carbon monoxide.
    """
    sDe, sa = morse_from_spectroscopic(sigma[0], sigma[1], mass)
    pDe, pa = morse_from_spectroscopic(pi[0], pi[1], mass)
    gap_without_te = morse(resonance_q, pDe, pa, pi[2]) - morse(resonance_q, sDe, sa, sigma[2])
    te = resonance_gap - gap_without_te
    if not te > 0:
        raise FittingError(f"resonance at {resonance_q} A needs a negative Pi term energy")
    return SurrogateParams(sDe, sa, sigma[2], 0.0, pDe, pa, pi[2], float(te),
                           mu0=mu0, mu_center=mu_center, mu_width=mu_width,
                           resonance_q=resonance_q, resonance_gap=resonance_gap)


def default_surrogate_params() -> SurrogateParams:
    return fit_surrogate()


def surrogate_functions(p: SurrogateParams):
    """Return the three analytic curves as callables of q in angstrom."""
    def v_sigma(q):
        return morse(q, p.sigma_De, p.sigma_a, p.sigma_qe, p.sigma_offset)

    def v_pi(q):
        return morse(q, p.pi_De, p.pi_a, p.pi_qe, p.pi_Te + p.sigma_offset)

    def mu_m(q):
        return p.mu0 * 0.5 * (1.0 + np.tanh((p.mu_center - np.asarray(q)) / p.mu_width))

    return v_sigma, v_pi, mu_m


def surrogate_curves(params: SurrogateParams | None = None, q=None) -> MolecularCurves:
    """Sample the surrogate; by default on 0.80..6.35 angstrom in 0.01 steps."""
    p = params or default_surrogate_params()
    v_sigma, v_pi, mu_m = surrogate_functions(p)
    gap = float(v_pi(p.resonance_q) - v_sigma(p.resonance_q))
    if abs(gap - p.resonance_gap) > 1e-3:
        raise FittingError(
            f"gap at {p.resonance_q} A is {gap:.5f} eV, resonance requires {p.resonance_gap} eV")
    if q is None:
        q = np.round(np.arange(0.80, 6.35 + 1e-9, 0.01), 10)
    q = np.asarray(q, dtype=float)
    return MolecularCurves(q, v_sigma(q), v_pi(q), mu_m(q), provenance="surrogate")


# ---------------------------------------------------------------------------
# interpolation

def _wall_extension(q, y, q_left):
    """Continue a repulsive wall to the left of the first sample.

    The cubic of a not-a-knot spline through the samples is continued (it uses
    the curvature of the first intervals, unlike the natural spline whose
    second derivative vanishes at the end).  If that continuation is not
    strictly decreasing towards the first sample, the edge slope is continued
    linearly instead.
    """
    spline = CubicSpline(q, y)
    ext = spline(q_left)
    probe = np.append(q_left, q[0])
    if np.all(np.diff(spline(probe)) < 0) and np.all(spline(probe, 1) < 0):
        return ext
    return y[0] + spline(q[0], 1) * (q_left - q[0])


def interpolate_to_grid(curves: MolecularCurves, grid: SpatialGrid, fill: str = "error") -> GriddedCurves:
    """Natural cubic-spline interpolation onto ``grid`` and conversion to a.u.

    ``fill`` controls grid points left of the first sample: ``"error"`` refuses,
    ``"wall"`` continues both potentials as a repulsive wall (see
    :func:`_wall_extension`) and holds the dipole constant.  Grid points right of the
    last sample always raise.
    """
    qg = grid.points
    tol = 1e-9
    if qg[-1] > curves.q[-1] + tol:
        raise ExtrapolationError(
            f"grid ends at {qg[-1]:.4f} A beyond the last sample {curves.q[-1]:.4f} A")
    left = qg < curves.q[0] - tol
    if left.any() and fill != "wall":
        raise ExtrapolationError(
            f"grid starts at {qg[0]:.4f} A before the first sample {curves.q[0]:.4f} A; "
            "use fill='wall' or extend the samples")
    out = {}
    for name in ("V_sigma", "V_pi", "mu_m"):
        y = getattr(curves, name)
        vals = CubicSpline(curves.q, y, bc_type="natural")(np.clip(qg, curves.q[0], None))
        if left.any():
            if name == "mu_m":
                vals[left] = y[0]
            else:
                vals[left] = _wall_extension(curves.q, y, qg[left])
        out[name] = vals
    gap = out["V_pi"] - out["V_sigma"]
    if np.any(gap <= 0):
        raise ConfigurationError("V_pi must lie above V_sigma on the whole simulation window")
    return GriddedCurves(grid, units.ev_to_au(out["V_sigma"]), units.ev_to_au(out["V_pi"]),
                         units.debye_to_au(out["mu_m"]))


def resonance_position(gridded: GriddedCurves, photon_energy: float, tol: float = 1e-10) -> float:
    """Internuclear distance (angstrom) where ``V_pi - V_sigma`` equals the photon energy.

    ``photon_energy`` is in hartree.  The gap is splined on the grid, sign
    changes are bracketed on the grid and refined by bisection.  If several
    crossings exist the leftmost is returned.
    """
    q = gridded.grid.points
    spline = CubicSpline(q, np.asarray(gridded.V_pi) - np.asarray(gridded.V_sigma) - photon_energy,
                         bc_type="natural")
    f = spline(q)
    scale = max(abs(photon_energy), 1e-30)
    if np.all(np.abs(f) < 1e-12 * scale):
        raise ConfigurationError("gap equals the photon energy everywhere: no isolated crossing")
    exact = np.nonzero(f == 0.0)[0]
    brackets = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
    candidates = sorted([(q[i], None) for i in exact] + [(q[i], i) for i in brackets])
    if not candidates:
        raise ConfigurationError("the molecular gap never matches the photon energy on the grid")
    if len(candidates) > 1:
        log.warning("gap crosses the photon energy %d times; using the leftmost", len(candidates))
    q0, i = candidates[0]
    if i is None:
        return float(q0)
    a, b = q[i], q[i + 1]
    fa = spline(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = spline(m)
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return float(0.5 * (a + b))
