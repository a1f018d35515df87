import numpy as np
import pytest
from hypothesis import settings

from moltc.basis import build_grid
from moltc.hamiltonian import ModelParams
from moltc.model import build_model
from moltc.molecular import MolecularCurves, surrogate_curves

settings.register_profile("moltc", deadline=None, max_examples=40)
settings.load_profile("moltc")


def flat_curves(v_sigma=0.0, v_pi=10.0, mu=0.0, q=(0.5, 3.0), n=20):
    """Constant curves (eV, Debye) sampled on a wide window."""
    qs = np.linspace(*q, n)
    return MolecularCurves(qs, np.full(n, v_sigma), np.full(n, v_pi), np.full(n, mu))


def surrogate_without_dipole():
    """Surrogate potentials with the molecular transition dipole switched off."""
    s = surrogate_curves()
    return MolecularCurves(s.q, s.V_sigma, s.V_pi, np.zeros_like(s.mu_m), provenance="surrogate")


@pytest.fixture(scope="session")
def default_model_n2():
    return build_model(ModelParams(n_emitters=2))


@pytest.fixture(scope="session")
def small_model():
    """Two emitters, decoupled molecule, 8-point grid: fits the dense integrator."""
    return build_model(ModelParams(n_emitters=2, gamma=0.05, kappa=0.01, duration=100.0),
                       flat_curves(), grid=build_grid(1.0, 2.0, 8))


def random_state(rng, basis, grid):
    from moltc.basis import StateVector
    amps = rng.normal(size=(basis.n_channels, grid.n_points)) + 1j * rng.normal(
        size=(basis.n_channels, grid.n_points))
    return StateVector(amps, basis, grid).normalized()


# acceptance verdicts, printed once at the end of the session
ACCEPTANCE = {}


def record_verdict(criterion, passed, detail, part=""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join((f"({name}) " if name else "") + ("pass" if p else "FAIL") + f": {d}"
                           for name, p, d in parts)
        terminalreporter.write_line(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
