import numpy as np
import pytest
from hypothesis import given, strategies as st

from moltc import units
from moltc.basis import FIRST_EMITTER, GROUND, MOL_PI, PHOTON, StateVector, build_basis, build_grid
from moltc.errors import ConfigurationError
from moltc.hamiltonian import ModelParams, assemble, expectation_energy
from moltc.model import build_model
from moltc.molecular import GriddedCurves, interpolate_to_grid, surrogate_curves
from moltc.polaritons import bright_matrices
from moltc.propagator import PropagatorConfig, arnoldi_step

from conftest import random_state


def zero_curves(grid):
    z = np.zeros(grid.n_points)
    return GriddedCurves(grid, z, z, z)


def test_n0_has_single_coupling():
    m = build_model(ModelParams(n_emitters=0))
    assert [(a, b) for a, b, _ in m.hamiltonian.couplings] == [(PHOTON, MOL_PI)]


def test_field_scaling():
    p = ModelParams(n_emitters=3)
    assert p.field() == pytest.approx(1.50)
    assert ModelParams(n_emitters=0).coupling_ratio(1.5) == pytest.approx(0.011, abs=5e-4)
    assert ModelParams().quality_factor == pytest.approx(1.26e3, rel=5e-3)


def test_params_validated():
    with pytest.raises(ConfigurationError):
        ModelParams(kappa=-1)
    with pytest.raises(ConfigurationError):
        ModelParams(dt=0)
    with pytest.raises(ConfigurationError):
        ModelParams(n_emitters=1.5)


def test_channel_potentials_and_couplings(default_model_n2):
    m = default_model_n2
    h, c, p = m.hamiltonian, m.curves, m.params
    assert np.array_equal(h.potentials[GROUND], c.V_sigma)
    assert np.allclose(h.potentials[PHOTON], c.V_sigma + p.omega_c)
    assert np.array_equal(h.potentials[MOL_PI], c.V_pi)
    assert np.allclose(h.potentials[FIRST_EMITTER:], c.V_sigma + p.omega_a)
    table = {(a, b): prof for a, b, prof in h.couplings}
    assert np.allclose(table[(PHOTON, MOL_PI)], p.field_au * c.mu_m)
    for n in (1, 2):
        assert np.allclose(table[(PHOTON, m.basis.emitter(n))], p.field_au * p.mu_a_au)


def test_ground_channel_isolated(default_model_n2):
    m = default_model_n2
    rng = np.random.default_rng(0)
    psi = random_state(rng, m.basis, m.grid)
    out = m.hamiltonian.apply(psi).amplitudes[GROUND]
    only_ground = psi.copy()
    only_ground.amplitudes[1:] = 0
    assert np.allclose(out, m.hamiltonian.apply(only_ground).amplitudes[GROUND], atol=1e-12)


def test_constant_ground_function_with_zero_potential_is_annihilated():
    g = build_grid(1.0, 2.0, 32)
    h = assemble(build_basis(1), zero_curves(g), ModelParams(n_emitters=1))
    amps = np.zeros((4, 32), complex)
    amps[GROUND] = 1.0
    assert np.abs(h.apply(StateVector(amps, h.basis, g)).amplitudes).max() < 1e-12


def test_plane_wave_is_kinetic_eigenfunction():
    g = build_grid(1.0, 2.0, 64)
    p = ModelParams(n_emitters=0, photon_energy=0.0, field_base=0.0)
    h = assemble(build_basis(0), zero_curves(g), p)
    k = 2 * np.pi * 5 / (g.n_points * g.spacing_au)
    amps = np.zeros((3, 64), complex)
    amps[MOL_PI] = np.exp(1j * k * g.points_au)
    out = h.apply(StateVector(amps, h.basis, g)).amplitudes
    assert np.allclose(out, k ** 2 / (2 * p.reduced_mass) * amps, rtol=1e-10, atol=1e-14)


def test_resonant_pair_split_by_twice_the_coupling():
    p = ModelParams(n_emitters=1)
    m = bright_matrices(0.0, 0.5, 0.0, p)[0]
    ev = np.linalg.eigvalsh(m[np.ix_([0, 2], [0, 2])])
    g = p.field_au * p.mu_a_au
    assert ev[1] - ev[0] == pytest.approx(2 * g, rel=1e-12)


def test_effective_term_only_touches_photon(default_model_n2):
    m = default_model_n2
    rng = np.random.default_rng(1)
    psi = random_state(rng, m.basis, m.grid)
    psi.amplitudes[PHOTON] = 0
    assert np.allclose(m.hamiltonian.apply_effective(psi).amplitudes, m.hamiltonian.apply(psi).amplitudes)


def test_pure_photon_decay_rates():
    g = build_grid(1.0, 2.0, 16)
    p = ModelParams(n_emitters=0, photon_energy=0.0, field_base=0.0, kappa=0.01)
    h = assemble(build_basis(0), zero_curves(g), p)
    amps = np.zeros((3, 16), complex)
    amps[PHOTON] = 1.0
    psi = StateVector(amps, h.basis, g).normalized()
    out = h.apply_effective(psi).amplitudes
    assert np.allclose(out, -0.5j * p.kappa_au * psi.amplitudes, atol=1e-15)
    dt = 0.5
    step = arnoldi_step(h, psi, PropagatorConfig(dt=dt, renormalize=False))
    loss = 1 - step.norm2()
    assert loss == pytest.approx(1 - np.exp(-p.kappa_au * dt), rel=1e-10)
    assert loss == pytest.approx(1.2e-4, rel=0.01)


def test_initial_energy_is_zero_point_plus_photon(default_model_n2):
    m = default_model_n2
    e = expectation_energy(m.hamiltonian, m.psi0)
    assert e == pytest.approx(m.E0 + m.params.omega_c, rel=1e-10)


def test_decoupled_eigenstate_energy():
    g = build_grid(0.9, 2.12, 96)
    p = ModelParams(n_emitters=1, field_base=0.0)
    m = build_model(p, grid=g)
    amps = np.zeros((4, 96), complex)
    amps[FIRST_EMITTER] = m.chi0
    psi = StateVector(amps, m.basis, g)
    assert expectation_energy(m.hamiltonian, psi) == pytest.approx(m.E0 + p.omega_a, rel=1e-10)


def test_energy_conserved_without_dissipation():
    m = build_model(ModelParams(n_emitters=2, kappa=0.0, gamma=0.0))
    cfg = PropagatorConfig(dt=m.params.dt)
    psi = m.psi0
    e0 = expectation_energy(m.hamiltonian, psi)
    steps = int(round(units.fs_to_au(100.0) / cfg.dt))
    for _ in range(steps):
        psi = arnoldi_step(m.hamiltonian, psi, cfg)
    assert abs(expectation_energy(m.hamiltonian, psi) - e0) / abs(e0) < 1e-8


def test_layout_mismatch_rejected(default_model_n2):
    m = build_model(ModelParams(n_emitters=1))
    with pytest.raises(ConfigurationError):
        default_model_n2.hamiltonian.apply(m.psi0)
    with pytest.raises(ConfigurationError):
        assemble(build_basis(3), default_model_n2.curves, ModelParams(n_emitters=2))


@pytest.fixture(scope="module")
def small_operator():
    g = build_grid(0.9, 2.12, 24)
    curves = interpolate_to_grid(surrogate_curves(), g)
    return assemble(build_basis(3), curves, ModelParams(n_emitters=3))


@given(st.integers(0, 2 ** 32 - 1))
def test_hermitian_part(small_operator, seed):
    h = small_operator
    rng = np.random.default_rng(seed)
    phi, psi = random_state(rng, h.basis, h.grid), random_state(rng, h.basis, h.grid)
    lhs = phi.overlap(h.apply(psi))
    rhs = np.conj(psi.overlap(h.apply(phi)))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_hermitian_on_hundred_pairs(default_model_n2):
    h = default_model_n2.hamiltonian
    rng = np.random.default_rng(2024)
    for _ in range(100):
        phi, psi = random_state(rng, h.basis, h.grid), random_state(rng, h.basis, h.grid)
        lhs, rhs = phi.overlap(h.apply(psi)), np.conj(psi.overlap(h.apply(phi)))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


@given(st.integers(0, 2 ** 32 - 1), st.complex_numbers(max_magnitude=5), st.complex_numbers(max_magnitude=5))
def test_linearity(small_operator, seed, alpha, beta):
    h = small_operator
    rng = np.random.default_rng(seed)
    a, b = random_state(rng, h.basis, h.grid).amplitudes, random_state(rng, h.basis, h.grid).amplitudes
    combo = h._apply(alpha * a + beta * b)
    sep = alpha * h._apply(a) + beta * h._apply(b)
    assert np.allclose(combo, sep, rtol=1e-12, atol=1e-12 * np.abs(sep).max())


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_emitter_permutation_symmetry(small_operator, seed, i, j):
    h = small_operator
    rng = np.random.default_rng(seed)
    amps = random_state(rng, h.basis, h.grid).amplitudes
    perm = np.arange(h.basis.n_channels)
    perm[[h.basis.emitter(i), h.basis.emitter(j)]] = perm[[h.basis.emitter(j), h.basis.emitter(i)]]
    assert np.allclose(h._apply(amps[perm]), h._apply(amps)[perm], atol=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_dark_combination_does_not_leak(small_operator, seed):
    h = small_operator
    rng = np.random.default_rng(seed)
    amps = np.zeros((h.basis.n_channels, h.grid.n_points), complex)
    em = rng.normal(size=(3, h.grid.n_points)) + 1j * rng.normal(size=(3, h.grid.n_points))
    em -= em.mean(axis=0)
    amps[FIRST_EMITTER:] = em
    out = h._apply(amps)
    assert np.abs(out[:FIRST_EMITTER]).max() <= 1e-12 * np.abs(out).max()
    assert np.abs(out[FIRST_EMITTER:].sum(axis=0)).max() <= 1e-10 * np.abs(out).max()
    kin = h._apply(np.vstack([np.zeros((3, h.grid.n_points)), em]))
    expected = h.potentials[FIRST_EMITTER:] * em
    # potential part of the action is (V_sigma + w_a) times the amplitudes
    assert np.allclose(kin[FIRST_EMITTER:] - np.fft.ifft(h.kinetic * np.fft.fft(em, axis=1), axis=1),
                       expected, atol=1e-10)


def test_dense_matrix_matches_operator(small_operator):
    h = small_operator
    rng = np.random.default_rng(5)
    psi = random_state(rng, h.basis, h.grid)
    dense = h.dense(effective=True)
    out = (dense @ psi.amplitudes.ravel()).reshape(psi.amplitudes.shape)
    assert np.allclose(out, h.effective_array(psi.amplitudes), atol=1e-12)
