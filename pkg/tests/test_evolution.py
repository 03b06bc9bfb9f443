import numpy as np
import pytest

from conftest import ref_model, ref_modes
from ullersma.errors import ProjectionError
from ullersma.evolution import (check_completeness, covariance_evolve, diagonal_energy,
                                evolve_means, evolve_ode_oracle, extract_EE,
                                hamiltonian_energy, magnetic_field, project_initial,
                                propagator_matrix, sample_states, symplectic_defect,
                                taylor_step, thermal_covariance, vacuum_covariance)
from ullersma.modes import DirectSpectrum
from ullersma.phase_space import FieldState
from ullersma.units import c, eps0


def _random_state(name, seed):
    table = ref_modes(name)[0]
    y = np.random.default_rng(seed).standard_normal(table.layout.dim)
    return table, FieldState.from_vector(y, table.layout)


@pytest.mark.parametrize("name", ["vacuum", "homogeneous_n3", "two_layer_n2"])
def test_mode_set_complete(name):
    assert check_completeness(ref_modes(name)[0]) < 1e-12


def test_energy_conserved_and_diagonal():
    m = ref_model("two_layer_n2")
    table, s0 = _random_state("two_layer_n2", 3)
    coeffs = project_initial(s0, table)
    e0 = hamiltonian_energy(s0, m.geometry, m.medium, m.reservoir)
    assert diagonal_energy(coeffs) == pytest.approx(e0, rel=1e-10)
    for t in (0.7, 13.0):
        e = hamiltonian_energy(evolve_means(coeffs, table, t), m.geometry, m.medium, m.reservoir)
        assert e == pytest.approx(e0, rel=1e-10)


def test_decoupled_field_evolves_freely():
    # alpha = 0: each plane wave of the field oscillates at c q~
    m = ref_model("vacuum")
    table = ref_modes("vacuum")[0]
    g = m.geometry
    q = g.discrete_wavenumbers()[1]
    mode = g.plane_waves()[:, 2]
    s0 = FieldState.zeros(g.size, 0)
    s0.A = mode.copy()
    coeffs = project_initial(s0, table)
    for t in (0.3, 2.0, 9.1):
        s = evolve_means(coeffs, table, t)
        assert np.allclose(s.A, mode * np.cos(c * q * t), atol=1e-12)
        assert np.allclose(s.Pi, -eps0 * c * q * mode * np.sin(c * q * t), atol=1e-12)


def test_matches_ode_oracle_short_run():
    m = ref_model("homogeneous_n3")
    table, s0 = _random_state("homogeneous_n3", 1)
    coeffs = project_initial(s0, table)
    times = np.linspace(0.0, 4.0, 5)
    run = evolve_ode_oracle(s0, times, m.geometry, m.medium, m.reservoir)
    for i, t in enumerate(times):
        assert np.allclose(evolve_means(coeffs, table, t).vector(), run.y[i], atol=1e-9)
    assert run.energy_drift < 1e-10


def test_taylor_step_matches_expm():
    from scipy.linalg import expm
    K = np.array([[0.0, 1.0], [-4.0, 0.0]])
    assert np.allclose(taylor_step(K, 0.1), expm(0.1 * K), atol=1e-15)


def test_propagator_symplectic_and_group_law():
    table = ref_modes("two_layer_n2")[0]
    S1, S2 = propagator_matrix(table, 0.8), propagator_matrix(table, 1.5)
    assert symplectic_defect(S1) < 1e-10
    assert np.allclose(S2 @ S1, propagator_matrix(table, 2.3), atol=1e-10)


def test_incomplete_mode_set_rejected():
    table, s0 = _random_state("homogeneous_n3", 2)
    keep = np.arange(len(table) - 1)
    partial = DirectSpectrum(table.geometry, table.reservoir, table.omega[keep],
                             table.amplitudes()[:, keep])
    with pytest.raises(ProjectionError):
        project_initial(s0, partial)


def test_thermal_covariance_stationary_and_physical():
    table = ref_modes("homogeneous_n3")[0]
    cov = thermal_covariance(table, 0.5)
    assert cov.floor_defect() < 1e-10
    later = covariance_evolve(cov, propagator_matrix(table, 3.7), t=3.7)
    assert np.allclose(later.matrix, cov.matrix, atol=1e-10 * np.max(np.abs(cov.matrix)))
    vac = vacuum_covariance(table)
    lay = table.layout
    assert extract_EE(vac, lay, 2, 2) > 0
    assert extract_EE(vac, lay, 2, 5) == pytest.approx(extract_EE(vac, lay, 5, 2), rel=1e-12)


def test_sampling_is_seeded():
    table = ref_modes("homogeneous_n0")[0]
    cov = vacuum_covariance(table)
    a = sample_states(cov, 4, seed=12)
    assert np.array_equal(a, sample_states(cov, 4, seed=12))
    assert not np.array_equal(a, sample_states(cov, 4, seed=13))


def test_magnetic_field_of_plane_wave():
    g = ref_model("vacuum").geometry
    s = FieldState.zeros(g.size, 0)
    s.A = np.sin(g.wavenumbers()[0] * g.x)
    B = magnetic_field(s, g)
    q = g.wavenumbers()[0]
    assert np.allclose(B, q * np.cos(q * (g.x + g.dx / 2)) * np.sinc(q * g.dx / (2 * np.pi)),
                       atol=1e-12)
