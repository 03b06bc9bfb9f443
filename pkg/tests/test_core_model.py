import numpy as np
import pytest

from ullersma.config import parse_config, reference_config
from ullersma.continuum import smear_reservoir
from ullersma.errors import ConfigurationError, ValidationError
from ullersma.model import (ContinuumReservoir, DiscreteReservoir, Layered1D, MediumProfile,
                            build_model, omega_tilde_sq, omega_tilde_sq_quadrature)
from ullersma.phase_space import (FieldState, generator, hamiltonian_matrix, layout_of,
                                  raw_energy, symplectic_form)


def test_ring_stiffness_is_symmetric_positive():
    g = Layered1D(2 * np.pi, 16)
    K = g.stiffness()
    assert np.allclose(K, K.T)
    assert np.min(np.linalg.eigvalsh(K)) > 0


def test_lattice_wavenumbers_are_stiffness_eigenvalues():
    g = Layered1D(3.0, 24)
    ev = np.sort(np.linalg.eigvalsh(g.stiffness()))
    qt = np.repeat(np.sort(g.discrete_wavenumbers()), 2)
    assert np.allclose(ev, qt**2, rtol=1e-12)


def test_plane_waves_orthonormal_under_cell_volume():
    g = Layered1D(5.0, 20)
    B = g.plane_waves()
    assert np.allclose(g.dx * B.T @ B, np.eye(g.size), atol=1e-12)


@pytest.mark.parametrize("points", [15, 8, 0])
def test_ring_rejects_bad_grid(points):
    with pytest.raises(ValidationError):
        Layered1D(1.0, points)


def test_medium_validation():
    with pytest.raises(ValidationError):
        MediumProfile(np.array([0.0]), 1.0, 1.0)
    with pytest.raises(ValidationError):
        MediumProfile(1.0, 1.0, -0.1)


def test_reservoir_frequencies_must_increase():
    with pytest.raises(ValidationError):
        DiscreteReservoir([1.0, 0.5], [0.1, 0.1])


def test_omega_tilde_discrete():
    md = MediumProfile.uniform(2, 2.0, 1.5, 0.3)
    res = DiscreteReservoir([0.5, 1.0], [[0.2, 0.2], [0.4, 0.4]])
    expect = 1.5**2 + (0.2**2 + 0.4**2) / 4.0
    assert np.allclose(omega_tilde_sq(md, res), expect)


def test_omega_tilde_continuum_matches_quadrature():
    md = MediumProfile.uniform(1, 1.3, 1.0, 0.8)
    cont = ContinuumReservoir(2.0, 0.6)
    assert omega_tilde_sq(md, cont)[0] == pytest.approx(omega_tilde_sq_quadrature(md, cont),
                                                        rel=1e-12)


def test_smeared_shift_error_halves_with_n():
    # right-endpoint grid: the error is beta(0)^2 / (2 Lambda rho^2) to leading order
    md = MediumProfile.uniform(1, 1.0, 1.0, 0.8)
    cont = ContinuumReservoir(2.0, 0.6)
    exact = omega_tilde_sq(md, cont)[0]
    errs = np.array([exact - omega_tilde_sq(md, smear_reservoir(cont, n))[0]
                     for n in (64, 128, 256)])
    assert np.allclose(errs[:-1] / errs[1:], 2.0, rtol=1e-3)
    lam = 256 / cont.omega_max
    assert errs[-1] == pytest.approx(0.6**2 / (2 * lam), rel=1e-3)


def test_two_layer_profile_sampling():
    m = build_model(reference_config("two_layer_n2"))
    half = m.geometry.size // 2
    assert np.all(m.medium.rho[:half] == 1.0) and np.all(m.medium.rho[half:] == 1.5)
    assert np.allclose(m.reservoir.beta[:, 0], [0.3, 0.4])
    assert np.allclose(m.reservoir.beta[:, -1], [0.5, 0.2])


def test_config_rejects_unknown_key():
    with pytest.raises(ConfigurationError) as exc:
        parse_config("[geometry]\nkind = layered1d\nlenght = 2\n[medium]\nrho=1\nomega0=1\n"
                     "alpha=0\n")
    assert exc.value.key == "geometry.lenght"


def test_config_missing_required():
    with pytest.raises(ConfigurationError):
        parse_config("[geometry]\nkind = layered1d\n")


def test_config_digest_is_stable():
    a = reference_config("homogeneous_n3")
    b = reference_config("homogeneous_n3")
    assert a.digest() == b.digest()
    assert a.digest() != reference_config("homogeneous_n0").digest()


def test_seed_is_mandatory_for_stochastic_runs():
    cfg = parse_config("[geometry]\nkind = planewave\nq = 1\n[medium]\nrho=1\nomega0=1\nalpha=0\n")
    with pytest.raises(ConfigurationError):
        cfg.seed()
    assert cfg.seed(9) == 9


def test_hamiltonian_matrix_symmetric_positive():
    m = build_model(reference_config("two_layer_n2"))
    Hm = hamiltonian_matrix(m.geometry, m.medium, m.reservoir)
    assert np.allclose(Hm, Hm.T)
    assert np.min(np.linalg.eigvalsh(Hm)) > 0


def test_generator_is_hamiltonian():
    m = build_model(reference_config("homogeneous_n3"))
    K = generator(m.geometry, m.medium, m.reservoir)
    J = symplectic_form(K.shape[0])
    # K = J H with H symmetric means J^T K is symmetric
    S = J.T @ K
    assert np.allclose(S, S.T, atol=1e-12 * np.max(np.abs(S)))


def test_state_round_trip_and_energy_positive():
    m = build_model(reference_config("homogeneous_n3"))
    lay = layout_of(m.geometry, m.reservoir)
    y = np.random.default_rng(0).standard_normal(lay.dim)
    s = FieldState.from_vector(y, lay)
    assert np.array_equal(s.vector(), y)
    assert raw_energy(s, m.geometry, m.medium, m.reservoir) > 0
