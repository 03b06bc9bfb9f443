import numpy as np
import pytest

from conftest import ref_model
from ullersma import continuum as C
from ullersma.errors import ComparisonWindowError, DomainError, ValidationError
from ullersma.evolution import evolve_means, project_initial
from ullersma.model import ContinuumReservoir, MediumProfile, PlaneWave
from ullersma.modes import direct_spectrum
from ullersma.spectral import Branch

MD = MediumProfile.uniform(1, 1.0, 1.0, 0.8)
CONT = ContinuumReservoir(2.0, 0.6)
Q = 1.2


def test_smearing_plan():
    plan = C.smearing_plan(CONT, 512)
    assert plan.density == pytest.approx(512 / CONT.omega_max)
    assert plan.omega[0] == pytest.approx(1 / plan.density)
    assert plan.omega[-1] == pytest.approx(CONT.omega_max)
    assert plan.guard == pytest.approx(np.pi * plan.density)
    with pytest.raises(ValidationError):
        C.smearing_plan(CONT, 4)


def test_closed_form_and_quadrature_agree():
    for z in (0.9, 1.7 + 0.1j):
        a = C.hc_values(MD, CONT, z, method=C.CLOSED)
        b = C.hc_values(MD, CONT, z, method=C.QUADRATURE)
        assert np.allclose(a, b, rtol=1e-7)


def test_absorption_positive_on_axis():
    tab = C.epsilon_c_table(MD, CONT, np.linspace(0.1, 5.0, 30))
    assert np.all(tab[:, 2] > 0)


def test_green_c_closed_vs_quadrature():
    g = ref_model("smeared_n128").geometry
    md = MediumProfile.uniform(g.size, 1.0, 1.0, 0.8)
    a = C.green_c(g, md, CONT, 1.4 + 0.2j)
    b = C.green_c(g, md, CONT, 1.4 + 0.2j, method=C.QUADRATURE)
    assert np.allclose(a, b, rtol=1e-7, atol=1e-12)
    assert np.allclose(a, a.T)


def test_sources_vanish_for_quiet_state():
    z = np.zeros(3)
    src = C.continuum_sources(C.ContinuumState(z, z, z, z), MediumProfile.uniform(3, 1, 1, 1),
                              1.3, 0.7)
    for v in (src.j_em, src.j_d, src.j_r):
        assert not np.any(v)


def test_continuum_field_recovers_initial_value():
    st = C.ContinuumState(np.zeros(1), np.array([1.0]), np.zeros(1), np.zeros(1))
    E0 = C.evolve_continuum_E(PlaneWave(Q), MD, CONT, st, [0.0])
    assert E0[0, 0] == pytest.approx(-1.0, abs=1e-8)


def test_smeared_run_converges_as_one_over_n():
    g = PlaneWave(Q)
    gam = min(p.rate for p in C.decay_rate(Q, MD, CONT))
    st = C.ContinuumState(np.zeros(1), np.array([1.0]), np.zeros(1), np.zeros(1))
    ts = np.linspace(0, 2 / gam, 12)
    Ec = C.evolve_continuum_E(g, MD, CONT, st, ts)[:, 0]
    runs = []
    for N in (128, 256, 512):
        plan = C.smearing_plan(CONT, N)
        table = direct_spectrum(g, MD, C.smear_reservoir(CONT, N))
        coeffs = project_initial(st.discretize(plan), table)
        runs.append(np.array([evolve_means(coeffs, table, t).E[0] for t in ts]))
    errs = [np.linalg.norm(Ec - E) / np.linalg.norm(Ec) for E in runs]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.02)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.02)
    extrapolated = 2 * runs[2] - runs[1]
    assert np.linalg.norm(Ec - extrapolated) / np.linalg.norm(Ec) < 0.05 * errs[2]


def test_comparison_window_enforced():
    st = C.ContinuumState(np.zeros(1), np.array([1.0]), np.zeros(1), np.zeros(1))
    with pytest.raises(ComparisonWindowError):
        C.evolve_continuum_E(PlaneWave(Q), MD, CONT, st, [10.0], guard=5.0)


def test_poles_in_lower_half_plane():
    for est in C.decay_rate(Q, MD, CONT):
        assert -CONT.strip_halfwidth < est.pole.imag < 0
        assert est.residual < 1e-8


def test_weak_coupling_rate_scales_with_bath_strength():
    rates = [C.decay_rate(Q, MD, ContinuumReservoir(2.0, b), "lower").rate
             for b in (0.05, 0.05 * np.sqrt(2))]
    assert rates[1] / rates[0] == pytest.approx(2.0, rel=0.01)


def test_decay_needs_homogeneous_medium():
    md = MediumProfile(np.array([1.0, 2.0]), 1.0, 0.8)
    with pytest.raises(DomainError):
        C.decay_rate(Q, md, ContinuumReservoir(2.0, 0.6))


def test_fit_damped_cosine_recovers_parameters():
    t = np.linspace(0, 30, 2000)
    y = 1.7 * np.exp(-0.08 * t) * np.cos(1.3 * t + 0.4)
    A, g, W, phi, rms = C.fit_damped_cosine(t, y)
    assert (A, g, W) == pytest.approx((1.7, 0.08, 1.3), rel=1e-6)
    assert rms < 1e-8


def test_asymptotic_field_zero_without_bath_excitation():
    g = ref_model("smeared_n128").geometry
    md = MediumProfile.uniform(g.size, 1.0, 1.0, 0.8)
    E = C.asymptotic_E(g, md, CONT, [0.0, 5.0])
    assert not np.any(E)
    plan = C.smearing_plan(CONT, 64)
    E = C.asymptotic_E(g, md, CONT, [1.0], plan=plan, Qn=np.zeros((64, g.size)))
    assert not np.any(E)


def test_fluctuations_symmetric_positive():
    m = ref_model("smeared_n128")
    C57 = C.fluctuation_integral(m.geometry, m.medium, m.continuum, C.band_energy(0.4, 1.8))
    assert np.allclose(C57, C57.T, rtol=1e-10)
    assert np.min(np.linalg.eigvalsh(C57)) > -1e-12 * np.max(np.abs(C57))
    assert np.all(np.diag(C57) > 0)
    # translation invariance of the homogeneous ring
    assert np.allclose(np.diag(C57), C57[0, 0], rtol=1e-8)


def test_fluctuations_linear_in_bath_energy():
    m = ref_model("smeared_n128")
    a = C.fluctuation_integral(m.geometry, m.medium, m.continuum, C.band_energy(0.4, 1.8, 1.0))
    b = C.fluctuation_integral(m.geometry, m.medium, m.continuum, C.band_energy(0.4, 1.8, 3.0))
    assert np.allclose(b, 3 * a, rtol=1e-8)


def test_lower_branch_is_mirror_of_upper():
    a = C.hc_values(MD, CONT, 1.1 + 0.2j, Branch.UPPER)
    b = C.hc_values(MD, CONT, 1.1 - 0.2j, Branch.LOWER)
    assert np.allclose(b, np.conj(a))
