import numpy as np
import pytest

from ullersma.errors import DomainError, PoleProximityError
from ullersma.model import ContinuumReservoir, DiscreteReservoir, MediumProfile
from ullersma.spectral import (Branch, SpectralContext, all_h_zeros, check_h_identities,
                               ds2eps_ds2, epsilon_eval, h_eval, h_near_zero, h_zeros,
                               hc_boundary, hc_closed_form, hc_eval, richardson_zero,
                               zero_table)

MD = MediumProfile.uniform(2, np.array([1.0, 1.5]), np.array([1.0, 1.6]), np.array([0.8, 0.5]))
RES = DiscreteReservoir([0.7, 1.9], [[0.3, 0.5], [0.4, 0.2]])
CONT = ContinuumReservoir(2.0, 0.6)
MD1 = MediumProfile.uniform(1, 1.0, 1.0, 0.8)


def test_h_identities_hold():
    ctx = SpectralContext(MD, RES)
    for s, sp in [(0.3, 1.1), (1.2, 2.5), (2.2, 0.9)]:
        r1, r2 = check_h_identities(ctx, s, sp)
        assert r1 < 1e-13 and r2 < 1e-13


def test_h_zeros_interlace_poles():
    for x in range(MD.size):
        z = h_zeros(SpectralContext(MD, RES, x))
        assert len(z) == RES.N + 1
        assert z[0] < 0.7 < z[1] < 1.9 < z[2]
        for v in z:
            assert abs(h_eval(SpectralContext(MD, RES, x), v, guard=False)) < 1e-12


def test_zero_table_padding():
    res = DiscreteReservoir([0.7, 1.9], [[0.3, 0.0], [0.4, 0.2]])
    tab = zero_table(MD, res)
    counts = [len(z) for z in all_h_zeros(MD, res)]
    assert tab.shape == (2, max(counts))
    assert np.sum(np.isfinite(tab)) == sum(counts)


def test_h_near_zero_matches_direct_evaluation():
    ctx = SpectralContext(MD, RES)
    zeros = zero_table(MD, RES)
    anchor = zeros[0, 1]
    for d in (1e-3, -2e-4, 1e-6):
        assert np.allclose(h_near_zero(ctx, anchor, d, zeros),
                           h_eval(ctx, anchor + d, guard=False), rtol=1e-9, atol=1e-14)
    # exact zero at the anchor itself
    assert h_near_zero(ctx, anchor, 0.0, zeros)[0] == 0.0


def test_pole_guard():
    ctx = SpectralContext(MD, RES)
    with pytest.raises(PoleProximityError):
        h_eval(ctx, 0.7 * (1 + 1e-12))


def test_epsilon_real_on_axis_and_symmetric():
    ctx = SpectralContext(MD, RES)
    z = 1.3 + 0.2j
    e = epsilon_eval(ctx, z)
    assert np.allclose(epsilon_eval(ctx, np.conj(z)), np.conj(e))
    assert np.allclose(epsilon_eval(ctx, -z), e)
    assert np.all(np.isreal(epsilon_eval(ctx, 1.3)))


def test_slope_matches_finite_difference():
    ctx = SpectralContext(MD, RES, 0)
    s, d = 1.25, 1e-6
    f = lambda v: v**2 * epsilon_eval(ctx, v)
    fd = (f(s + d) - f(s - d)) / ((s + d)**2 - (s - d)**2)
    assert ds2eps_ds2(ctx, s) == pytest.approx(fd, rel=1e-7)


def test_hc_closed_form_matches_quadrature():
    ctx = SpectralContext(MD1, CONT, 0)
    for z in (0.8 + 0.3j, 2.1 + 0.05j, 0.2 + 1.0j):
        assert hc_eval(ctx, z) == pytest.approx(hc_closed_form(ctx, z), rel=1e-9)
    for z in (1.1 - 0.3j, 2.0 + 0.2j):
        assert hc_eval(ctx, z, Branch.CONTINUED) == pytest.approx(
            hc_closed_form(ctx, z, Branch.CONTINUED), rel=1e-8)


def test_hc_reflection_symmetry():
    ctx = SpectralContext(MD1, CONT, 0)
    for z in (0.8 + 0.3j, 1.7 + 0.02j):
        assert hc_closed_form(ctx, -np.conj(z)) == pytest.approx(
            np.conj(hc_closed_form(ctx, z)), rel=1e-13)
        assert hc_closed_form(ctx, np.conj(z), Branch.LOWER) == pytest.approx(
            np.conj(hc_closed_form(ctx, z)), rel=1e-13)


def test_hc_boundary_imaginary_part():
    ctx = SpectralContext(MD1, CONT, 0)
    for w in (0.5, 1.5, 3.0):
        exact = np.pi * w * CONT.beta_sq(w)[0] / 2.0
        assert hc_boundary(ctx, w).imag == pytest.approx(exact, rel=1e-6)
        assert hc_closed_form(ctx, w + 0j).imag == pytest.approx(exact, rel=1e-12)


def test_hc_branch_domains():
    ctx = SpectralContext(MD1, CONT, 0)
    with pytest.raises(DomainError):
        hc_eval(ctx, 1.0 - 0.1j, Branch.UPPER)
    with pytest.raises(DomainError):
        hc_eval(ctx, 1.0 + 5.0j, Branch.CONTINUED)


def test_richardson_exact_for_polynomials():
    etas = [0.1, 0.05, 0.01]
    vals = [3.0 + 2 * e - 5 * e**2 for e in etas]
    assert richardson_zero(etas, vals) == pytest.approx(3.0, abs=1e-13)
