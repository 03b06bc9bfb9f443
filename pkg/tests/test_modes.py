import numpy as np
import pytest

from conftest import ref_model, ref_modes
from ullersma.errors import CrossValidationError, PoleBandError, ResonanceError
from ullersma.model import DiscreteReservoir, MediumProfile, PlaneWave
from ullersma.modes import (GreenMethod, ModeTable, amplitudes_from_mode, assemble_operator,
                            cross_validate, direct_spectrum, direct_spectrum_blocks,
                            eigensolve_at, greens_function, homogeneous_dispersion, pole_set,
                            solve_modes, symplectic_norm)
from ullersma.units import c, eps0


def test_vacuum_modes_follow_lattice_dispersion():
    m = ref_model("vacuum")
    table = ref_modes("vacuum")[0]
    field = np.sort(table.omega[table.kind == "field"])
    expect = np.sort(np.repeat(c * m.geometry.discrete_wavenumbers(), 2))
    assert np.allclose(field, expect, rtol=1e-12)
    # decoupled dielectric oscillators stay at their bare frequency
    assert np.allclose(table.omega[table.kind == "matter"], m.medium.omega0[0])


def test_lossless_polariton_pairs():
    q = 1.3
    md = MediumProfile.uniform(1, 1.0, 1.0, 0.8)
    w = homogeneous_dispersion(q, "transverse", md, DiscreteReservoir.empty(1))
    assert len(w) == 2
    a2 = 0.8**2 / (eps0 * 1.0)
    for W in w:
        eps = 1 - a2 / (W**2 - 1.0)
        assert W**2 * eps == pytest.approx(c**2 * q**2, rel=1e-12)


def test_transverse_count_with_bath():
    md = MediumProfile.uniform(1, 1.0, 1.0, 0.8)
    res = DiscreteReservoir([0.6, 1.4, 2.3], [0.3, 0.5, 0.4])
    assert len(homogeneous_dispersion(0.9, "transverse", md, res)) == res.N + 2
    assert len(homogeneous_dispersion(0.9, "longitudinal", md, res)) == res.N + 1


def test_mode_count_matches_first_order_system():
    for name in ("vacuum", "homogeneous_n3", "two_layer_n2"):
        m = ref_model(name)
        assert len(ref_modes(name)[0]) == (m.reservoir.N + 2) * m.geometry.size


def test_mode_amplitudes_solve_equations_and_are_normalised():
    table = ref_modes("two_layer_n2")[0]
    g, md, res = table.geometry, table.medium, table.reservoir
    for i in range(0, len(table), 7):
        b = amplitudes_from_mode(table, i)
        assert b.residual(g, md, res) < 1e-10
        assert symplectic_norm(b.vector(), g.cell_volume) == pytest.approx(1.0, abs=1e-10)


def test_slopes_positive():
    table = ref_modes("homogeneous_n3")[0]
    f = table.field_modes()
    assert np.all(table.dlam_ds[f] > 0)


def test_block_direct_spectrum_matches_full():
    m = ref_model("homogeneous_n3")
    full = direct_spectrum(m.geometry, m.medium, m.reservoir)
    blk = direct_spectrum_blocks(m.geometry, m.medium, m.reservoir)
    assert np.allclose(np.sort(full.omega), blk.omega, rtol=1e-12)
    # both vector sets are symplectically normalised
    for d in (full, blk):
        n = [symplectic_norm(d.vectors[:, i], m.geometry.cell_volume) for i in range(len(d))]
        assert np.allclose(n, 1.0, atol=1e-10)


def test_cross_validate_detects_shift():
    table = ref_modes("homogeneous_n3")[0]
    assert cross_validate(table) < 1e-8
    bad = ModeTable(table.geometry, table.medium, table.reservoir, table.omega * (1 + 1e-6),
                    table.k, table.l, table.u, table.dlam_ds, table.weight, table.kind,
                    table.site, table.channel)
    with pytest.raises(CrossValidationError):
        cross_validate(bad)


def test_bath_frequency_coincident_root():
    # c q equals a bath frequency and the dielectric frequency
    md = MediumProfile.uniform(1, 1.0, 1.0, 0.5)
    res = DiscreteReservoir([1.0], [0.3])
    table = solve_modes(PlaneWave(1.0), md, res)
    d = direct_spectrum(PlaneWave(1.0), md, res)
    assert np.allclose(np.sort(table.omega), np.sort(d.omega), rtol=1e-10)


def test_eigenpairs_orthonormal():
    m = ref_model("two_layer_n2")
    ep = eigensolve_at(assemble_operator(m.geometry, m.medium, m.reservoir, 0.45))
    assert ep.orthonormality_residual() < 1e-12
    assert ep.completeness_residual() < 1e-12
    assert np.all(np.diff(ep.lam) <= 0)


def test_pole_band_guard():
    m = ref_model("homogeneous_n3")
    p = pole_set(m.medium, m.reservoir)[0].value
    with pytest.raises(PoleBandError):
        assemble_operator(m.geometry, m.medium, m.reservoir, p * (1 + 1e-13))


def test_green_function_inverts_operator():
    m = ref_model("two_layer_n2")
    for method in GreenMethod:
        ev = greens_function(m.geometry, m.medium, m.reservoir, 0.9 + 0.05j, method)
        assert ev.residual(m.geometry, m.medium, m.reservoir) < 1e-10
        assert np.allclose(ev.G, ev.G.T, rtol=1e-10, atol=1e-14)


def test_green_function_resonance():
    table = ref_modes("vacuum")[0]
    m = ref_model("vacuum")
    w = float(np.min(table.omega[table.kind == "field"]))
    with pytest.raises(ResonanceError):
        greens_function(m.geometry, m.medium, m.reservoir, w)
