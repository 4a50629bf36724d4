import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kicklab.core import (
    Grid,
    SimParams,
    Wavefunction,
    edge_probabilities,
    gaussian_packet,
    initial_state,
    make_grid,
    moments,
    to_momentum,
    to_position,
)


def test_grid_spacing_small():
    g = Grid.build(8, 2 * np.pi, 1.0)
    assert g.dq == pytest.approx(np.pi / 4)
    np.testing.assert_allclose(np.diff(g.q_values), np.pi / 4)
    assert g.q_values[0] == pytest.approx(-np.pi)
    assert g.dp == pytest.approx(1.0)
    np.testing.assert_allclose(np.sort(g.p_values), np.arange(-4, 4))


def test_grid_momentum_spacing_large():
    g = Grid.build(1024, 32 * 2 * np.pi, 3.0)
    assert g.dp == pytest.approx(3 / 32, rel=1e-14)
    assert g.points_per_period == 32


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError, match="power of two"):
        Grid.build(100, 1.0, 1.0)


@pytest.mark.parametrize("field,value", [("kbar", 0.0), ("kappa", -1.0), ("d_env", -0.1),
                                         ("n_grid", 1000), ("n_sub", 0)])
def test_params_validation(field, value):
    with pytest.raises(ValueError, match=field):
        SimParams(**{field: value})


def test_params_fit_window_must_fit_run():
    with pytest.raises(ValueError, match="fit_window"):
        SimParams(n_kicks=20)


def test_derived_strength():
    p = SimParams(kbar=3.0, d_env=0.1)
    assert p.k == pytest.approx(0.1 / 9)
    assert p.dt == 0.01
    assert p.packet_sigma == 1.5


def test_minimum_uncertainty_packet():
    g = Grid.build(1024, 16 * np.pi, 3.0)
    m = moments(gaussian_packet(g, 0.0, 0.0, 1.2, 3.0))
    assert abs(m.mean_q) < 1e-10 and abs(m.mean_p) < 1e-10
    assert m.var_q * m.var_p == pytest.approx(9 / 4, rel=1e-8)


def test_translated_packet():
    g = Grid.build(1024, 16 * np.pi, 3.0)
    m = moments(gaussian_packet(g, 1.0, 2.0, 0.8, 3.0))
    assert m.mean_q == pytest.approx(1.0, abs=1e-6)
    assert m.mean_p == pytest.approx(2.0, abs=1e-6)


def test_packet_momentum_variance():
    g = Grid.build(1024, 16 * np.pi, 3.0)
    m = moments(gaussian_packet(g, 0.0, 0.0, 0.5, 3.0))
    assert m.var_p == pytest.approx(9.0, rel=1e-8)


def test_boosted_packet_mean_momentum():
    g = Grid.build(1024, 16 * np.pi, 3.0)
    psi = gaussian_packet(g, 0.0, 5.0, 1.0, 3.0)
    assert moments(psi).mean_p == pytest.approx(5.0, abs=1e-6)
    # a boost by a whole momentum bin, applied as a phase, shifts <p> exactly
    dp = 7 * g.dp
    boosted = Wavefunction(psi.amps * np.exp(1j * dp * g.q_values / 3.0), g)
    assert moments(boosted).mean_p - moments(psi).mean_p == pytest.approx(dp, abs=1e-10)


def test_momentum_variance_against_quadrature():
    # direct Fourier integral of the packet on a fine p grid
    g = Grid.build(512, 8 * np.pi, 2.0)
    psi = gaussian_packet(g, 0.3, 1.0, 0.7, 2.0)
    p = np.linspace(-12, 14, 2001)
    kernel = np.exp(-1j * np.outer(p, g.q_values) / 2.0)
    phi = kernel @ psi.amps * g.dq / np.sqrt(2 * np.pi * 2.0)
    w = np.abs(phi) ** 2
    dp = p[1] - p[0]
    norm = w.sum() * dp
    mean = (w * p).sum() * dp / norm
    var = (w * p * p).sum() * dp / norm - mean**2
    assert norm == pytest.approx(1.0, abs=1e-8)
    assert moments(psi).var_p == pytest.approx(var, rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([8, 64, 256]))
def test_transform_round_trip(seed, n):
    r = np.random.default_rng(seed)
    g = Grid.build(n, 2 * np.pi * 2, 1.7)
    amps = r.normal(size=n) + 1j * r.normal(size=n)
    psi = Wavefunction(amps, g)
    back = to_position(to_momentum(psi), g)
    assert np.max(np.abs(back - amps)) < 1e-12 * max(1.0, np.max(np.abs(amps)))
    # Parseval: both representations carry the same norm
    phi = to_momentum(psi)
    assert np.sum(np.abs(phi) ** 2) * g.dp == pytest.approx(psi.norm2(), rel=1e-12)


def test_spike_has_flat_momentum_magnitude():
    g = Grid.build(64, 2 * np.pi, 1.0)
    amps = np.zeros(64, complex)
    amps[32] = 1.0  # q = 0
    phi = np.abs(to_momentum(Wavefunction(amps, g)))
    np.testing.assert_allclose(phi, phi[0], rtol=1e-12)


def test_gaussian_fourier_pair_width():
    g = Grid.build(2048, 16 * np.pi, 3.0)
    sigma_q = 0.9
    phi = to_momentum(gaussian_packet(g, 0.0, 0.0, sigma_q, 3.0))
    p = g.p_values
    sigma_p = 3.0 / (2 * sigma_q)
    expected = np.exp(-p * p / (4 * sigma_p**2))
    expected /= np.sqrt(np.sum(expected**2) * g.dp)
    np.testing.assert_allclose(np.abs(phi), expected, atol=1e-12)


def test_packet_guards():
    g = Grid.build(64, 2 * np.pi, 1.0)
    with pytest.raises(ValueError, match="unresolvable"):
        gaussian_packet(g, 0.0, 0.0, 0.05, 1.0)
    with pytest.raises(ValueError, match="truncated"):
        gaussian_packet(g, 2.0, 0.0, 0.5, 1.0)


def test_moments_rejects_unnormalized():
    g = Grid.build(64, 2 * np.pi, 1.0)
    psi = gaussian_packet(g, 0.0, 0.0, 0.4, 1.0)
    psi.amps *= 1.01
    with pytest.raises(ValueError, match="normalized"):
        moments(psi)


def test_offsets_enter_moments():
    params = SimParams(n_grid=1024, q_extent=8)
    psi = initial_state(params)
    base = moments(psi)
    moved = Wavefunction(psi.amps, psi.grid, q_offset=4 * np.pi, p_offset=1.5)
    m = moments(moved)
    assert m.mean_q == pytest.approx(base.mean_q + 4 * np.pi)
    assert m.mean_p == pytest.approx(base.mean_p + 1.5)
    assert m.var_p == pytest.approx(base.var_p)


def test_edge_probabilities_of_centered_packet():
    params = SimParams(n_grid=1024, q_extent=8)
    eq, ep = edge_probabilities(initial_state(params, make_grid(params)).amps)
    assert eq[0] < 1e-30 and ep[0] < 1e-30
