import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kicklab.analytics import (
    ForceScales,
    bessel_j,
    classicality_check,
    fit_diffusion,
    kappa_eff,
    ols_slope,
    shepelyansky_dinit,
)


# -- Bessel functions ----------------------------------------------------------------

@pytest.mark.parametrize("n", [0, 1, 2, 3, 5, 10])
def test_bessel_against_high_precision(n):
    xs = np.concatenate([np.linspace(-20, 20, 401), [1e-8, 0.5, 0.999, 1.0, 1.001, 6.907]])
    for x in xs:
        ref = float(mpmath.besselj(n, mpmath.mpf(float(x))))
        assert abs(bessel_j(n, x) - ref) <= 1e-10 * abs(ref) + 1e-15


def test_bessel_vectorized_and_special_values():
    x = np.array([[0.0, 1.0], [2.0, 3.0]])
    out = bessel_j(2, x)
    assert out.shape == (2, 2)
    assert out[0, 0] == 0.0
    assert bessel_j(0, 0.0) == 1.0
    with pytest.raises(ValueError):
        bessel_j(-1, 1.0)


# -- kappa_eff and early-time rate -----------------------------------------------------

def test_kappa_eff_values():
    assert kappa_eff(10.0, 2 * np.pi) == pytest.approx(0.0, abs=1e-14)
    assert kappa_eff(10.0, 1e-9) == pytest.approx(10.0, rel=1e-12)
    assert kappa_eff(10.0, np.pi) == pytest.approx(20 / np.pi, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7])
def test_kappa_eff_resonance_zeros(n):
    assert abs(kappa_eff(10.0, 2 * np.pi * n)) < 1e-13


@settings(max_examples=100, deadline=None)
@given(kbar=st.floats(1e-6, 60.0), kappa=st.floats(0.0, 100.0))
def test_kappa_eff_is_even(kbar, kappa):
    assert kappa_eff(kappa, -kbar) == kappa_eff(kappa, kbar)
    assert kappa_eff(kappa, kbar) == pytest.approx(2 * kappa * math.sin(kbar / 2) / kbar,
                                                   rel=1e-12, abs=1e-12)


def test_dinit_at_resonance():
    assert shepelyansky_dinit(10.0, 2 * np.pi) == pytest.approx(50.0, abs=1e-12)


@pytest.mark.parametrize("kappa,kbar", [(10.0, 1.0), (3.0, 2.5), (25.0, 0.3)])
def test_dinit_leading_term(kappa, kbar):
    assert shepelyansky_dinit(kappa, kbar, n_terms=1) == pytest.approx(kappa**2 / 2)


def test_dinit_at_first_accelerator_mode():
    # kbar with kappa_eff = 6.907 on the low-kbar branch
    kbar = float(mpmath.findroot(lambda x: 20 * mpmath.sin(x / 2) / x - 6.907, 3.0))
    assert kappa_eff(10.0, kbar) == pytest.approx(6.907, rel=1e-10)
    assert shepelyansky_dinit(10.0, kbar) > 2 * 31.2


def test_dinit_sign_variant():
    ke = kappa_eff(10.0, 3.0)
    j2 = float(mpmath.besselj(2, ke))
    assert shepelyansky_dinit(10.0, 3.0, sign=1) == pytest.approx(50 * (1 + 2 * j2 + 2 * j2**2))
    assert shepelyansky_dinit(10.0, 3.0) == pytest.approx(50 * (1 - 2 * j2 + 2 * j2**2))
    with pytest.raises(ValueError):
        shepelyansky_dinit(10.0, 3.0, sign=0)
    with pytest.raises(ValueError):
        shepelyansky_dinit(10.0, 3.0, n_terms=4)


@settings(max_examples=50, deadline=None)
@given(kappa=st.floats(0.5, 30.0), kbar=st.floats(0.05, 6.0))
def test_dinit_depends_on_kappa_eff_only(kappa, kbar):
    ke = kappa_eff(kappa, kbar)
    # a second (kappa, kbar) pair with the same kappa_eff
    kappa2 = 2 * kappa
    kbar2 = float(mpmath.findroot(lambda x: 2 * kappa2 * mpmath.sin(x / 2) / x - ke, (1e-9, 2 * math.pi),
                                  solver="bisect"))
    assert kappa_eff(kappa2, kbar2) == pytest.approx(ke, rel=1e-9)
    assert shepelyansky_dinit(kappa2, kbar2) / kappa2**2 == pytest.approx(
        shepelyansky_dinit(kappa, kbar) / kappa**2, rel=1e-8)


# -- diffusion fits --------------------------------------------------------------------

def test_exact_linear_input():
    t = np.arange(51.0)
    fit = fit_diffusion((t, 5 + 31.2 * t), (30, 50))
    assert fit.d_p == pytest.approx(31.2, rel=1e-13)
    assert fit.stderr < 1e-12
    assert fit.intercept == pytest.approx(5.0, rel=1e-10)
    assert fit.n_points == 21


def test_constant_series():
    t = np.arange(51.0)
    assert fit_diffusion((t, np.full(51, 7.0)), (30, 50)).d_p == pytest.approx(0.0, abs=1e-13)


def test_ols_sampling_distribution():
    t = np.arange(21.0)
    hits = 0
    for seed in range(1000):
        y = 10 * t + np.random.default_rng(seed).normal(size=21)
        fit = fit_diffusion((t, y), (0, 20))
        hits += abs(fit.d_p - 10) <= 3 * fit.stderr
    assert hits >= 990


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-1e3, 1e3), b=st.floats(-1e2, 1e2), seed=st.integers(0, 2**32 - 1))
def test_affine_equivariance(a, b, seed):
    t = np.arange(51.0)
    y = np.cumsum(np.random.default_rng(seed).normal(size=51))
    base = fit_diffusion((t, y), (30, 50)).d_p
    shifted = fit_diffusion((t, y + a + b * t), (30, 50)).d_p
    assert shifted - base == pytest.approx(b, abs=1e-9 * (1 + abs(a) + abs(b)))


def test_weighted_fit_matches_unweighted_for_equal_weights():
    t = np.linspace(0, 10, 11)
    y = 3 * t + np.sin(t)
    assert ols_slope(t, y, np.full(11, 4.0))[0] == pytest.approx(ols_slope(t, y)[0], rel=1e-13)


@pytest.mark.parametrize("window", [(40, 60), (-1, 10), (10, 10), (30, 33)])
def test_fit_window_errors(window):
    t = np.arange(51.0)
    with pytest.raises(ValueError, match="window"):
        fit_diffusion((t, t), window)


# -- classicality ----------------------------------------------------------------------

def test_band_values():
    r = classicality_check(kbar=1.0, k=1.0, s=1000.0, forces=ForceScales(grad=10.0), eta=1.0)
    assert r.band_lower == pytest.approx(0.02)
    assert r.band_upper == pytest.approx(2500.0)
    assert r.band_nonempty


def test_band_widens_with_s():
    widths = [classicality_check(1.0, 1.0, s, ForceScales(grad=10.0)) for s in (10.0, 1e3, 1e6)]
    lows = [r.band_lower for r in widths]
    highs = [r.band_upper for r in widths]
    assert lows == sorted(lows, reverse=True) and highs == sorted(highs)
    assert lows[-1] < 1e-4 and highs[-1] > 1e5


def test_operating_point_is_not_classical():
    kbar, d_env = 3.0, 0.1
    r = classicality_check(kbar, d_env / kbar**2, 10.0, ForceScales.kicked_rotor(10.0))
    assert not r.classical
    assert not r.localization_ok
    d = r.as_dict()
    assert d["classical"] is False and d["k"] == pytest.approx(0.1 / 9)


def test_classicality_validation():
    with pytest.raises(ValueError, match="s must"):
        classicality_check(1.0, 1.0, 0.0, ForceScales(grad=1.0))
    with pytest.raises(ValueError, match="eta"):
        classicality_check(1.0, 1.0, 1.0, ForceScales(grad=1.0), eta=2.0)
