import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kicklab.analytics import fit_diffusion
from kicklab.classical import NOISE_FACTOR, ClassicalEnsemble, map_step, noisy_evolve, tangent_map


def test_fixed_point():
    assert map_step(0.0, 0.0, 10.0) == (0.0, 0.0)


def test_single_step_arithmetic():
    q, p = map_step(np.pi / 2, 0.0, 10.0)
    assert p == pytest.approx(10.0)
    assert q == pytest.approx(np.pi / 2 + 10.0)


@settings(max_examples=200, deadline=None)
@given(q=st.floats(-50, 50), kappa=st.floats(0, 50))
def test_tangent_map_is_symplectic(q, kappa):
    assert abs(np.linalg.det(tangent_map(q, kappa)) - 1.0) < 1e-10


@settings(max_examples=50, deadline=None)
@given(q=st.floats(-np.pi, np.pi), p=st.floats(-20, 20))
def test_tangent_map_matches_finite_differences(q, p):
    h = 1e-6
    kappa = 10.0
    cols = []
    for dq, dp in ((h, 0.0), (0.0, h)):
        a = np.array(map_step(q + dq, p + dp, kappa))
        b = np.array(map_step(q - dq, p - dp, kappa))
        cols.append((a - b) / (2 * h))
    np.testing.assert_allclose(np.column_stack(cols), tangent_map(q, kappa), atol=1e-6)


def test_reproducible_from_seed():
    a = noisy_evolve(ClassicalEnsemble.uniform(1000, 10.0, 0.1, seed=4), 10)
    b = noisy_evolve(ClassicalEnsemble.uniform(1000, 10.0, 0.1, seed=4), 10)
    c = noisy_evolve(ClassicalEnsemble.uniform(1000, 10.0, 0.1, seed=5), 10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_partitions_are_deterministic():
    a = noisy_evolve(ClassicalEnsemble.uniform(999, 10.0, 0.1, seed=4, partitions=3), 10)
    b = noisy_evolve(ClassicalEnsemble.uniform(999, 10.0, 0.1, seed=4, partitions=3), 10)
    np.testing.assert_array_equal(a, b)


def test_particle_count_fixed():
    ens = ClassicalEnsemble.uniform(500, 10.0, 0.1, seed=1)
    noisy_evolve(ens, 5)
    assert ens.q.shape == (500,) and ens.p.shape == (500,)


def test_initial_ensemble():
    ens = ClassicalEnsemble.uniform(10000, 10.0, seed=2, p0=0.5)
    assert np.all((ens.q >= -np.pi) & (ens.q < np.pi))
    assert np.all(ens.p == 0.5)


def test_free_noise_calibration():
    # with no kicks the momentum performs a random walk of variance
    # NOISE_FACTOR * d_env per period, the free-particle heating rate
    d_env = 0.1
    p2 = noisy_evolve(ClassicalEnsemble.uniform(100000, 0.0, d_env, seed=8), 50)
    fit = fit_diffusion((np.arange(51.0), p2), (0, 50))
    assert fit.d_p == pytest.approx(NOISE_FACTOR * d_env, rel=0.03)


def test_strong_noise_limit():
    # noise-dominated diffusion adds the calibrated free heating rate to D_cl
    d_env = 1000.0
    t = np.arange(51.0)
    noisy = fit_diffusion((t, noisy_evolve(ClassicalEnsemble.uniform(20000, 10.0, d_env, seed=3), 50)),
                          (30, 50)).d_p
    d_cl = fit_diffusion((t, noisy_evolve(ClassicalEnsemble.uniform(20000, 10.0, 0.0, seed=3), 50)),
                         (30, 50)).d_p
    assert noisy == pytest.approx(d_cl + 2 * d_env, rel=0.1)
    assert abs(noisy - (d_cl + d_env)) > 0.3 * (d_cl + d_env)


def test_monte_carlo_error_scaling():
    spreads = []
    for n in (1000, 10000, 100000):
        values = [noisy_evolve(ClassicalEnsemble.uniform(n, 10.0, 0.0, seed=s), 10)[-1]
                  for s in range(20)]
        spreads.append(np.std(values, ddof=1))
    for a, b in zip(spreads, spreads[1:]):
        assert a / b == pytest.approx(np.sqrt(10), rel=0.45)
