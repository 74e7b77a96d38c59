import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdhop.ggf import DualPairSample, dual_gap, hellinger_sq, optimal_flux, psi, psi_star, upsilon

# sup_z (s z - psi*(z)) evaluated at the stationary point sinh(z/2) = s with 30-digit arithmetic
LEGENDRE_ORACLE = {
    0.5: 0.24514384755981375109,
    1.0: 0.93432004929289595286,
    3.0: 6.5861234350556422769,
    -2.0: 3.3024059457156619772,
    1e-4: 9.9999999916666676501e-9,
}

pos = st.floats(1e-6, 1e3)
real = st.floats(-30, 30)


def test_psi_star_examples():
    assert psi_star(0.0) == 0.0
    assert psi_star(2.0) == pytest.approx(1.086161269630487557, rel=1e-15)


@pytest.mark.parametrize("s", sorted(LEGENDRE_ORACLE))
def test_psi_matches_legendre_oracle(s):
    assert psi(s) == pytest.approx(LEGENDRE_ORACLE[s], rel=1e-13)


def test_psi_closed_form_at_one():
    assert psi(1.0) == pytest.approx(2 * np.arcsinh(1.0) - 2 * np.sqrt(2.0) + 2, rel=1e-15)
    assert psi(0.0) == 0.0


@given(st.floats(-20, 20))
def test_psi_against_grid_sup(s):
    z = np.linspace(-12, 12, 200001)
    grid_sup = np.max(s * z - psi_star(z))
    # the grid is too coarse for the tails; restrict to the range it resolves
    if abs(s) < np.sinh(5.5):
        assert abs(psi(s) - grid_sup) <= 1e-6


@given(real)
def test_evenness(x):
    assert psi_star(x) == psi_star(-x)
    assert psi(x) == psi(-x)


def test_upsilon_cases():
    assert upsilon(0.0, 0.0, 0.0) == 0.0
    assert upsilon(1.0, 0.0, 1.0) == float("inf")
    assert upsilon(0.3, 2.0, 0.5) == pytest.approx(0.08934252675594342751, rel=1e-13)
    with pytest.raises(ValueError):
        upsilon(1.0, -1.0, 1.0)


def test_upsilon_tiny_geometric_mean_is_finite():
    val = upsilon(1e-3, 1e-300, 1e-300)
    assert np.isfinite(val) and val > 0
    # leading behaviour 2|w| log(2|w| / g) for |w| >> g
    g = 1e-300
    assert val == pytest.approx(2e-3 * np.log(2e-3 / g) - 2e-3, rel=1e-6)


@given(real, pos, pos, st.floats(1e-3, 1e3))
def test_upsilon_one_homogeneous(w, u, v, lam):
    assert upsilon(lam * w, lam * u, lam * v) == pytest.approx(lam * upsilon(w, u, v), rel=1e-10, abs=1e-300)


@given(real, pos, pos)
def test_upsilon_symmetric(w, u, v):
    assert upsilon(w, u, v) == upsilon(w, v, u)


@given(real, pos, pos, real, pos, pos, st.floats(0.01, 0.99))
def test_upsilon_jointly_convex(w1, u1, v1, w2, u2, v2, t):
    mix = upsilon(t * w1 + (1 - t) * w2, t * u1 + (1 - t) * u2, t * v1 + (1 - t) * v2)
    assert mix <= t * upsilon(w1, u1, v1) + (1 - t) * upsilon(w2, u2, v2) + 1e-10 * (1 + abs(mix))


def test_hellinger_examples():
    assert hellinger_sq([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert hellinger_sq([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert hellinger_sq([4.0], [1.0]) == 0.5


@given(st.lists(st.floats(0, 100), min_size=3, max_size=3), st.lists(st.floats(0, 100), min_size=3, max_size=3))
def test_hellinger_bound(mu, nu):
    assert hellinger_sq(mu, nu) <= 0.5 * (sum(mu) + sum(nu)) + 1e-12


def test_dual_gap_zero_at_origin():
    assert dual_gap(DualPairSample(0.0, 1.0, 2.0, 0.0)) == 0.0


@given(real, pos, pos, real)
def test_young_inequality(w, u, v, zeta):
    assert dual_gap(DualPairSample(w, u, v, zeta)) >= -1e-12 * (1 + abs(w * zeta))


@given(pos, pos, st.floats(-20, 20))
def test_gap_vanishes_on_optimal_manifold(u, v, zeta):
    w = optimal_flux(u, v, zeta)
    assert abs(dual_gap(DualPairSample(w, u, v, zeta))) <= 1e-8 * max(1.0, abs(w * zeta))


def test_sample_rejects_negative_intensity():
    with pytest.raises(ValueError):
        DualPairSample(1.0, -1.0, 1.0, 0.0)


def test_vectorised_gap_matches_scalar(rng):
    from bdhop.ggf import DualPairSample, dual_gap, dual_gaps

    w, z = rng.normal(size=50) * 3, rng.normal(size=50) * 3
    u, v = rng.uniform(0, 4, 50), rng.uniform(0, 4, 50)
    u[:5] = 0.0
    vec = dual_gaps(w, u, v, z)
    for i in range(50):
        assert vec[i] == dual_gap(DualPairSample(w[i], u[i], v[i], z[i]))
