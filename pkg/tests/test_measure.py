import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bdhop.measure import (
    Configuration,
    DensityField,
    SignedSiteMeasure,
    SiteSpace,
    density_of,
    entropy_vs_activity,
    kl_divergence,
    phi,
    tv_norm,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
nonneg = st.floats(0, 50, allow_nan=False)


def test_site_space_rejects_bad_input():
    with pytest.raises(ValueError):
        SiteSpace([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        SiteSpace([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        SiteSpace([], [])
    with pytest.raises(ValueError):
        SiteSpace([0.0, 1.0], [1.0])


def test_site_space_total_mass_and_json_round_trip(tmp_path):
    space = SiteSpace([0.1, 0.4, 0.9], [0.2, 0.3, 0.5])
    assert space.total_mass == pytest.approx(1.0, abs=1e-15)
    again = SiteSpace.from_json(space.to_json())
    assert np.array_equal(again.coords, space.coords)
    assert np.array_equal(again.weights, space.weights)
    path = tmp_path / "space.json"
    space.to_json(path)
    assert json.loads(path.read_text()) == {"coords": [0.1, 0.4, 0.9], "weights": [0.2, 0.3, 0.5]}
    assert np.array_equal(SiteSpace.from_json(path).weights, space.weights)


def test_site_space_is_immutable():
    space = SiteSpace.uniform_grid(3)
    with pytest.raises(ValueError):
        space.weights[0] = 5.0


def test_tv_norm_examples():
    space = SiteSpace.uniform_grid(3, 2.0)
    assert tv_norm(SignedSiteMeasure(np.zeros(3))) == 0.0
    assert tv_norm(space.weights) == pytest.approx(space.total_mass)
    assert tv_norm(SignedSiteMeasure([0.5, -0.25, 0.25])) == 1.0


@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite), finite)
def test_tv_norm_is_a_norm(a, b, lam):
    assert tv_norm(a + b) <= tv_norm(a) + tv_norm(b) + 1e-12 * (1 + tv_norm(a) + tv_norm(b))
    assert tv_norm(lam * a) == pytest.approx(abs(lam) * tv_norm(a), rel=1e-12, abs=1e-12)


def test_density_of_examples():
    space = SiteSpace([0.25, 0.75], [0.5, 0.5])
    assert np.array_equal(density_of(Configuration(4, [2, 6]), space).values, [1.0, 3.0])
    assert np.array_equal(density_of(Configuration(4, [2, 2]), space).values, [1.0, 1.0])
    assert np.array_equal(density_of(Configuration(4, [0, 0]), space).values, [0.0, 0.0])


@given(st.lists(st.integers(0, 40), min_size=3, max_size=3), st.integers(1, 64))
def test_density_round_trip(counts, n):
    space = SiteSpace([0.0, 0.3, 1.0], [0.2, 0.7, 1.3])
    c = Configuration(n, counts)
    u = density_of(c, space)
    np.testing.assert_allclose(u.measure(space), c.nu, rtol=1e-15, atol=0)
    assert c.tv_mass == pytest.approx(sum(counts) / n)


def test_configuration_validation():
    with pytest.raises(ValueError):
        Configuration(0, [1])
    with pytest.raises(ValueError):
        Configuration(2, [1, -1])
    with pytest.raises(ValueError):
        Configuration(2, [0.5])
    with pytest.raises(ValueError):
        Configuration(2, [1, 2]).check_space(SiteSpace.uniform_grid(3))


def test_density_field_rejects_negative():
    with pytest.raises(ValueError):
        DensityField([1.0, -0.1])


def test_phi_continuity_at_zero():
    assert phi(0.0) == 1.0
    assert phi(1e-300) == pytest.approx(1.0)
    assert phi(1.0) == 0.0


def test_entropy_examples():
    space = SiteSpace.uniform_grid(3, 1.5)
    assert entropy_vs_activity(np.ones(3), space) == 0.0
    assert entropy_vs_activity(np.zeros(3), space) == pytest.approx(space.total_mass)
    # independent high-precision evaluation of (2 ln 2 - 1) + (0.5 ln 0.5 + 0.5)
    space11 = SiteSpace([0.0, 1.0], [1.0, 1.0])
    assert entropy_vs_activity([2.0, 0.5], space11) == pytest.approx(0.53972077083991796413, rel=1e-14)


@given(arrays(float, 3, elements=nonneg))
def test_entropy_nonnegative_and_zero_only_at_one(u):
    space = SiteSpace([0.0, 1.0, 2.0], [0.3, 0.3, 0.4])
    e = entropy_vs_activity(u, space)
    assert e >= 0.0
    if np.max(np.abs(u - 1.0)) > 1e-6:
        assert e > 0.0


def test_kl_examples():
    assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2.0), rel=1e-15)
    assert kl_divergence([1.0, 0.0], [0.0, 1.0]) == float("inf")
    with pytest.raises(ValueError):
        kl_divergence([1.2, -0.2], [0.5, 0.5])
    with pytest.raises(ValueError):
        kl_divergence([1.0], [0.5, 0.5])


@given(arrays(float, 5, elements=st.floats(0.01, 1.0)), arrays(float, 5, elements=st.floats(0.01, 1.0)))
def test_kl_nonnegative(p, q):
    p, q = p / p.sum(), q / q.sum()
    assert kl_divergence(p, q) >= 0.0
    assert kl_divergence(p, p) == 0.0
