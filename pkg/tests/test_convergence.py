import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdhop.convergence import (
    SWEEP_CSV_COLUMNS,
    SweepPlan,
    auto_cap,
    dirac_initial_law,
    lipschitz_bound,
    poc_sweep,
    rounded_counts,
    run_sweep,
    six_sigma_cap,
    w1_between_laws,
)
from bdhop.master import MasterDistribution, StateSpaceIndex, product_poisson
from bdhop.measure import SiteSpace
from bdhop.rates import ConstantRateModel

LINEAR = ConstantRateModel(SiteSpace([0.0], [1.0]), beta=2.0, delta=1.0)


@settings(max_examples=50)
@given(st.lists(st.floats(0, 4), min_size=1, max_size=4), st.integers(1, 200))
def test_rounding_error_bound(u0, n):
    space = SiteSpace.uniform_grid(len(u0))
    k, err = rounded_counts(u0, n, space)
    assert np.all(k >= 0)
    assert err <= len(u0) / (2 * n) + 1e-12


def _cdf_w1(p, q, n):
    return float(np.abs(np.cumsum(p) - np.cumsum(q)).sum()) / n


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_w1_matches_one_dimensional_oracle(seed, n):
    rng = np.random.default_rng(seed)
    index = StateSpaceIndex(1, 7)
    p, q = rng.dirichlet(np.ones(8)), rng.dirichlet(np.ones(8))
    P, Q = MasterDistribution(p, index), MasterDistribution(q, index)
    assert w1_between_laws(P, Q, n) == pytest.approx(_cdf_w1(p, q, n), abs=1e-9)


def test_w1_between_diracs_is_lattice_distance():
    index = StateSpaceIndex(2, 5)
    a = MasterDistribution.dirac([1, 4], index)
    b = MasterDistribution.dirac([3, 0], index)
    assert w1_between_laws(a, b, 4) == pytest.approx((2 + 4) / 4)
    assert w1_between_laws(a, a, 4) == pytest.approx(0.0, abs=1e-12)


def test_caps():
    space = SiteSpace.uniform_grid(2, 0.5)
    assert six_sigma_cap(8, [1.0, 1.0], space) >= 8 * 0.25
    assert auto_cap(8, [1.0, 1.0], space) >= six_sigma_cap(8, [1.0, 1.0], space)
    assert auto_cap(32, [1.0, 1.0], space) > auto_cap(8, [1.0, 1.0], space)


def test_dirac_initial_law(model2):
    law, err = dirac_initial_law([2.0, 1.0], 8, model2.space, "master", 10)
    assert law.probs.sum() == 1.0
    assert law.mean_counts().tolist() == [4.0, 2.0]
    assert err == 0.0
    with pytest.raises(ValueError):
        dirac_initial_law([2.0, 1.0], 8, model2.space, "master", 3)
    c, _ = dirac_initial_law([2.0, 1.0], 8, model2.space, "ssa")
    assert c.counts.tolist() == [4, 2]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_list": []},
        {"n_list": [4, 2]},
        {"u0": [1.0]},
        {"mode": "nope"},
        {"initial": "poisson", "mode": "ssa"},
        {"obs_times": [3.0]},
        {"K_max": 1},
    ],
)
def test_plan_validation(model2, kwargs):
    base = dict(model=model2, u0=[1.0, 1.0], n_list=[2, 4], T=1.0, obs_times=[1.0])
    base.update(kwargs)
    with pytest.raises(ValueError):
        SweepPlan(**base).validate()


def test_single_n_has_no_trend(model2):
    rep = run_sweep(SweepPlan(model2, [1.0, 1.0], [4], 0.5, [0.5]))
    assert len(rep.rows) == 1 and rep.trend("w1_to_dirac") == {}


def test_linear_sweep_decreases():
    plan = SweepPlan(LINEAR, [0.5], [2, 4, 8, 16], 1.0, [0.5, 1.0], lipschitz=True)
    rep = run_sweep(plan)
    assert not rep.failures
    for t, v in rep.trend("w1_to_dirac").items():
        assert v["monotone"], (t, v)
    for n, lip in rep.lipschitz.items():
        assert lip <= rep.lipschitz_bound
    assert set(rep.lipschitz) == {2, 4, 8, 16}
    # bound uses the largest expected mass along the master paths, which stays below u_peak + fluctuations
    assert rep.lipschitz_bound <= lipschitz_bound(LINEAR, 1.1 * plan.u_peak)


def test_poc_vanishes_at_time_zero_for_product_data(model2):
    plan = SweepPlan(model2, [1.6, 0.6], [2, 4], 0.5, [0.0, 0.5], initial="poisson")
    table = poc_sweep(plan)["table"]
    for n in (2, 4):
        assert table[0.0][n] == pytest.approx(0.0, abs=1e-9)
        assert table[0.5][n] >= -1e-12


def test_ssa_and_master_agree(model2):
    plan = SweepPlan(model2, [2.0, 1.0], [4], 1.0, [0.5, 1.0], mode="both", M=3000, seed=9)
    rep = run_sweep(plan)
    assert not rep.failures
    for r in rep.rows:
        assert abs(r.w1_ssa - r.w1_to_dirac) <= 3 * r.w1_ssa_se + 1e-3


def test_failed_cell_is_recorded_and_sweep_continues():
    # the linear model grows towards u = 2, so the six-sigma cap at u0 is too small
    plan = SweepPlan(LINEAR, [0.5], [4, 8], 3.0, [3.0], K_max={4: six_sigma_cap(4, [0.5], LINEAR.space), 8: 40})
    rep = run_sweep(plan)
    assert [f["n"] for f in rep.failures] == [4]
    assert [r.n for r in rep.rows] == [8]


def test_csv_is_deterministic(tmp_path, model2):
    plan = SweepPlan(model2, [1.0, 1.0], [2, 4], 0.5, [0.25, 0.5])
    run_sweep(plan).to_csv(tmp_path / "a.csv")
    run_sweep(plan).to_csv(tmp_path / "b.csv")
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert a.decode().splitlines()[0] == ",".join(SWEEP_CSV_COLUMNS)
