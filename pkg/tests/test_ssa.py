import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bdhop.measure import Configuration, SiteSpace
from bdhop.rates import ConstantRateModel, RateBounds
from bdhop.ssa import (
    BIRTH,
    DEATH,
    HOP,
    RateBoundError,
    TrajectoryEnsemble,
    empirical_law,
    mean_counts,
    propensities,
    run_ensemble,
    step,
    w1_to_dirac,
    write_snapshots_csv,
)


def test_empty_configuration_has_only_births(model2):
    t = propensities(Configuration(5, [0, 0]), model2)
    assert np.all(t.death == 0) and np.all(t.hop == 0)
    np.testing.assert_allclose(t.birth, 5 * model2.birth(np.zeros(2), 5))
    assert t.total == pytest.approx(t.birth.sum())


def test_constant_single_site():
    model = ConstantRateModel(SiteSpace([0.0], [0.5]), beta=3.0, delta=2.0)
    t = propensities(Configuration(4, [7]), model)
    assert t.birth[0] == pytest.approx(4 * 3.0 * 0.5)
    assert t.death[0] == pytest.approx(2.0 * 7)
    assert t.total == pytest.approx(6.0 + 14.0)


@settings(max_examples=30)
@given(st.lists(st.integers(0, 9), min_size=3, max_size=3), st.integers(1, 6))
def test_total_matches_brute_force(model3, counts, n):
    c = Configuration(n, counts)
    t = propensities(c, model3)
    nu = np.asarray(counts) / n
    brute = 0.0
    for s in range(3):
        brute += n * model3.birth(nu, n)[s] + model3.death(nu, n)[s] * counts[s]
        for r in range(3):
            brute += model3.hop(nu, n)[s, r] * counts[s]
    assert t.total == pytest.approx(brute, rel=1e-12)


def test_bound_violation_is_reported():
    model = ConstantRateModel(SiteSpace([0.0], [1.0]), beta=1.0, delta=1.0)
    model.bounds = RateBounds(birth=0.5, death=1.0, hop=0.0)
    with pytest.raises(RateBoundError):
        propensities(Configuration(1, [1]), model)


def test_step_event_effects(model3, rng):
    c = Configuration(3, [2, 1, 4])
    for _ in range(200):
        dt, ev, c2 = step(c, model3, rng, t=1.5)
        assert dt > 0 and ev.time == pytest.approx(1.5 + dt)
        diff = c2.counts - c.counts
        if ev.kind == HOP:
            assert diff.sum() == 0 and diff[ev.site] == -1 and diff[ev.target] == 1
        elif ev.kind == BIRTH:
            assert diff.sum() == 1 and diff[ev.site] == 1
        else:
            assert diff.sum() == -1 and diff[ev.site] == -1


def test_death_of_last_particle():
    model = ConstantRateModel(SiteSpace([0.0], [1.0]), beta=0.0, delta=1.0)
    rng = np.random.default_rng(0)
    dt, ev, c = step(Configuration(1, [1]), model, rng)
    assert ev.kind == DEATH and c.counts.tolist() == [0]
    dt, ev, c2 = step(c, model, rng)
    assert dt == np.inf and ev is None and c2 is c


def test_event_frequencies_and_waiting_time(model2):
    rng = np.random.default_rng(7)
    c = Configuration(4, [3, 1])
    table = propensities(c, model2)
    N = 20000
    kinds = np.zeros(3)
    waits = np.empty(N)
    for i in range(N):
        dt, ev, _ = step(c, model2, rng, table=table)
        kinds[ev.kind] += 1
        waits[i] = dt
    p = np.array([table.birth.sum(), table.death.sum(), table.hop.sum()]) / table.total
    sigma = np.sqrt(N * p * (1 - p))
    assert np.all(np.abs(kinds - N * p) <= 3 * sigma + 1e-9)
    assert abs(waits.mean() - 1 / table.total) <= 3 * waits.std() / np.sqrt(N)


def test_ensemble_deterministic_and_thread_independent(model2):
    c0 = Configuration(3, [2, 1])
    a = run_ensemble(c0, model2, 1.0, [0.0, 0.5, 1.0], 40, base_seed=11)
    b = run_ensemble(c0, model2, 1.0, [0.0, 0.5, 1.0], 40, base_seed=11, threads=3)
    c = run_ensemble(c0, model2, 1.0, [0.0, 0.5, 1.0], 40, base_seed=12)
    np.testing.assert_array_equal(a.snapshots, b.snapshots)
    assert not np.array_equal(a.snapshots, c.snapshots)


def test_trajectory_independent_of_ensemble_size(model2):
    c0 = Configuration(3, [2, 1])
    small = run_ensemble(c0, model2, 1.0, [1.0], 5, base_seed=3)
    big = run_ensemble(c0, model2, 1.0, [1.0], 20, base_seed=3)
    np.testing.assert_array_equal(small.snapshots, big.snapshots[:5])


def test_single_trajectory_zero_horizon(model2):
    ens = run_ensemble(Configuration(2, [1, 3]), model2, 0.0, [0.0], 1)
    assert ens.M == 1
    assert ens.snapshots[0, 0].tolist() == [1, 3]
    assert ens.events == [[]]


def test_replay_reproduces_snapshots(model3):
    ens = run_ensemble(Configuration(2, [1, 0, 2]), model3, 2.0, np.linspace(0, 2, 9), 10, base_seed=5)
    for m in range(ens.M):
        np.testing.assert_array_equal(ens.replay(m), ens.snapshots[m])


def test_pure_death_is_binomial():
    model = ConstantRateModel(SiteSpace([0.0], [1.0]), beta=0.0, delta=1.0)
    k0, t, M = 12, 0.7, 4000
    ens = run_ensemble(Configuration(k0, [k0]), model, t, [t], M, base_seed=2, record_events=False)
    counts = ens.snapshots[:, 0, 0]
    p = np.exp(-t)
    observed = np.bincount(counts, minlength=k0 + 1)
    expected = M * stats.binom.pmf(np.arange(k0 + 1), k0, p)
    # pool sparse tails before the chi-square test
    keep = expected >= 5
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_linear_mean_matches_ode():
    space = SiteSpace([0.0], [1.0])
    model = ConstantRateModel(space, beta=2.0, delta=1.0)
    n, u0, T = 10, 0.5, 1.0
    ens = run_ensemble(Configuration(n, [5]), model, T, [T], 3000, base_seed=4, record_events=False)
    mean, se = mean_counts(ens)
    exact = n * (2.0 + (u0 - 2.0) * np.exp(-T))
    assert abs(mean[0, 0] - exact) <= 3 * se[0, 0]


def test_w1_two_point():
    space = SiteSpace([0.0, 1.0], [0.5, 0.5])
    snaps = np.array([[[2, 0]], [[0, 2]]])
    ens = TrajectoryEnsemble(2, np.array([0.0]), snaps, np.array([2, 0]), 0)
    mean, se = w1_to_dirac(ens, 0.0, [2.0, 0.0], space)
    # |(1,0) - (1,0)| = 0 and |(0,1) - (1,0)| = 2
    assert mean == pytest.approx(1.0)
    assert se == pytest.approx(1.0)


def test_empirical_law_and_overflow():
    snaps = np.array([[[0, 1]], [[1, 1]], [[3, 0]], [[0, 1]]])
    ens = TrajectoryEnsemble(1, np.array([0.5]), snaps, np.array([0, 1]), 0)
    law = empirical_law(ens, 0.5, 2)
    assert law.deficit == pytest.approx(0.25)
    assert law.probs[law.index.index_of([0, 1])] == pytest.approx(0.5)
    assert law.probs[law.index.index_of([1, 1])] == pytest.approx(0.25)
    with pytest.raises(KeyError):
        empirical_law(ens, 0.7, 2)


def test_rejects_bad_arguments(model2):
    c0 = Configuration(1, [0, 0])
    with pytest.raises(ValueError):
        run_ensemble(c0, model2, 1.0, [0.5], 0)
    with pytest.raises(ValueError):
        run_ensemble(c0, model2, 1.0, [2.0], 1)
    with pytest.raises(ValueError):
        run_ensemble(Configuration(1, [0, 0, 0]), model2, 1.0, [0.5], 1)


def test_snapshot_csv(tmp_path, model2):
    ens = run_ensemble(Configuration(2, [1, 1]), model2, 0.5, [0.0, 0.5], 2)
    write_snapshots_csv(ens, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "trajectory,time,site,count"
    assert len(lines) == 1 + 2 * 2 * 2
