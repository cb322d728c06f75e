import math

import numpy as np
import pytest
from scipy import stats

from crtwin.errors import Unbracketable
from crtwin.estimators import estimate_all
from crtwin.pairwise import tally_cross_arm
from crtwin.simulation import (
    Scenario,
    calibrate_censoring,
    cluster_size_branch,
    draw_cluster_sizes,
    draw_latent,
    factorial_grid,
    generate_dataset,
    invert_weibull_ph,
    replicate_rng,
    run_scenario,
    sample_gumbel_pair,
)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(M=5, q=0.5)
    with pytest.raises(ValueError):
        Scenario(Nbar=4)
    with pytest.raises(ValueError):
        Scenario(eta=0.5)


def test_cluster_sizes():
    rng = np.random.default_rng(0)
    assert (draw_cluster_sizes(20, 0, 7, rng) == 20).all()
    s = draw_cluster_sizes(20, 0.3, 10_000, rng)
    assert 19 <= s.mean() <= 21
    assert 0.27 <= s.std() / s.mean() <= 0.33
    s = draw_cluster_sizes(20, 0.5, 10_000, rng)
    assert s.min() >= 5
    assert cluster_size_branch(20, 0.1) == "poisson"
    assert draw_cluster_sizes(20, 0.1, 1000, rng).min() >= 5


def test_weibull_inverse_examples():
    assert invert_weibull_ph(math.exp(-1), 1, 1, 1, 0, 0) == pytest.approx(1)
    assert invert_weibull_ph(math.exp(-1), 2, 1, 1, 0, 0) == pytest.approx(1)
    assert invert_weibull_ph(0.5, 1, 0.1, 2, math.log(0.65), 1) == pytest.approx(5.332, abs=5e-4)
    t = invert_weibull_ph(0.3, 1.7, 0.4, 1.3, 0.2, 1)
    assert math.exp(-1.3 * 0.4 * t ** 1.7 * math.exp(0.2)) == pytest.approx(0.3)


@pytest.mark.parametrize("eta", [1.0, 2.0, 4.0])
def test_gumbel_kendall_tau_and_margins(eta):
    rng = np.random.default_rng(int(eta))
    u1, u2 = sample_gumbel_pair(eta, rng, 20_000)
    tau = stats.kendalltau(u1, u2).statistic
    assert abs(tau - (1 - 1 / eta)) < 0.02
    assert stats.kstest(u1, "uniform").pvalue > 0.001
    assert stats.kstest(u2, "uniform").pvalue > 0.001


def test_generated_dataset_invariants():
    s = Scenario(M=20, xi=0.05, cv=0.5, eta=2.0)
    rng = replicate_rng(3, 0)
    for _ in range(20):
        d = generate_dataset(s, rng)
        assert d.M1 == 10 and d.V == 2 and d.sizes.min() >= 5
        t1, t2 = d.times[:, 0], d.times[:, 1]
        d2 = d.events[:, 1]
        assert (t2 <= t1).all()
        assert (t2[d2] < t1[d2]).all()


def test_semi_competing_against_latent():
    s = Scenario(M=10, xi=0.05)
    lat = draw_latent(s, replicate_rng(1, 0))
    d = generate_dataset(s, replicate_rng(1, 0))
    C = np.minimum(lat.E / s.xi, s.tau_c)
    d2 = d.events[:, 1]
    assert (d.times[d2, 1] < np.minimum(d.times[d2, 0], C[d2])).all()
    assert np.array_equal(d.events[:, 0], lat.T1 <= C)


def test_heavy_censoring_gives_all_ties():
    d = generate_dataset(Scenario(M=10, xi=1e9), replicate_rng(0, 0))
    e = estimate_all(tally_cross_arm(d))
    assert e.WD == 0 and e.pi_tie == 1


def test_frailty_moments():
    rng = np.random.default_rng(5)
    g = rng.gamma(2.0, 0.5, size=100_000)
    assert abs(g.mean() - 1) < 0.02 and abs(g.var() / 0.5 - 1) < 0.05


def test_calibration_hits_target():
    r = calibrate_censoring(Scenario(), 0.35, reps=40, tol=0.01, seed=2)
    assert abs(r.achieved - 0.35) < 0.01
    assert not r.flags


def test_calibration_unreachable():
    with pytest.raises(Unbracketable):
        calibrate_censoring(Scenario(alpha1=1, alpha2=1, tau_c=20), 0.01, reps=10)


def test_run_scenario_determinism_and_worker_independence():
    s = Scenario(M=8, xi=0.03)
    a = run_scenario(s, reps=6, procedures=("wald_score", "perm", "jel"), B_perm=50, seed=4, keep_p=True)
    b = run_scenario(s, reps=6, procedures=("wald_score", "perm", "jel"), B_perm=50, seed=4, keep_p=True,
                     workers=2)
    assert a.rows() == b.rows()
    for k in a.p_values:
        np.testing.assert_array_equal(a.p_values[k], b.p_values[k])


def test_null_embedded_in_alternative_path():
    s = Scenario(M=20, xi=0.03, theta1=0.0, theta2=0.0, name="alt_label")
    r = run_scenario(s, reps=100, procedures=("perm",), estimands=("WD",), B_perm=200, seed=8)
    assert r.rate("perm", "WD") < 0.12


def test_factorial_grid():
    g = factorial_grid("null")
    assert len(g) == 24
    assert {(s.M, s.cv, s.alpha1) for s in g} == {(m, c, a) for m in (20, 100) for c in (0.3, 0.5) for a in (2, 1)}
    alt = factorial_grid("alt")
    assert all(s.theta1 == math.log(0.65) and s.theta2 == math.log(0.5) for s in alt)
