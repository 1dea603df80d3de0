import math

import numpy as np
import pytest

from riskcap import bayes
from riskcap.bayes import NIXParams, PosteriorState
from riskcap.distributions import (
    GammaParams,
    LognormalParams,
    ParetoParams,
    PoissonParams,
    RngStream,
)
from riskcap.mc_engine import (
    LossSample,
    ci_indices,
    empirical_quantile,
    quantile_ci,
    run_until_accuracy,
    simulate_annual_loss,
    simulate_conditional_sample,
    simulate_predictive_sample,
)

LN12 = LognormalParams(mu=1.0, sigma_sq=4.0)
PAR21 = ParetoParams(xi=2.0, threshold_L=1.0)


def test_annual_loss_zero_when_no_events():
    # lam small enough that N=0 happens quickly
    freq = PoissonParams(1e-9)
    z = simulate_annual_loss(freq, LN12, RngStream(1))
    assert z == 0.0


def test_compound_mean_lognormal():
    sample = simulate_conditional_sample(PoissonParams(10.0), LN12, 10**5, RngStream(2))
    # Wald: E[Z] = lam * exp(mu + sigma_sq/2)
    expected = 10.0 * math.exp(1.0 + 2.0)
    se = sample.values.std() / math.sqrt(sample.K)
    assert sample.values.mean() == pytest.approx(expected, abs=5 * se)


def test_compound_mean_pareto():
    sample = simulate_conditional_sample(PoissonParams(10.0), PAR21, 10**5, RngStream(3))
    assert sample.values.mean() == pytest.approx(20.0, rel=0.10)


def test_conditional_sample_basic_contracts():
    s1 = simulate_conditional_sample(PoissonParams(10.0), LN12, 1, RngStream(4))
    assert s1.K == 1
    a = simulate_conditional_sample(PoissonParams(10.0), LN12, 5000, RngStream(5))
    b = simulate_conditional_sample(PoissonParams(10.0), LN12, 5000, RngStream(5))
    assert np.array_equal(a.values, b.values)
    assert np.all(np.diff(a.values) >= 0)
    assert np.all(a.values >= 0)


def test_parallelism_invariance():
    args = (PoissonParams(10.0), LN12, 250_000)
    samples = [
        simulate_conditional_sample(*args, RngStream(6), batch_size=50_000, workers=w)
        for w in (1, 2, 8)
    ]
    assert np.array_equal(samples[0].values, samples[1].values)
    assert np.array_equal(samples[0].values, samples[2].values)


def test_predictive_parallelism_invariance():
    pf = PosteriorState("poisson-rate", GammaParams(51.0, 0.2))
    ps = PosteriorState(
        "lognormal", NIXParams(dof_nu=47.0, scale_beta=180.0, loc_theta=1.0, prec_phi=50.0)
    )
    samples = [
        simulate_predictive_sample(pf, ps, 120_000, RngStream(7), batch_size=50_000, workers=w)
        for w in (1, 2, 8)
    ]
    assert np.array_equal(samples[0].values, samples[1].values)
    assert np.array_equal(samples[0].values, samples[2].values)


def test_predictive_point_mass_limit_matches_conditional():
    # posterior pinched to a near-point mass behaves like fixed parameters
    pf = PosteriorState(
        "poisson-rate",
        GammaParams(1e12, 10.0 / 1e12),  # mean 10, sd ~1e-5
    )
    ps = PosteriorState(
        "lognormal",
        NIXParams(dof_nu=1e10, scale_beta=4e10, loc_theta=1.0, prec_phi=1e10),
    )
    pred = simulate_predictive_sample(pf, ps, 10**5, RngStream(8))
    cond = simulate_conditional_sample(PoissonParams(10.0), LN12, 10**5, RngStream(9))
    q_pred = empirical_quantile(pred, 0.99)
    q_cond = empirical_quantile(cond, 0.99)
    assert q_pred == pytest.approx(q_cond, rel=0.1)


def test_predictive_pareto_runs():
    pf = PosteriorState("poisson-rate", GammaParams(51.0, 0.2))
    ps = PosteriorState("pareto-tail", GammaParams(51.0, 1.0 / 25.0), threshold_L=1.0)
    sample = simulate_predictive_sample(pf, ps, 50_000, RngStream(10))
    assert sample.K == 50_000
    assert np.all(sample.values >= 0)


def test_predictive_pareto_requires_threshold():
    pf = PosteriorState("poisson-rate", GammaParams(51.0, 0.2))
    ps = PosteriorState("pareto-tail", GammaParams(51.0, 1.0 / 25.0))
    with pytest.raises(ValueError, match="threshold_L"):
        simulate_predictive_sample(pf, ps, 100, RngStream(11))


# ---------------------------------------------------------------------------
# Quantiles


def test_empirical_quantile_index_rule():
    values = np.arange(10.0, 10010.0, 10.0)  # 10, 20, ..., 10000 (K=1000)
    sample = LossSample(values=values, master_seed=0)
    assert empirical_quantile(sample, 0.999) == 10000.0

    s10 = LossSample(values=np.arange(1.0, 11.0), master_seed=0)
    assert empirical_quantile(s10, 0.5) == 6.0

    s1 = LossSample(values=np.array([7.0]), master_seed=0)
    assert empirical_quantile(s1, 0.9) == 7.0

    with pytest.raises(ValueError):
        empirical_quantile(s10, 1.5)


def test_quantile_monotone_in_q():
    rng = RngStream(12)
    sample = simulate_conditional_sample(PoissonParams(10.0), LN12, 10_000, rng)
    qs = [0.5, 0.9, 0.99, 0.999]
    vals = [empirical_quantile(sample, q) for q in qs]
    assert vals == sorted(vals)


def test_ci_indices_exact():
    assert ci_indices(10**5, 0.999, 0.95) == (99880, 99920, True)


def test_ci_collapses_as_gamma_to_zero():
    r, s, _ = ci_indices(10**5, 0.999, 1e-12)
    # z -> 0: both endpoints land next to floor(K*q)
    assert abs(r - 99900) <= 1
    assert abs(s - 99900) <= 1


def test_ci_reliability_flag():
    _, _, reliable = ci_indices(10**3, 0.999, 0.95)
    assert not reliable  # Kq(1-q) = 0.999 < 50


def test_ci_brackets_point_estimate():
    sample = simulate_conditional_sample(PoissonParams(10.0), LN12, 10**5, RngStream(13))
    lo, hi, _ = quantile_ci(sample, 0.999, 0.95)
    v = empirical_quantile(sample, 0.999)
    assert lo <= v <= hi


def test_ci_validation():
    sample = LossSample(values=np.arange(1.0, 11.0), master_seed=0)
    with pytest.raises(ValueError):
        quantile_ci(sample, 0.999, 0.0)


def test_loss_sample_validation():
    with pytest.raises(ValueError):
        LossSample(values=np.array([3.0, 1.0]), master_seed=0)
    with pytest.raises(ValueError):
        LossSample(values=np.array([-1.0, 2.0]), master_seed=0)


# ---------------------------------------------------------------------------
# Adaptive accuracy


def _ln_sampler(n, stream):
    return np.exp(stream.generator.normal(1.0, 2.0, size=n))


def test_run_until_accuracy_loose_target_one_batch():
    est = run_until_accuracy(_ln_sampler, 0.9, 0.95, 1.0, 5000, 100_000, RngStream(14))
    assert est.K == 5000
    assert est.converged


def test_run_until_accuracy_capped_one_batch():
    est = run_until_accuracy(_ln_sampler, 0.999, 0.95, 1e-9, 5000, 5000, RngStream(15))
    assert est.K == 5000
    assert not est.converged


def test_run_until_accuracy_converges():
    est = run_until_accuracy(_ln_sampler, 0.99, 0.95, 0.05, 20_000, 2_000_000, RngStream(16))
    assert est.converged
    halfwidth = (est.ci_upper - est.ci_lower) / (2 * est.value)
    assert halfwidth <= 0.05


def test_coverage_of_conservative_interval():
    # analytic 0.999 quantile of LN(1, 2): exp(1 + 2 * z_0.999)
    from scipy.stats import norm

    true_q = math.exp(1.0 + 2.0 * norm.ppf(0.999))
    hits = 0
    reps = 200
    for i in range(reps):
        draws = np.sort(_ln_sampler(10**5, RngStream(1000 + i)))
        sample = LossSample(values=draws, master_seed=1000 + i)
        lo, hi, reliable = quantile_ci(sample, 0.999, 0.95)
        assert reliable
        if lo <= true_q <= hi:
            hits += 1
    assert hits / reps >= 0.90
