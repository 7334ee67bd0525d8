import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oedkit.mcmc import (
    ChainConfig,
    McmcError,
    OnlineCovariance,
    adapt_covariance,
    compare_designs,
    histogram,
    mh_step,
    posterior_target,
    run_chain,
)
from oedkit.models import GaussianLikelihood, Normal, PriorSpec, ToyModel, Uniform


def gauss(mean, cov):
    mean = np.asarray(mean, float)
    prec = np.linalg.inv(cov)
    return lambda t: float(-0.5 * (t - mean) @ prec @ (t - mean))


def test_retention_rule():
    assert ChainConfig(total=100, initial=[0.0], burn_in=10, thin=7).n_retained == 12
    ch = run_chain(gauss([0.0], np.eye(1)), ChainConfig(total=100, initial=[0.0], burn_in=10, thin=7, seed=1))
    assert ch.samples.shape == (12, 1)
    one = run_chain(gauss([0.0], np.eye(1)), ChainConfig(total=1, initial=[0.3], seed=1))
    assert one.samples.shape == (1, 1) and one.steps == 1


def test_config_validation():
    for bad in (dict(total=0), dict(burn_in=10), dict(thin=0), dict(eps=0.0), dict(adapt_start=1),
                dict(proposal_cov=np.array([[1.0, 2.0], [2.0, 1.0]]))):
        kw = dict(total=10, initial=[0.0, 0.0])
        kw.update(bad)
        with pytest.raises(McmcError):
            ChainConfig(**kw)
    c = ChainConfig(total=10, initial=[0.0, 0.0], proposal_cov=[0.5, 2.0])
    np.testing.assert_array_equal(c.proposal_cov, np.diag([0.5, 2.0]))
    assert c.s_d == pytest.approx(2.4**2 / 2)


def test_rejected_step_repeats_state():
    target = lambda t: 0.0 if abs(t[0]) < 1e-3 else -np.inf
    theta = np.array([0.0])
    nxt, acc = mh_step(target, theta, np.eye(1), np.random.default_rng(0))
    assert not acc and nxt is theta
    ch = run_chain(target, ChainConfig(total=50, initial=[0.0], proposal_cov=np.eye(1), adapt=False, seed=0))
    assert ch.accepted == 0 and np.all(ch.samples == 0.0)


def test_invalid_start_and_target():
    with pytest.raises(McmcError):
        run_chain(lambda t: -np.inf, ChainConfig(total=10, initial=[0.0]))
    with pytest.raises(McmcError):
        run_chain(lambda t: np.nan if t[0] > 0 else 0.0, ChainConfig(total=100, initial=[0.0], seed=3))


def test_determinism():
    cfg = ChainConfig(total=3000, initial=[0.0, 0.0], adapt_start=100, seed=5)
    a = run_chain(gauss([1, 2], np.eye(2)), cfg).samples
    b = run_chain(gauss([1, 2], np.eye(2)), cfg).samples
    np.testing.assert_array_equal(a, b)


def test_online_covariance_matches_numpy():
    x = np.random.default_rng(0).standard_normal((500, 3)) @ np.array([[2, 0, 0], [1, 1, 0], [0, 3, 0.5]])
    oc = OnlineCovariance(3)
    for row in x:
        oc.update(row)
    np.testing.assert_allclose(oc.covariance(), np.cov(x, rowvar=False), atol=1e-12)
    np.testing.assert_allclose(oc.mean, x.mean(0), atol=1e-12)
    np.testing.assert_allclose(adapt_covariance(x, 2.0, 1e-3), 2.0 * np.cov(x, rowvar=False) + 2e-3 * np.eye(3))
    rng = np.random.default_rng(5)
    s_d, eps = 2.4**2 / 2, 1e-6
    big = adapt_covariance(rng.standard_normal((10_000, 2)), s_d, eps)
    np.testing.assert_allclose(big, s_d * (1 + eps) * np.eye(2), atol=0.1 * s_d)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60))
def test_property_online_variance(xs):
    oc = OnlineCovariance(1)
    for v in xs:
        oc.update(np.array([v]))
    assert oc.covariance()[0, 0] == pytest.approx(np.var(xs, ddof=1), rel=1e-9, abs=1e-9)


def test_random_walk_acceptance_rate():
    # 1-D Gaussian random walk on N(0,1): acceptance = (2/pi) atan(2/s); 0.4423 for s = 2.4
    s = 2.4
    ch = run_chain(lambda t: -0.5 * float(t[0]) ** 2,
                   ChainConfig(total=100_000, initial=[0.0], proposal_cov=[s * s], adapt=False, seed=13))
    assert 0.3 <= ch.acceptance_rate <= 0.6
    assert ch.acceptance_rate == pytest.approx(2 / math.pi * math.atan(2 / s), abs=0.01)


def test_classic_mh_on_grid_target():
    # bimodal target on [0, 1]; compare binned empirical law with grid-normalised target
    def logp(t):
        x = t[0]
        if not 0.0 <= x <= 1.0:
            return -np.inf
        return math.log(math.exp(-((x - 0.25) ** 2) / 0.005) + 0.6 * math.exp(-((x - 0.7) ** 2) / 0.01))
    ch = run_chain(logp, ChainConfig(total=100_000, initial=[0.3], proposal_cov=[0.04], adapt=False, seed=7))
    edges = np.linspace(0, 1, 41)
    fine = np.linspace(0, 1, 4001)
    dens = np.exp([logp([x]) for x in fine])
    mass = np.array([dens[(fine >= a) & (fine < b)].sum() for a, b in zip(edges[:-1], edges[1:])])
    mass /= mass.sum()
    emp, _ = np.histogram(ch.samples[:, 0], bins=edges)
    emp = emp / emp.sum()
    assert 0.5 * np.abs(emp - mass).sum() < 0.05


def test_adaptive_recovers_gaussian():
    cov = np.array([[1.0, 0.8], [0.8, 2.0]])
    ch = run_chain(gauss([1.0, -1.0], cov), ChainConfig(total=60_000, initial=[0.0, 0.0], burn_in=5000, thin=2,
                                                        adapt_start=500, seed=11))
    np.testing.assert_allclose(ch.mean, [1.0, -1.0], atol=0.1)
    np.testing.assert_allclose(ch.cov, cov, rtol=0.15)
    assert 0.15 < ch.acceptance_rate < 0.6
    # adapted proposal tracks the target covariance
    np.testing.assert_allclose(ch.final_cov / (2.4**2 / 2), cov, rtol=0.2, atol=0.05)


def test_summary_and_histogram():
    ch = run_chain(gauss([0.0], np.eye(1)), ChainConfig(total=2000, initial=[0.0], seed=2))
    s = ch.summary()
    assert s["retained"] == 2000 and s["parameters"][0]["index"] == 1
    assert set(s["parameters"][0]["quantiles"]) == {"0.025", "0.25", "0.5", "0.75", "0.975"}
    (edges, counts), = histogram(ch.samples, bins=10)
    assert edges.size == 11 and counts.sum() == 2000


def test_posterior_target_and_identical_comparison():
    model, lik, prior = ToyModel(), GaussianLikelihood(1e-2, m=1), PriorSpec([Uniform(0, 1)])
    y, d = np.array([0.3]), np.array([0.6])
    t = posterior_target(model, lik, prior, y, d)
    assert t([1.5]) == -np.inf
    cfg = ChainConfig(total=20_000, initial=[0.5], burn_in=2000, proposal_cov=[0.01], seed=4)
    cmp_ = compare_designs(model, lik, prior, y, d, y, d, cfg)
    np.testing.assert_allclose(cmp_.sd_ratio, 1.0)  # same seed gives the same chain
    cfg_b = ChainConfig(total=20_000, initial=[0.5], burn_in=2000, proposal_cov=[0.01], seed=5)
    cmp2 = compare_designs(model, lik, prior, y, d, y, d, cfg, cfg_b)
    assert abs(cmp2.sd_ratio[0] - 1.0) < 0.15
    rec = list(cmp_.records())
    assert rec[0]["prior_sd"] == pytest.approx(1 / math.sqrt(12))


def test_uninformative_parameter_keeps_prior_sd():
    # second parameter does not enter the model: its marginal posterior is its prior
    class OneActive(ToyModel):
        n_theta = 2

        def evaluate_batch(self, theta, d):
            return super().evaluate_batch(theta[:, :1], d)
    prior = PriorSpec([Uniform(0, 1), Normal(0.0, 4.0)])
    cfg = ChainConfig(total=60_000, initial=[0.5, 0.0], burn_in=5000, proposal_cov=[0.01, 0.4], seed=8)
    cmp_ = compare_designs(OneActive(), GaussianLikelihood(1e-3, m=1), prior, [0.5], [0.9], [0.5], [0.4], cfg)
    assert 0.8 < cmp_.ratio_a_prior[1] < 1.2
    assert cmp_.ratio_a_prior[0] < 0.3
