import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from oedkit.models import (
    DesignSpace,
    GaussianLikelihood,
    GriddedField,
    LinearModel,
    LogNormal,
    Normal,
    PlumeModel,
    PriorSpec,
    ToyModel,
    Uniform,
    cdf_transform,
    inverse_cdf_transform,
    kappa_e,
    log_likelihood,
    plume_model_eval,
    posterior_log_density,
    prior_sample,
    sample_data,
    snap_to_cell,
    toy_model_eval,
)

PLUME = {
    "grid": {"nx": 10, "ny": 8, "nz": 4, "dx": 2.0, "dy": 2.0, "dz": 1.0},
    "sources": [{"x": 5.0, "y": 8.0, "strength": 1.0}, {"x": 15.0, "y": 8.0, "strength": 1.0}],
    "materials": {"default": 0, "regions": [{"material": 1, "z": [3.0, 4.0]}]},
    "spread": 3.0,
    "n_layers": 2,
    "n_locations": 1,
}


# ---------------------------------------------------------------- toy model


def test_toy_values():
    assert toy_model_eval(0.0, 0.7) == 0.0
    assert toy_model_eval(1.0, 0.2) == pytest.approx(1.04, abs=1e-15)
    assert toy_model_eval(1.0, 1.0) == pytest.approx(1.449329, abs=5e-7)


def test_kappa_e_closed_form():
    assert kappa_e() == pytest.approx(math.sqrt((1 - math.exp(-0.8)) / 2.88), rel=1e-15)
    assert round(kappa_e(), 5) == 0.43727
    ke = kappa_e()
    assert 3 * ke**2 + math.exp(-0.8) == pytest.approx(3 * ke**2 * 0.04 + 1.0, rel=1e-12)


def test_toy_slope_crossing_at_kappa_e():
    h = 1e-6
    ke = kappa_e()
    for k in np.linspace(0.01, 0.99, 99):
        if abs(k - ke) < 1e-3:
            continue
        s1 = (toy_model_eval(k + h, 1.0) - toy_model_eval(k - h, 1.0)) / (2 * h)
        s02 = (toy_model_eval(k + h, 0.2) - toy_model_eval(k - h, 0.2)) / (2 * h)
        assert (s1 > s02) == (k > ke)


def test_toy_model_batch_matches_scalar():
    m = ToyModel(n_obs=2)
    theta = np.array([[0.1], [0.5], [0.9]])
    d = np.array([0.2, 0.8])
    out = m.evaluate_batch(theta, d)
    expect = [[toy_model_eval(t, di) for di in d] for t in theta[:, 0]]
    np.testing.assert_allclose(out, expect, rtol=1e-14)
    np.testing.assert_array_equal(m.evaluate([0.5], d), m.evaluate([0.5], d))


# ---------------------------------------------------------------- priors


def test_uniform_sample_mean():
    x = prior_sample(PriorSpec([Uniform(0, 1)]), np.random.default_rng(1), 10**5)
    assert x.shape == (10**5, 1)
    assert abs(x.mean() - 0.5) < 0.005


def test_lognormal_log_mean():
    n = 10**5
    x = prior_sample(PriorSpec([LogNormal(-23.5, 4.0)]), np.random.default_rng(2), n)
    assert abs(np.log(x).mean() + 23.5) < 3 * 2 / math.sqrt(n)


def test_degenerate_uniform():
    x = prior_sample(PriorSpec([Uniform(0.3, 0.3 + 1e-12)]), np.random.default_rng(0), 100)
    np.testing.assert_allclose(x, 0.3, atol=1e-11)


def test_cdf_transform_examples():
    assert cdf_transform(PriorSpec([Uniform(0, 1)]), [0.3])[0] == pytest.approx(0.3)
    assert cdf_transform(PriorSpec([LogNormal(-2.0, 0.5)]), [math.exp(-2.0)])[0] == pytest.approx(0.5, abs=1e-15)


def test_cdf_round_trip_lognormal():
    prior = PriorSpec([LogNormal(-23.5, 4.0), LogNormal(1.0, 0.25)])
    x = prior.sample(np.random.default_rng(3), 1000)
    back = inverse_cdf_transform(prior, cdf_transform(prior, x))
    assert np.max(np.abs(back / x - 1)) < 1e-10


def test_cdf_transform_is_uniform():
    prior = PriorSpec([LogNormal(-23.5, 4.0)])
    xi = cdf_transform(prior, prior.sample(np.random.default_rng(4), 10**4))
    assert stats.kstest(xi[:, 0], "uniform").statistic < 0.02


def test_cdf_outside_support_raises():
    with pytest.raises(ValueError):
        cdf_transform(PriorSpec([LogNormal(0.0, 1.0)]), [-1.0])
    with pytest.raises(ValueError):
        cdf_transform(PriorSpec([Uniform(0, 1)]), [1.5])
    with pytest.raises(ValueError):
        inverse_cdf_transform(PriorSpec([Uniform(0, 1)]), [1.5])


def test_prior_validation():
    with pytest.raises(ValueError):
        Uniform(1.0, 0.0)
    with pytest.raises(ValueError):
        LogNormal(0.0, 0.0)
    with pytest.raises(ValueError):
        PriorSpec([])
    with pytest.raises(ValueError):
        PriorSpec.from_list([{"dist": "beta", "a": 1}])


def test_prior_from_list_round_trip():
    items = [{"dist": "uniform", "a": 0.0, "b": 2.0}, {"dist": "normal", "mean": 1.0, "var": 3.0},
             {"dist": "lognormal", "mean": -1.0, "var": 0.5}]
    p = PriorSpec.from_list(items)
    assert p.to_list() == items
    np.testing.assert_allclose(p.std(), [2 / math.sqrt(12), math.sqrt(3.0),
                                         stats.lognorm(s=math.sqrt(0.5), scale=math.exp(-1)).std()])


def test_prior_log_density_matches_scipy():
    p = PriorSpec([Normal(1.0, 3.0), LogNormal(-1.0, 0.5), Uniform(0.0, 2.0)])
    th = np.array([0.3, 0.7, 1.1])
    ref = (stats.norm(1.0, math.sqrt(3.0)).logpdf(0.3) + stats.lognorm(s=math.sqrt(0.5), scale=math.exp(-1)).logpdf(0.7)
           + stats.uniform(0, 2).logpdf(1.1))
    assert p.log_density(th) == pytest.approx(ref, rel=1e-12)


# ---------------------------------------------------------------- likelihood


def test_log_likelihood_examples():
    lik = GaussianLikelihood(1e-4, m=1)
    assert log_likelihood(lik, [0.3], [0.3]) == pytest.approx(-0.5 * math.log(2 * math.pi * 1e-4), rel=1e-14)
    assert log_likelihood(lik, [0.3], [0.3]) == pytest.approx(3.6862, abs=1e-4)
    lik2 = GaussianLikelihood(np.eye(2))
    assert log_likelihood(lik2, [1.0, 2.0], [1.0, 2.0]) == pytest.approx(-math.log(2 * math.pi))
    q1 = log_likelihood(lik2, [0.5, 0.0], [0, 0]) - log_likelihood(lik2, [0, 0], [0, 0])
    q2 = log_likelihood(lik2, [1.0, 0.0], [0, 0]) - log_likelihood(lik2, [0, 0], [0, 0])
    assert q2 == pytest.approx(4 * q1)


def _dense_logpdf(y, g, cov):
    r = np.asarray(y) - np.asarray(g)
    m = r.size
    return -0.5 * m * math.log(2 * math.pi) - 0.5 * np.linalg.slogdet(cov)[1] - 0.5 * r @ np.linalg.inv(cov) @ r


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
def test_log_likelihood_matches_dense(m, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, m))
    cov = a @ a.T + 0.5 * np.eye(m)
    y, g = rng.standard_normal(m), rng.standard_normal(m)
    assert log_likelihood(GaussianLikelihood(cov), y, g) == pytest.approx(_dense_logpdf(y, g, cov), rel=1e-12, abs=1e-12)
    var = rng.random(m) + 0.1
    assert log_likelihood(GaussianLikelihood(var), y, g) == pytest.approx(_dense_logpdf(y, g, np.diag(var)),
                                                                         rel=1e-12, abs=1e-12)


def test_likelihood_rejects_bad_covariance():
    with pytest.raises(ValueError):
        GaussianLikelihood(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        GaussianLikelihood(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        GaussianLikelihood(1.0)


def test_sample_data_noise_limits():
    model = ToyModel()
    d = np.array([0.5])
    g = model.evaluate([0.7], d)
    tiny = GaussianLikelihood(1e-30, m=1)
    np.testing.assert_allclose(sample_data(model, tiny, [0.7], d, np.random.default_rng(0)), g, atol=1e-10)
    lik = GaussianLikelihood(np.array([0.04, 0.09]))
    m2 = ToyModel(2)
    d2 = np.array([0.2, 0.9])
    rng = np.random.default_rng(5)
    ys = np.array([sample_data(m2, lik, [0.7], d2, rng) for _ in range(20000)])
    g2 = m2.evaluate([0.7], d2)
    n = ys.shape[0]
    assert np.all(np.abs(ys.mean(0) - g2) < 3 * np.sqrt([0.04, 0.09]) / math.sqrt(n))
    np.testing.assert_allclose(ys.var(0), [0.04, 0.09], rtol=0.1)


def test_sample_noise_covariance_full_matrix():
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    z = GaussianLikelihood(cov).sample_noise(np.random.default_rng(0), 10**5)
    np.testing.assert_allclose(np.cov(z.T), cov, atol=0.03)


# ---------------------------------------------------------------- posterior


def test_posterior_flat_prior_is_likelihood_ratio():
    model, lik, prior = ToyModel(), GaussianLikelihood(1e-2, m=1), PriorSpec([Uniform(0, 1)])
    y, d = np.array([0.6]), np.array([0.2])
    lp = lambda t: posterior_log_density(model, lik, prior, y, d, [t])
    ll = lambda t: log_likelihood(lik, y, model.evaluate([t], d))
    assert lp(0.3) - lp(0.7) == pytest.approx(ll(0.3) - ll(0.7), rel=1e-12)
    assert posterior_log_density(model, lik, prior, y, d, [1.2]) == -np.inf


def test_posterior_grid_argmax():
    model, lik = ToyModel(), GaussianLikelihood(1e-4, m=1)
    prior = PriorSpec([Uniform(0, 1)])
    d = np.array([0.2])
    y = sample_data(model, lik, [0.61], d, np.random.default_rng(8))
    grid = np.linspace(0, 1, 1001)
    lp = np.array([posterior_log_density(model, lik, prior, y, d, [k]) for k in grid])
    brute = np.array([math.exp(log_likelihood(lik, y, model.evaluate([k], d))) * 1.0 for k in grid])
    assert np.argmax(lp) == np.argmax(brute)


def test_posterior_shift_invariance():
    model, lik = ToyModel(), GaussianLikelihood(1e-2, m=1)
    prior = PriorSpec([Normal(0.5, 0.1)])
    y, d = np.array([0.4]), np.array([0.9])
    a = posterior_log_density(model, lik, prior, y, d, [0.2])
    b = posterior_log_density(model, lik, prior, y, d, [0.6])
    assert (a + 7.0) - (b + 7.0) == pytest.approx(a - b)


# ---------------------------------------------------------------- design space, linear model


def test_design_space():
    s = DesignSpace((0.0, -1.0), (1.0, 1.0))
    assert s.contains([0.5, 0.0]) and not s.contains([1.5, 0.0])
    np.testing.assert_array_equal(s.clip([2.0, -3.0]), [1.0, -1.0])
    assert s.grid(3).shape == (9, 2)
    with pytest.raises(ValueError):
        DesignSpace((0.0,), (np.inf,))


def test_linear_model():
    np.testing.assert_allclose(LinearModel().evaluate_batch(np.array([[2.0], [-1.0]]), [0.5]), [[1.0], [-0.5]])


# ---------------------------------------------------------------- gridded field and plume


def test_snap_to_cell():
    dims, size = (10, 8, 4), (2.0, 2.0, 1.0)
    assert snap_to_cell(3.0, 3.0, dims, size) == (1, 1)  # cell centre
    assert snap_to_cell(2.0, 4.0, dims, size) == (0, 1)  # boundary ties go low
    assert snap_to_cell(0.0, 16.0, dims, size) == (0, 7)
    with pytest.raises(ValueError):
        snap_to_cell(-0.1, 3.0, dims, size)
    with pytest.raises(ValueError):
        snap_to_cell(3.0, 16.1, dims, size)


def test_gridded_field_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    f = GriddedField((3, 4, 2), (1.0, 2.0, 0.5), rng.random((3, 4, 2)))
    f.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,y,z,value" and len(lines) == 1 + 24
    g = GriddedField.from_csv(tmp_path / "f.csv", (3, 4, 2), (1.0, 2.0, 0.5))
    np.testing.assert_array_equal(g.values, f.values)


def test_plume_peak_at_source():
    pm = PlumeModel(PLUME)
    fld = pm.field(np.full(pm.n_theta, -23.5)).values
    top = fld[:, :, 0]
    i, j = np.unravel_index(np.argmax(top), top.shape)
    assert (i, j) in {snap_to_cell(5.0, 8.0, pm.dims, pm.cell_size), snap_to_cell(15.0, 8.0, pm.dims, pm.cell_size)}
    ci, cj = 2, 3  # cell holding centre (5, 7); source (5, 8) sits on a cell boundary
    obs = plume_model_eval(pm, np.full(pm.n_theta, -23.5), [5.0, 7.0])
    assert obs[0] >= fld[ci, :, 0].max() - 1e-15 or obs[0] == pytest.approx(fld[ci, cj, 0])
    assert obs.shape == (pm.n_obs,)


def test_plume_reflection_symmetry():
    pm = PlumeModel(PLUME)
    vals = pm.field(np.full(pm.n_theta, -22.0)).values
    np.testing.assert_allclose(vals, vals[::-1, :, :], rtol=1e-12)


def test_plume_observation_at_cell_centre_is_exact():
    pm = PlumeModel(PLUME)
    th = np.array([-22.0, -25.0])
    fld = pm.field(th)
    x, y = 7.0, 9.0  # centre of cell (3, 4)
    np.testing.assert_array_equal(pm.evaluate(th, [x, y]), fld.values[3, 4, :2])
    np.testing.assert_array_equal(fld.observe([x, y], 2), fld.values[3, 4, :2])


def test_plume_monotone_in_permeability():
    pm = PlumeModel(PLUME)
    lo = pm.evaluate([-25.0, -23.5], [9.0, 9.0])
    hi = pm.evaluate([-22.0, -23.5], [9.0, 9.0])
    assert np.all(hi > lo)


def test_plume_outside_footprint_raises():
    with pytest.raises(ValueError):
        PlumeModel(PLUME).evaluate([-23.5, -23.5], [25.0, 3.0])


def test_plume_observed_materials_and_batch():
    pm = PlumeModel(PLUME)
    assert pm.observed_materials() == {0}
    th = np.array([[-23.0, -24.0], [-22.0, -21.0]])
    full = pm.observed_field_batch(th)
    d = np.array([7.0, 9.0])
    cols = [k * 80 + 4 * 10 + 3 for k in range(2)]
    np.testing.assert_allclose(full[:, cols], pm.evaluate_batch(th, d))
