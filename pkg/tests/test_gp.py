import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpdoe import gp
from gpdoe.design import Design, generate_lhs, make_rng
from gpdoe.errors import ArgumentError, DataError
from gpdoe.gp import CorrelationParams, FitOptions, GpModel, correlation, fit, log_likelihood

from oracles import gp_dense

FAST = FitOptions(n_starts=4)


def random_model(seed, n=5, d=2, nugget=1e-8):
    rng = make_rng(seed)
    x = rng.random((n, d))
    y = rng.normal(size=n)
    corr = CorrelationParams(rng.uniform(0.1, 10, d), rng.uniform(0.5, 2, d))
    return x, y, corr, GpModel.build(Design(x), y, corr, nugget)


class TestCorrelation:
    def test_zero_distance(self):
        assert correlation([0.3, 0.4], [0.3, 0.4], CorrelationParams([2, 5], [1.5, 2])) == 1.0

    def test_exponential(self):
        assert correlation([0.0], [1.0], CorrelationParams([1.0], [1.0])) == pytest.approx(math.exp(-1), abs=1e-15)

    def test_theta_zero(self):
        assert correlation([0, 0], [1, 1], CorrelationParams([0, 0], [2, 2])) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            correlation([0.0], [0.0, 1.0], CorrelationParams([1.0], [1.0]))

    @pytest.mark.parametrize("theta,p", [([-1.0], [1.0]), ([1.0], [0.0]), ([1.0], [2.5]), ([1, 2], [1, 1, 1])])
    def test_invalid_params(self, theta, p):
        with pytest.raises(ArgumentError):
            CorrelationParams(theta, p)


class TestDenseOracle:
    @pytest.mark.parametrize("seed", range(5))
    def test_predictor_and_variance(self, seed):
        x, y, corr, model = random_model(seed)
        x_new = make_rng(seed + 100).random((7, 2))
        beta, s2, mean, var, ll = gp_dense(x, y, corr.theta, corr.p, 1e-8, x_new)
        m, v = model.predict(x_new)
        np.testing.assert_allclose(model.beta, beta, rtol=1e-8, atol=1e-8)
        assert model.sigma2 == pytest.approx(s2, rel=1e-8)
        np.testing.assert_allclose(m, mean, rtol=0, atol=1e-8)
        np.testing.assert_allclose(v, np.maximum(var, 0), rtol=0, atol=1e-8)
        assert model.log_likelihood == pytest.approx(ll, abs=1e-8)

    def test_three_point_likelihood(self):
        x = np.array([[0.1], [0.5], [0.8]])
        y = np.array([1.0, -0.5, 2.0])
        corr = CorrelationParams([3.0], [1.5])
        ll = gp_dense(x, y, corr.theta, corr.p, 0.0, x)[4]
        assert log_likelihood(x, y, corr) == pytest.approx(ll, abs=1e-10)

    def test_compiled_kernel_matches_reference(self, rng):
        x = rng.random((25, 3))
        y = rng.normal(size=25)
        lik = gp._Likelihood(x, y)
        for _ in range(10):
            theta, p = 10 ** rng.uniform(-2, 2, 3), rng.uniform(0.2, 2, 3)
            assert lik.fast(theta, p, 1e-8) == pytest.approx(lik.solve(theta, p, 1e-8)[3], abs=1e-9)


class TestLikelihoodInvariances:
    def setup_method(self):
        rng = make_rng(3)
        self.x = generate_lhs(12, 2, rng).points
        self.y = np.sin(6 * self.x[:, 0]) + self.x[:, 1] ** 2
        self.corr = CorrelationParams([4.0, 1.0], [1.9, 1.2])

    def test_shift(self):
        lik0 = gp._Likelihood(self.x, self.y)
        lik1 = gp._Likelihood(self.x, self.y + 123.0)
        s0 = lik0.solve(self.corr.theta, self.corr.p, 1e-8)
        s1 = lik1.solve(self.corr.theta, self.corr.p, 1e-8)
        assert s1[2] == pytest.approx(s0[2], rel=1e-10)
        assert s1[3] == pytest.approx(s0[3], abs=1e-8)

    def test_scale_shifts_by_n_log_a(self):
        a = 7.5
        for theta in ([0.5, 0.5], [4.0, 1.0], [30.0, 2.0]):
            ll0 = log_likelihood(self.x, self.y, CorrelationParams(theta, [1.5, 1.5]))
            ll1 = log_likelihood(self.x, a * self.y, CorrelationParams(theta, [1.5, 1.5]))
            assert ll1 - ll0 == pytest.approx(-12 * math.log(a), abs=1e-9)

    def test_fitted_parameters_unchanged(self):
        m0 = fit(self.x, self.y, FAST)
        m1 = fit(self.x, 3.0 * self.y + 5.0, FAST)
        np.testing.assert_allclose(m1.corr.theta, m0.corr.theta, rtol=1e-4)
        np.testing.assert_allclose(m1.corr.p, m0.corr.p, rtol=1e-4)


class TestFit:
    def test_linear_function(self):
        rng = make_rng(1)
        x = generate_lhs(15, 2, rng).points
        y = 2 + 3 * x[:, 0]
        model = fit(x, y, FAST)
        grid = rng.random((200, 2))
        truth = 2 + 3 * grid[:, 0]
        pred = model.predict(grid)[0]
        np.testing.assert_allclose(pred, truth, rtol=1e-3)
        assert 1 - np.sum((truth - pred) ** 2) / np.sum((truth - truth.mean()) ** 2) >= 0.999

    def test_constant_outputs(self):
        x = generate_lhs(8, 2, make_rng(2)).points
        model = fit(x, np.full(8, 4.0), FAST)
        assert model.beta[0] == pytest.approx(4.0, abs=1e-8)
        assert model.sigma2 <= 1e-8 * 16
        np.testing.assert_allclose(model.predict(make_rng(0).random((5, 2)))[0], 4.0, atol=1e-8)

    def test_irregular_wlhs_40(self):
        from gpdoe.experiments import ExperimentConfig, cell_seed, make_design
        from gpdoe.testfns import irregular

        cfg = ExperimentConfig(study="fit_comparison", function="irregular", design_kinds=("wlhs",), sizes=(40,),
                               repetitions=1, seed=0)
        design = make_design(cfg, "wlhs", 40, 2, cell_seed(cfg, 0, "wlhs", 40))
        model = fit(design, irregular.on_unit(design.points), FitOptions(seed=0))
        test = make_rng(5).random((10000, 2))
        truth = irregular.on_unit(test)
        pred = model.predict(test)[0]
        q2 = 1 - np.sum((truth - pred) ** 2) / np.sum((truth - truth.mean()) ** 2)
        assert q2 >= 0.90

    def test_duplicate_points(self):
        x = np.array([[0.1, 0.2], [0.1, 0.2], [0.5, 0.5], [0.9, 0.1]])
        with pytest.raises(DataError):
            fit(x, np.arange(4.0))

    def test_too_few_points(self):
        with pytest.raises(DataError):
            fit(np.array([[0.1, 0.2], [0.3, 0.9], [0.5, 0.5]]), np.arange(3.0))

    def test_non_finite_outputs(self):
        with pytest.raises(DataError):
            fit(np.array([[0.1], [0.3], [0.5]]), [0.0, np.nan, 1.0])

    def test_reproducible(self, rng):
        x = generate_lhs(14, 3, rng).points
        y = np.sin(x @ [3, 1, 2])
        a, b = fit(x, y, FAST), fit(x, y, FAST)
        assert np.array_equal(a.corr.theta, b.corr.theta) and np.array_equal(a.corr.p, b.corr.p)

    def test_threads_do_not_change_result(self, rng):
        x = generate_lhs(14, 2, rng).points
        y = np.cos(5 * x[:, 0]) * x[:, 1]
        a = fit(x, y, FitOptions(n_starts=6, threads=1))
        b = fit(x, y, FitOptions(n_starts=6, threads=3))
        assert np.array_equal(a.corr.theta, b.corr.theta) and a.log_likelihood == b.log_likelihood

    def test_row_permutation(self, rng):
        x = generate_lhs(14, 2, rng).points
        y = np.cos(5 * x[:, 0]) + x[:, 1]
        perm = rng.permutation(14)
        a, b = fit(x, y, FAST), fit(x[perm], y[perm], FAST)
        grid = rng.random((50, 2))
        np.testing.assert_allclose(a.predict(grid)[0], b.predict(grid)[0], atol=1e-6)

    def test_pinned_exponent_and_active_dims(self, rng):
        x = generate_lhs(12, 3, rng).points
        y = np.sin(4 * x[:, 0])
        m = fit(x, y, FitOptions(p_mode="gaussian", active_dims=(0,), n_starts=3))
        assert np.all(m.corr.p == 2.0)
        assert m.corr.theta[1] == 0.0 and m.corr.theta[2] == 0.0 and m.corr.theta[0] > 0

    def test_polish_never_worsens_objective(self, rng):
        x = generate_lhs(16, 4, rng).points
        y = np.abs(4 * x - 2).sum(axis=1)

        def objective(m, options):
            ll = log_likelihood(x, y, m.corr, m.nugget)
            return -ll + options.penalty * len(y) * m.corr.theta.sum()

        plain = FitOptions(n_starts=6, polish=0)
        polished = FitOptions(n_starts=6, polish=3)
        assert objective(fit(x, y, polished), polished) <= objective(fit(x, y, plain), plain) + 1e-12

    def test_isotropic_starts_only(self, rng):
        x = generate_lhs(12, 3, rng).points
        y = x.sum(axis=1) ** 2
        m = fit(x, y, FitOptions(n_starts=1, isotropic_starts=5, polish=0))
        assert np.all(np.isfinite(m.corr.theta)) and np.isfinite(m.log_likelihood)

    @pytest.mark.parametrize("field", ["isotropic_starts", "polish", "restarts"])
    def test_negative_search_counts(self, field):
        with pytest.raises(ArgumentError):
            FitOptions(**{field: -1})

    def test_unknown_option(self):
        with pytest.raises(ArgumentError):
            FitOptions(p_mode="cubic")


@given(seed=st.integers(0, 10**6), n=st.integers(4, 15), d=st.integers(1, 3))
@settings(max_examples=20, deadline=None)
def test_interpolation_invariant(seed, n, d):
    rng = make_rng(seed)
    x = generate_lhs(n, d, rng).points
    y = rng.normal(size=n) * 3
    corr = CorrelationParams(10 ** rng.uniform(-1, 1.5, d), rng.uniform(0.5, 2, d))
    model = GpModel.build(Design(x), y, corr, 1e-8)
    mean, var = model.predict(x)
    # With a nugget the residual at the data is nugget * (R + nugget I)^-1 (y - F beta).
    lam_min = np.linalg.eigvalsh(gp.correlation_matrix(x, x, corr))[0]
    resid = np.linalg.norm(y - gp.trend_basis(x) @ model.beta)
    assert np.max(np.abs(mean - y)) <= 2 * model.nugget * resid / lam_min + 1e-9
    assert np.all(var <= model.sigma2 * (model.nugget * 10 + 1e-8))
    far = model.predict(rng.random((20, d)))[1]
    assert np.all(far >= 0) and np.all(far <= model.sigma2 * (1 + 1e-8))


def test_far_point_variance_is_sigma2():
    x, y, corr, model = random_model(0)
    strong = GpModel.build(Design(x), y, CorrelationParams([1e6, 1e6], [2, 2]), 1e-8)
    v = strong.predict(np.array([0.999, 0.001]))[1]
    assert v == pytest.approx(strong.sigma2, rel=1e-8)


def test_single_point_prediction_returns_floats():
    _, _, _, model = random_model(1)
    m, v = model.predict([0.2, 0.3])
    assert isinstance(m, float) and isinstance(v, float)
    with pytest.raises(ArgumentError):
        model.predict([0.2, 0.3, 0.1])


def test_json_round_trip(tmp_path):
    x, y, corr, model = random_model(4, n=9)
    path = tmp_path / "m.json"
    model.save(path)
    back = GpModel.load(path)
    grid = make_rng(9).random((20, 2))
    np.testing.assert_allclose(back.predict(grid)[0], model.predict(grid)[0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.predict(grid)[1], model.predict(grid)[1], rtol=0, atol=1e-12)
