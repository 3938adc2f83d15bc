"""Estimator pipeline tests: grid wiring, nuisance behavior, residual
contracts, final stages, the T-learner, and determinism."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from netcate import dgp, graphs, nn, seeding
from netcate.dgp import DgpConfig, NodeDataset
from netcate.errors import ConfigError
from netcate.estimators import (ALL_KINDS, PIPELINES, EstimatorKind, TrainConfig,
                                estimate, estimate_rlearner, estimate_tlearner,
                                fit_final_gnn, fit_final_linear, fit_nuisance,
                                kernel_cate, residualize)

FULL = TrainConfig()
FAST = TrainConfig(hidden_dim=8, nuisance_epochs=25, cate_epochs=30)


@pytest.fixture(scope="module")
def main_instance():
    spec = graphs.GraphSpec(kind="ba", n=1000)
    g, ds = dgp.generate_dataset(spec, DgpConfig(d=10), 0)
    return g, ds


@pytest.fixture(scope="module")
def small_instance():
    spec = graphs.GraphSpec(kind="ba", n=200)
    g, ds = dgp.generate_dataset(spec, DgpConfig(d=6), 3)
    return g, ds


def replace_outcome(ds, y, tau=None):
    return NodeDataset(x=ds.x, h1=ds.h1, h2=ds.h2, propensity=ds.propensity,
                       t=ds.t, y=y, tau=tau if tau is not None else np.zeros(ds.n),
                       baseline=y * 0.0, eps=np.zeros(ds.n))


class TestGrid:
    def test_pipeline_table(self):
        assert PIPELINES[EstimatorKind.BASELINE] == ("mlp", "linear")
        assert PIPELINES[EstimatorKind.ABLATION] == ("gnn", "linear")
        assert PIPELINES[EstimatorKind.SANITY_CHECK] == ("mlp", "gnn")
        assert PIPELINES[EstimatorKind.GRAPH_RLEARNER] == ("gnn", "gnn")

    def test_constructed_components_match_grid(self, small_instance):
        g, ds = small_instance
        for kind, (nuis, _) in PIPELINES.items():
            if kind == EstimatorKind.TLEARNER:
                continue
            pair = fit_nuisance(kind, ds, g, FAST, 0)
            expected = nn.GcnModel if nuis == "gnn" else nn.MlpModel
            assert isinstance(pair.outcome_model, expected)
            assert isinstance(pair.propensity_model, expected)
            assert pair.arch == nuis

    def test_estimates_report_pipeline(self, small_instance):
        g, ds = small_instance
        est = estimate(EstimatorKind.BASELINE, ds, g, FAST, 0)
        assert est.pipeline == ("mlp", "linear")

    def test_tlearner_has_no_nuisance_stage(self, small_instance):
        g, ds = small_instance
        with pytest.raises(ConfigError):
            fit_nuisance(EstimatorKind.TLEARNER, ds, g, FAST, 0)
        with pytest.raises(ConfigError):
            estimate_rlearner(EstimatorKind.TLEARNER, ds, g, FAST, 0)


class TestFitNuisance:
    def test_noiseless_outcome_fit(self, main_instance):
        g, ds = main_instance
        noiseless = replace_outcome(ds, ds.baseline)
        pair = fit_nuisance(EstimatorKind.GRAPH_RLEARNER, noiseless, g, FULL, 0)
        mse = np.mean((pair.predict_outcome(noiseless, g) - noiseless.y) ** 2)
        assert mse < 0.05

    def test_constant_outcome_residuals_near_zero(self, main_instance):
        g, ds = main_instance
        const = replace_outcome(ds, np.full(ds.n, 1.7))
        pair = fit_nuisance(EstimatorKind.GRAPH_RLEARNER, const, g, FULL, 0)
        y_res, _ = residualize(pair, const, g)
        assert np.mean(y_res ** 2) < 0.01
        assert abs(y_res.mean()) < 0.02

    def test_unconfounded_dgp_gives_flat_propensity(self):
        spec = graphs.GraphSpec(kind="ba", n=1000)
        g, ds = dgp.generate_dataset(spec, DgpConfig(d=10, propensity_scale=0.0), 1)
        pair = fit_nuisance(EstimatorKind.GRAPH_RLEARNER, ds, g, FULL, 1)
        assert 0.45 <= pair.predict_propensity(ds, g).mean() <= 0.55


class TestResidualize:
    def test_t_res_strictly_inside_unit_interval(self, main_instance):
        g, ds = main_instance
        for kind in (EstimatorKind.BASELINE, EstimatorKind.GRAPH_RLEARNER):
            pair = fit_nuisance(kind, ds, g, FAST, 0)
            _, t_res = residualize(pair, ds, g)
            assert np.all(t_res > -1.0) and np.all(t_res < 1.0)

    def test_residual_means_small_after_training(self, main_instance):
        g, ds = main_instance
        pair = fit_nuisance(EstimatorKind.GRAPH_RLEARNER, ds, g, FULL, 0)
        y_res, t_res = residualize(pair, ds, g)
        assert abs(y_res.mean()) < 0.1
        assert abs(t_res.mean()) < 0.1

    def test_signal_retention_slope_near_one(self, main_instance):
        # noiseless variant: regressing y_res on t_res * tau gives slope ~ 1
        g, ds = main_instance
        noiseless = NodeDataset(x=ds.x, h1=ds.h1, h2=ds.h2, propensity=ds.propensity,
                                t=ds.t, y=ds.baseline + ds.t * ds.tau, tau=ds.tau,
                                baseline=ds.baseline, eps=np.zeros(ds.n))
        pair = fit_nuisance(EstimatorKind.GRAPH_RLEARNER, noiseless, g, FULL, 0)
        y_res, t_res = residualize(pair, noiseless, g)
        signal = t_res * ds.tau
        slope = float(signal @ y_res / (signal @ signal))
        assert slope == pytest.approx(1.0, abs=0.25)

    def test_half_propensity_model_residuals(self, small_instance):
        g, ds = small_instance
        pair = fit_nuisance(EstimatorKind.BASELINE, ds, g, FAST, 0)
        zero_logit = nn.MlpModel([nn.LinearLayer(np.zeros((ds.num_features, 1)),
                                                 np.zeros(1))])
        pair.propensity_model = zero_logit
        _, t_res = residualize(pair, ds, g)
        assert set(np.round(np.unique(t_res), 12)) <= {-0.5, 0.5}


class TestFitFinalLinear:
    def test_recovers_realizable_theta(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(400, 6))
        theta_star = rng.normal(size=6)
        t_res = rng.uniform(0.2, 0.8, 400) * rng.choice([-1.0, 1.0], 400)
        y_res = t_res * (x @ theta_star + 0.7)
        fit = fit_final_linear(y_res, t_res, x)
        assert_allclose(fit.theta, theta_star, atol=1e-8)
        assert fit.intercept == pytest.approx(0.7, abs=1e-8)

    def test_ones_column_weighted_mean(self):
        rng = np.random.default_rng(6)
        t_res = rng.uniform(-0.9, 0.9, 200)
        y_res = rng.normal(size=200)
        fit = fit_final_linear(y_res, t_res, np.ones((200, 1)))
        want = float(t_res @ y_res / (t_res @ t_res))
        got = fit.theta[0] + fit.intercept
        assert got == pytest.approx(want, abs=1e-6)

    def test_first_order_optimality(self, main_instance):
        g, ds = main_instance
        pair = fit_nuisance(EstimatorKind.BASELINE, ds, g, FAST, 0)
        y_res, t_res = residualize(pair, ds, g)
        fit = fit_final_linear(y_res, t_res, ds.x)
        tau_hat = fit.predict(ds.x)
        design = np.column_stack([ds.x, np.ones(ds.n)])
        grad = (-2.0 / ds.n) * design.T @ (t_res * (y_res - t_res * tau_hat))
        assert np.linalg.norm(grad) < 1e-6

    def test_tiny_residuals_get_zero_weight(self):
        x = np.array([[1.0], [2.0], [3.0]])
        t_res = np.array([0.5, 1e-9, -0.5])
        y_res = np.array([0.5, 1e6, -0.5])  # huge pseudo-outcome on the dead node
        fit = fit_final_linear(y_res, t_res, x)
        assert np.all(np.isfinite(fit.theta))
        assert abs(fit.predict(x)[1]) < 10.0


class TestFitFinalGnn:
    def test_degenerate_residuals_skip_training(self, small_instance):
        g, ds = small_instance
        final = fit_final_gnn(np.zeros(ds.n), np.zeros(ds.n), ds.x, g, FAST, 0)
        assert final.degenerate
        fresh = nn.GcnModel.init(FAST.dims(ds.num_features),
                                 seeding.stream(0, seeding.TRAINING, 2))
        assert_allclose(final.model.layers[0].weight, fresh.layers[0].weight)

    def test_realizable_noiseless_case(self, main_instance):
        g, ds = main_instance
        h_arg = dgp.zscore(ds.h1.mean(axis=1))
        rng = np.random.default_rng(7)
        t_res = np.where(rng.random(ds.n) < 0.5, 0.5, -0.5)
        y_res = t_res * np.sin(h_arg)
        final = fit_final_gnn(y_res, t_res, ds.x, g, FULL, 0)
        achieved = nn.r_loss(y_res, t_res, final.tau_kernel)
        assert achieved < 0.05 * y_res.var()
        # the distilled network tracks the exact solution closely
        model_loss = nn.r_loss(y_res, t_res, final.predict(g.a_hat, ds.x))
        assert model_loss < 0.25 * y_res.var()

    def test_distill_loss_non_increasing_late(self, main_instance):
        g, ds = main_instance
        pair = fit_nuisance(EstimatorKind.GRAPH_RLEARNER, ds, g, FULL, 0)
        y_res, t_res = residualize(pair, ds, g)
        final = fit_final_gnn(y_res, t_res, ds.x, g, FULL, 0)
        late = np.diff(final.loss_history[-50:])
        assert np.max(late) < 1e-3

    def test_embeddings_shape(self, small_instance):
        g, ds = small_instance
        est = estimate(EstimatorKind.GRAPH_RLEARNER, ds, g, FAST, 0)
        assert est.embeddings.shape == (ds.n, FAST.hidden_dim)

    def test_kernel_solution_beats_linear_on_network_effect(self, main_instance):
        g, ds = main_instance
        pair = fit_nuisance(EstimatorKind.GRAPH_RLEARNER, ds, g, FULL, 0)
        y_res, t_res = residualize(pair, ds, g)
        tau_kernel, lam = kernel_cate(y_res, t_res, ds.x, g.a_hat)
        linear = fit_final_linear(y_res, t_res, ds.x).predict(ds.x)
        assert lam > 0
        mse_kernel = np.mean((tau_kernel - ds.tau) ** 2)
        mse_linear = np.mean((linear - ds.tau) ** 2)
        assert mse_kernel < 0.6 * mse_linear


class TestTLearner:
    def test_constant_effect_recovered(self):
        spec = graphs.GraphSpec(kind="ba", n=1000)
        cfg = DgpConfig(d=10, noise_level=0.0, propensity_scale=0.0)
        g, ds = dgp.generate_dataset(spec, cfg, 4)
        tau_c = np.full(g.n, 2.0)
        ds_c = NodeDataset(x=ds.x, h1=ds.h1, h2=ds.h2, propensity=ds.propensity,
                           t=ds.t, y=ds.baseline + ds.t * tau_c, tau=tau_c,
                           baseline=ds.baseline, eps=np.zeros(g.n))
        est = estimate_tlearner(ds_c, g, FULL, 4)
        assert np.mean((est.tau_hat - tau_c) ** 2) < 0.1

    def test_arm_flip_antisymmetry(self, small_instance):
        g, ds = small_instance
        model = nn.GcnModel.init(FAST.dims(ds.num_features + 1),
                                 seeding.stream(0, seeding.TRAINING, 3))
        feats = np.column_stack([ds.x, ds.t])
        nn.train(model, "mse", (g.a_hat, feats), ds.y, epochs=20, lr=FAST.step_size)
        ones = np.column_stack([ds.x, np.ones(ds.n)])
        zeros = np.column_stack([ds.x, np.zeros(ds.n)])
        forward = (nn.gcn_forward(model, g.a_hat, ones)
                   - nn.gcn_forward(model, g.a_hat, zeros))[:, 0]
        flipped = (nn.gcn_forward(model, g.a_hat, zeros)
                   - nn.gcn_forward(model, g.a_hat, ones))[:, 0]
        assert_allclose(flipped, -forward, rtol=0, atol=0)


class TestDeterminismAndRobustness:
    def test_every_estimator_deterministic(self, small_instance):
        g, ds = small_instance
        for kind in ALL_KINDS:
            a = estimate(kind, ds, g, FAST, 5)
            b = estimate(kind, ds, g, FAST, 5)
            assert np.array_equal(a.tau_hat, b.tau_hat), kind

    def test_outcome_perturbation_changes_final_mse_mildly(self):
        # first-order robustness proxy: refitting on residuals from a
        # slightly perturbed outcome model moves the final error by < 25%
        spec = graphs.GraphSpec(kind="ba", n=300)
        cfg = DgpConfig(d=10)
        changes = []
        for seed in range(10):
            g, ds = dgp.generate_dataset(spec, cfg, seed)
            pair = fit_nuisance(EstimatorKind.GRAPH_RLEARNER, ds, g, FULL, seed)
            y_res, t_res = residualize(pair, ds, g)
            base = fit_final_gnn(y_res, t_res, ds.x, g, FULL, seed)
            mse0 = np.mean((base.predict(g.a_hat, ds.x) - ds.tau) ** 2)
            prng = np.random.default_rng(1000 + seed)
            for p in pair.outcome_model.params():
                p += prng.normal(0.0, 0.01, p.shape)
            y_res2, t_res2 = residualize(pair, ds, g)
            pert = fit_final_gnn(y_res2, t_res2, ds.x, g, FULL, seed)
            mse1 = np.mean((pert.predict(g.a_hat, ds.x) - ds.tau) ** 2)
            changes.append(abs(mse1 - mse0) / mse0)
        assert np.mean(changes) < 0.25
