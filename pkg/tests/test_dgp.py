"""Generating-process tests: confounder mechanics, effect mechanisms,
overlap, reconstruction identities, determinism, and the analytic star."""

import inspect
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from netcate import dgp, graphs
from netcate.errors import ConfigError, ValidationError
from netcate.seeding import FEATURES, stream


def small_graph(n=30, seed=0):
    return graphs.generate_ba(n, 3, np.random.default_rng(seed))


class TestZscore:
    def test_moments(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.normal(loc=rng.normal(), scale=rng.uniform(0.5, 4.0), size=200)
            z = dgp.zscore(v)
            assert abs(z.mean()) < 1e-9
            assert abs(z.std() - 1.0) < 1e-9

    def test_degenerate_guard(self):
        assert_allclose(dgp.zscore(np.full(10, 3.7)), np.zeros(10))
        assert_allclose(dgp.zscore(np.zeros(4)), np.zeros(4))


class TestConfounders:
    def test_edgeless_graph_is_local(self):
        g = graphs.Graph(8, [])
        x = np.random.default_rng(1).normal(size=(8, 3))
        rng_a = np.random.default_rng(2)
        h1, _ = dgp.make_confounders(x, g, rng_a, embed_dim=4)
        # edgeless + self-loops means a_hat is the identity
        rng_b = np.random.default_rng(2)
        w_a = rng_b.normal(0.0, 1.0 / math.sqrt(3), size=(3, 4))
        assert_allclose(h1, np.maximum(x @ w_a, 0.0), rtol=1e-12)

    def test_zero_features_zero_embeddings(self):
        g = small_graph()
        h1, h2 = dgp.make_confounders(np.zeros((g.n, 5)), g, np.random.default_rng(3))
        assert_allclose(h1, 0.0)
        assert_allclose(h2, 0.0)

    def test_symmetric_nodes_get_equal_rows(self):
        g = graphs.Graph(2, [(0, 1)])
        x = np.tile([[1.0, -2.0]], (2, 1))
        h1, h2 = dgp.make_confounders(x, g, np.random.default_rng(4), embed_dim=3)
        assert_allclose(h1[0], h1[1])
        assert_allclose(h2[0], h2[1])

    def test_shapes(self):
        g = small_graph()
        h1, h2 = dgp.make_confounders(np.random.default_rng(0).normal(size=(g.n, 7)), g,
                                      np.random.default_rng(5), embed_dim=6)
        assert h1.shape == (g.n, 6)
        assert h2.shape == (g.n, 6)


class TestMakeCate:
    def test_local_x_zero_feature_column(self):
        cfg = dgp.DgpConfig(d=3, cate_kind="local_x")
        x = np.zeros((10, 3))
        tau = dgp.make_cate(cfg, x, np.zeros((10, 2)), np.zeros((10, 2)))
        assert_allclose(tau, 0.0)

    def test_simple_h_degenerate_embedding(self):
        cfg = dgp.DgpConfig(d=2, cate_kind="simple_h")
        h = np.full((12, 4), 0.3)
        tau = dgp.make_cate(cfg, np.zeros((12, 2)), h, h)
        assert_allclose(tau, 0.0)

    def test_local_x_ignores_graph_side(self):
        cfg = dgp.DgpConfig(d=4, cate_kind="local_x")
        rng = np.random.default_rng(6)
        x = rng.normal(size=(20, 4))
        tau_a = dgp.make_cate(cfg, x, rng.normal(size=(20, 3)), rng.normal(size=(20, 3)))
        tau_b = dgp.make_cate(cfg, x, rng.normal(size=(20, 3)), rng.normal(size=(20, 3)))
        assert_allclose(tau_a, tau_b)

    def test_simple_h_sensitive_to_features_given_graph(self):
        g = small_graph(40, seed=2)
        rng = np.random.default_rng(7)
        x = rng.normal(size=(g.n, 5))
        cfg = dgp.DgpConfig(d=5, cate_kind="simple_h")
        conf_rng = np.random.default_rng(8)
        h1, h2 = dgp.make_confounders(x, g, conf_rng)
        perm = np.random.default_rng(9).permutation(g.n)
        h1p, h2p = dgp.make_confounders(x[perm], g, np.random.default_rng(8))
        tau = dgp.make_cate(cfg, x, h1, h2)
        tau_p = dgp.make_cate(cfg, x[perm], h1p, h2p)
        assert not np.allclose(tau, tau_p)

    def test_mechanisms_differ(self):
        g = small_graph(60, seed=3)
        rng = np.random.default_rng(10)
        x = rng.normal(size=(g.n, 4))
        h1, h2 = dgp.make_confounders(x, g, np.random.default_rng(11))
        taus = {
            kind: dgp.make_cate(dgp.DgpConfig(d=4, cate_kind=kind), x, h1, h2)
            for kind in dgp.CATE_KINDS
        }
        assert not np.allclose(taus["simple_h"], taus["higher_order"])
        assert not np.allclose(taus["simple_h"], taus["local_x"])

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            dgp.DgpConfig(d=2, cate_kind="quadratic")


class TestAssignTreatment:
    def test_zero_scale_gives_fair_coin(self):
        g = small_graph()
        cfg = dgp.DgpConfig(d=3, propensity_scale=0.0)
        rng = np.random.default_rng(12)
        x = rng.normal(size=(g.n, 3))
        h1, _ = dgp.make_confounders(x, g, rng)
        prop, t = dgp.assign_treatment(cfg, x, h1, np.random.default_rng(13))
        assert_allclose(prop, 0.5)
        assert set(np.unique(t)) <= {0.0, 1.0}

    def test_clipping(self):
        cfg = dgp.DgpConfig(d=2, propensity_scale=50.0)
        rng = np.random.default_rng(14)
        x = rng.normal(size=(500, 2))
        h1 = np.maximum(rng.normal(size=(500, 4)), 0.0)
        prop, _ = dgp.assign_treatment(cfg, x, h1, rng)
        assert prop.min() >= 0.05
        assert prop.max() <= 0.95

    def test_confounding_is_real_over_seeds(self):
        spec = graphs.GraphSpec(kind="ba", n=400)
        cfg = dgp.DgpConfig(d=10)
        hits = 0
        for seed in range(30):
            _, ds = dgp.generate_dataset(spec, cfg, seed)
            h_bar = ds.h1.mean(axis=1)
            rho = np.corrcoef(ds.t, h_bar)[0, 1]
            if abs(rho) > 0.05:
                hits += 1
        assert hits >= 25

    def test_sampler_sees_only_x_h1_rng(self):
        params = list(inspect.signature(dgp.assign_treatment).parameters)
        assert params == ["cfg", "x", "h1", "rng"]


class TestMakeOutcome:
    def test_zero_everything(self):
        cfg = dgp.DgpConfig(d=2, noise_level=0.0)
        x = np.zeros((6, 2))
        h1 = np.zeros((6, 3))
        y, baseline, eps = dgp.make_outcome(cfg, x, h1, np.zeros(6), np.zeros(6),
                                            np.random.default_rng(15))
        assert_allclose(y, 0.0)
        assert_allclose(baseline, 0.0)
        assert_allclose(eps, 0.0)

    def test_reconstruction_identity(self):
        spec = graphs.GraphSpec(kind="er", n=200)
        _, ds = dgp.generate_dataset(spec, dgp.DgpConfig(d=5), seed=3)
        assert_allclose(ds.y - ds.baseline - ds.t * ds.tau, ds.eps, rtol=0, atol=0)

    def test_noise_variance(self):
        cfg = dgp.DgpConfig(d=2, noise_level=0.7)
        x = np.random.default_rng(16).normal(size=(10_000, 2))
        h1 = np.zeros((10_000, 3))
        _, _, eps = dgp.make_outcome(cfg, x, h1, np.zeros(10_000), np.zeros(10_000),
                                     np.random.default_rng(17))
        assert eps.var() == pytest.approx(0.49, rel=0.05)

    def test_baseline_scale(self):
        spec = graphs.GraphSpec(kind="ba", n=500)
        _, ds = dgp.generate_dataset(spec, dgp.DgpConfig(d=10), seed=11)
        assert ds.baseline.std() == pytest.approx(2.0, rel=1e-9)


class TestGenerateDataset:
    def test_bit_identical_given_seed(self):
        spec = graphs.GraphSpec(kind="ba", n=150)
        cfg = dgp.DgpConfig(d=6)
        g1, d1 = dgp.generate_dataset(spec, cfg, 7)
        g2, d2 = dgp.generate_dataset(spec, cfg, 7)
        assert g1.edges == g2.edges
        for name in ("x", "h1", "h2", "propensity", "t", "y", "tau", "baseline", "eps"):
            assert np.array_equal(getattr(d1, name), getattr(d2, name))

    def test_main_shapes(self):
        spec = graphs.GraphSpec(kind="ba", n=1000)
        cfg = dgp.DgpConfig(d=10, cate_kind="simple_h", noise_level=0.5)
        g, ds = dgp.generate_dataset(spec, cfg, 0)
        assert g.n == 1000
        assert ds.x.shape == (1000, 10)
        assert ds.h1.shape == (1000, 8)
        assert ds.y.shape == (1000,)

    def test_file_spec_infers_shapes(self, tmp_path):
        rng = np.random.default_rng(18)
        g = graphs.generate_er(40, 0.2, rng)
        x = rng.normal(size=(40, 7))
        ep, fp = tmp_path / "g.edges", tmp_path / "g.features"
        graphs.write_graph_files(g, x, ep, fp)
        spec = graphs.GraphSpec(kind="file", edge_path=str(ep), feature_path=str(fp))
        g2, ds = dgp.generate_dataset(spec, dgp.DgpConfig(d=None), 0)
        assert g2.n == 40
        assert ds.num_features == 7

    def test_overlap_on_every_dataset(self):
        for kind, seed in (("ba", 0), ("er", 1), ("sbm", 2)):
            spec = graphs.GraphSpec(kind=kind, n=300)
            _, ds = dgp.generate_dataset(spec, dgp.DgpConfig(d=8), seed)
            assert ds.propensity.min() >= 0.05
            assert ds.propensity.max() <= 0.95

    def test_sine_argument_is_standardized(self):
        spec = graphs.GraphSpec(kind="ba", n=400)
        for kind in ("simple_h", "higher_order", "local_x"):
            cfg = dgp.DgpConfig(d=6, cate_kind=kind)
            _, ds = dgp.generate_dataset(spec, cfg, 5)
            if kind == "simple_h":
                arg = dgp.zscore(ds.h1.mean(axis=1))
            elif kind == "higher_order":
                arg = dgp.zscore(ds.h2.mean(axis=1))
            else:
                arg = dgp.zscore(ds.x[:, 0])
            assert abs(arg.mean()) < 1e-9
            assert abs(arg.std() - 1.0) < 1e-9
            assert_allclose(ds.tau, cfg.tau_amplitude * np.sin(arg), rtol=1e-12)

    def test_local_x_invariant_to_graph(self):
        cfg = dgp.DgpConfig(d=5, cate_kind="local_x")
        x = stream(9, FEATURES).standard_normal((80, 5))
        g_a = graphs.generate_ba(80, 3, np.random.default_rng(0))
        g_b = graphs.generate_er(80, 0.1, np.random.default_rng(1))
        h1a, h2a = dgp.make_confounders(x, g_a, np.random.default_rng(2))
        h1b, h2b = dgp.make_confounders(x, g_b, np.random.default_rng(2))
        assert_allclose(dgp.make_cate(cfg, x, h1a, h2a), dgp.make_cate(cfg, x, h1b, h2b))

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            dgp.DgpConfig(d=3, noise_level=-0.1)
        with pytest.raises(ValidationError):
            dgp.DgpConfig(d=3, propensity_clip=(0.0, 0.9))
        with pytest.raises(ValidationError):
            dgp.DgpConfig(d=3, tau_amplitude=0.0)


class TestStarExample:
    def test_embeddings(self):
        star = dgp.star_example()
        by_label = dict(zip(star.labels, star.h))
        assert by_label["C"] == pytest.approx(1.25, abs=0)
        for leaf in "ABDE":
            assert by_label[leaf] == pytest.approx(10.0, abs=0)

    def test_tau_values(self):
        star = dgp.star_example()
        by_label = dict(zip(star.labels, star.tau))
        assert by_label["C"] == pytest.approx(math.sin(1.25), abs=1e-15)
        assert by_label["A"] == pytest.approx(math.sin(10.0), abs=1e-15)

    def test_constraint_table(self):
        star = dgp.star_example()
        assert star.constraint_table == {
            1.0: pytest.approx(math.sin(10.0)),
            2.0: pytest.approx(math.sin(10.0)),
            10.0: pytest.approx(math.sin(1.25)),
        }

    def test_aware_table_is_exact(self):
        assert dgp.star_example().aware_mse == 0.0

    def test_blind_lookup_floor_on_this_instance(self):
        # every feature-value group here is effect-constant, so the best
        # per-feature lookup is exact; the analytic failure on this instance
        # shows up for the affine class instead (next test)
        star = dgp.star_example()
        assert star.blind_lookup_mse == pytest.approx(0.0, abs=1e-15)

    def test_blind_linear_floor_positive_and_exact(self):
        star = dgp.star_example()
        assert star.blind_linear_mse == pytest.approx(0.004314321504279243, rel=1e-9)
        assert star.blind_linear_mse > 0.0
