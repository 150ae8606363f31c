import numpy as np
import pytest

from nndag.graph import Dag
from nndag.simul import (GenerationError, SCHEMES, Dataset, gen_add_func,
                         gen_gauss_anm, gen_lin, gen_pnl_gp, gen_pnl_mult,
                         generate, gp_draw, split_and_standardize,
                         _gen_add_func, _gen_gauss_anm, _gen_lin, _gen_pnl_gp,
                         _gen_pnl_mult, _rbf_kernel)


def chain(d):
    adj = np.zeros((d, d), dtype=np.int8)
    for i in range(d - 1):
        adj[i, i + 1] = 1
    return Dag(adj)


EMPTY3 = Dag(np.zeros((3, 3), dtype=np.int8))


class TestRbfKernel:
    def test_unit_diagonal(self):
        p = np.random.default_rng(0).normal(size=(5, 2))
        k = _rbf_kernel(p)
        assert np.allclose(np.diag(k), 1.0)

    def test_known_value(self):
        # k(0, 1) = exp(-1/2) under the unit-bandwidth convention
        k = _rbf_kernel(np.array([[0.0], [1.0]]))
        assert np.isclose(k[0, 1], np.exp(-0.5))

    def test_distance_scaling(self):
        k = _rbf_kernel(np.array([[0.0], [2.0]]))
        assert np.isclose(k[0, 1], np.exp(-2.0))


class TestGpDraw:
    def test_marginal_variance(self):
        # f at a single location is N(0, 1 + jitter)
        rng = np.random.default_rng(1)
        draws = np.array([gp_draw(np.zeros((1, 1)), rng)[0] for _ in range(4000)])
        se = np.sqrt(2.0 / (len(draws) - 1))
        assert abs(draws.var() - 1.0) < 3 * se

    def test_duplicated_points_escalate_jitter(self):
        # a rank-deficient kernel still yields a finite draw
        rng = np.random.default_rng(2)
        f = gp_draw(np.ones((50, 2)), rng)
        assert np.isfinite(f).all()
        # duplicated inputs produce (nearly) duplicated function values
        assert np.ptp(f) < 0.2

    def test_error_after_max_jitter(self, monkeypatch):
        def always_fail(_):
            raise np.linalg.LinAlgError("forced")

        monkeypatch.setattr(np.linalg, "cholesky", always_fail)
        with pytest.raises(GenerationError, match="node 7"):
            gp_draw(np.zeros((3, 1)), np.random.default_rng(0), node=7)

    def test_smoothness(self):
        # nearby inputs give nearby outputs for an RBF draw
        p = np.linspace(0, 1, 100)[:, None]
        f = gp_draw(p, np.random.default_rng(3))
        assert np.max(np.abs(np.diff(f))) < 0.5


class TestGaussAnm:
    def test_empty_graph_roots(self):
        x, meta = _gen_gauss_anm(EMPTY3, 100_000, np.random.default_rng(0))
        for j in range(3):
            v = meta["root_var"][j]
            assert 1.0 <= v <= 2.0
            se = v * np.sqrt(2.0 / (x.shape[0] - 1))
            assert abs(x[:, j].var() - v) < 3 * se

    def test_residual_variance(self):
        g = chain(2)
        x, meta = _gen_gauss_anm(g, 3000, np.random.default_rng(1))
        sigma2 = meta["sigma2"][1]
        assert 0.4 <= sigma2 <= 0.8
        resid = x[:, 1] - meta["f"][1]
        se = sigma2 * np.sqrt(2.0 / (len(resid) - 1))
        assert abs(resid.var() - sigma2) < 3 * se

    def test_noise_factor_zero(self):
        g = chain(2)
        x, meta = _gen_gauss_anm(g, 200, np.random.default_rng(2), noise_factor=0.0)
        assert np.array_equal(x[:, 1], meta["f"][1])


class TestLin:
    def test_metadata_records_weights(self):
        g = chain(2)
        _, meta = _gen_lin(g, 50, np.random.default_rng(0))
        w = meta["weights"][1]
        assert w.shape == (1,) and 0.0 <= w[0] <= 1.0
        assert 1.0 <= meta["sigma2"][1] <= 2.0

    def test_noiseless_is_exact_linear(self):
        g = chain(2)
        x, meta = _gen_lin(g, 300, np.random.default_rng(1), noise_factor=0.0)
        assert np.allclose(x[:, 1], meta["weights"][1][0] * x[:, 0])

    def test_ols_recovers_weight(self):
        g = chain(2)
        n = 100_000
        x, meta = _gen_lin(g, n, np.random.default_rng(2))
        w = meta["weights"][1][0]
        x1 = x[:, 0]
        slope = (x1 @ x[:, 1]) / (x1 @ x1)
        noise_sd = 0.2 * np.sqrt(meta["sigma2"][1])
        se = noise_sd / np.sqrt(x1 @ x1)
        assert abs(slope - w) < 3 * se

    def test_roots_uniform_range(self):
        x = gen_lin(EMPTY3, 5000, np.random.default_rng(3))
        assert x.min() >= -1.0 and x.max() <= 1.0


class TestAddFunc:
    def test_no_edge_roots(self):
        x = gen_add_func(EMPTY3, 2000, np.random.default_rng(0))
        assert x.min() >= -1.0 and x.max() <= 1.0

    def test_residual_variance(self):
        g = chain(2)
        x, meta = _gen_add_func(g, 3000, np.random.default_rng(1))
        sigma2 = meta["sigma2"][1]
        assert 1.0 <= sigma2 <= 2.0
        resid = x[:, 1] - meta["f"][1]
        target = 0.04 * sigma2  # (0.2 sigma)^2
        se = target * np.sqrt(2.0 / (len(resid) - 1))
        assert abs(resid.var() - target) < 3 * se

    def test_additive_over_parents(self):
        # two-parent node: f is the recorded sum and the residual is noise only
        adj = np.zeros((3, 3), dtype=np.int8)
        adj[0, 2] = adj[1, 2] = 1
        g = Dag(adj)
        x, meta = _gen_add_func(g, 500, np.random.default_rng(2), noise_factor=0.0)
        assert np.allclose(x[:, 2], meta["f"][2])


class TestPnlGp:
    def test_nonroot_in_unit_interval(self):
        g = chain(3)
        x = gen_pnl_gp(g, 1000, np.random.default_rng(0))
        for j in (1, 2):
            assert (x[:, j] > 0.0).all() and (x[:, j] < 1.0).all()

    def test_laplace_median_absolute(self):
        g = chain(2)
        _, meta = _gen_pnl_gp(g, 4000, np.random.default_rng(1))
        scale = meta["laplace_scale"][1]
        noise = meta["noise"][1]
        med = np.median(np.abs(noise))
        # |Laplace(0, l)| is exponential with median l ln 2; SE of the sample
        # median is about l / sqrt(n)
        se = scale / np.sqrt(len(noise))
        assert abs(med - scale * np.log(2.0)) < 3 * se

    def test_no_edge_roots_only(self):
        x = gen_pnl_gp(EMPTY3, 500, np.random.default_rng(2))
        assert x.min() >= -1.0 and x.max() <= 1.0


class TestPnlMult:
    def test_nonroot_at_least_parent_sum(self):
        g = chain(3)
        x, _ = _gen_pnl_mult(g, 500, np.random.default_rng(0))
        assert (x[:, 1] >= x[:, 0] - 1e-12).all()

    def test_roots_in_range(self):
        x = gen_pnl_mult(EMPTY3, 2000, np.random.default_rng(1))
        assert x.min() >= 0.0 and x.max() <= 2.0

    def test_noise_factor_zero_exact_sum(self):
        adj = np.zeros((3, 3), dtype=np.int8)
        adj[0, 2] = adj[1, 2] = 1
        g = Dag(adj)
        x, _ = _gen_pnl_mult(g, 300, np.random.default_rng(2), noise_factor=0.0)
        assert np.allclose(x[:, 2], x[:, 0] + x[:, 1])

    def test_clamp_count_recorded(self):
        _, meta = _gen_pnl_mult(chain(2), 100, np.random.default_rng(3))
        assert meta["clamp_count"] == 0  # positive roots, no clamping


class TestGenerate:
    def test_all_schemes_dispatch(self):
        g = chain(3)
        for scheme in SCHEMES:
            x, meta = generate(scheme, g, 50, np.random.default_rng(0))
            assert x.shape == (50, 3)
            assert meta["scheme"] == scheme

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="unknown scheme"):
            generate("bogus", chain(2), 10, np.random.default_rng(0))

    def test_bad_n(self):
        with pytest.raises(ValueError):
            generate("lin", chain(2), 0, np.random.default_rng(0))

    @pytest.mark.parametrize("scheme", sorted(SCHEMES))
    def test_determinism(self, scheme):
        g = chain(3)
        a, _ = generate(scheme, g, 100, np.random.default_rng(7))
        b, _ = generate(scheme, g, 100, np.random.default_rng(7))
        assert np.array_equal(a, b)


class TestSplitAndStandardize:
    def test_split_sizes(self):
        x = np.random.default_rng(0).normal(size=(1000, 4))
        ds = split_and_standardize(x, rng=np.random.default_rng(1))
        assert len(ds.train_idx) == 800 and len(ds.heldout_idx) == 200

    def test_disjoint_cover(self):
        x = np.random.default_rng(0).normal(size=(103, 3))
        ds = split_and_standardize(x, rng=np.random.default_rng(2))
        both = np.concatenate([ds.train_idx, ds.heldout_idx])
        assert sorted(both) == list(range(103))

    def test_train_columns_standardized(self):
        x = np.random.default_rng(3).normal(5.0, 2.0, size=(500, 3))
        ds = split_and_standardize(x, rng=np.random.default_rng(4))
        assert np.allclose(ds.x_train.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(ds.x_train.std(axis=0), 1.0, atol=1e-12)

    def test_statistics_from_train_rows_only(self):
        x = np.random.default_rng(5).normal(size=(200, 2))
        ds = split_and_standardize(x, rng=np.random.default_rng(6))
        raw_train = x[ds.train_idx]
        assert np.allclose(ds.mean, raw_train.mean(axis=0))
        assert np.allclose(ds.std, raw_train.std(axis=0))

    def test_standardize_off_identity(self):
        x = np.random.default_rng(7).normal(size=(50, 2))
        ds = split_and_standardize(x, standardize=False,
                                   rng=np.random.default_rng(8))
        assert np.array_equal(ds.x, x)
        assert ds.mean is None and ds.std is None

    def test_constant_column_error_names_column(self):
        x = np.random.default_rng(9).normal(size=(50, 3))
        x[:, 1] = 4.2
        with pytest.raises(ValueError, match=r"\[1\]"):
            split_and_standardize(x, rng=np.random.default_rng(10))

    def test_bad_fraction(self):
        x = np.zeros((10, 2))
        with pytest.raises(ValueError):
            split_and_standardize(x, train_fraction=1.0)

    def test_seeded_split_deterministic(self):
        x = np.random.default_rng(11).normal(size=(60, 2))
        a = split_and_standardize(x, rng=np.random.default_rng(12))
        b = split_and_standardize(x, rng=np.random.default_rng(12))
        assert np.array_equal(a.train_idx, b.train_idx)
