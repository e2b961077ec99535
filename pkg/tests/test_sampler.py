"""Chain driver, generative sampling, and prediction."""

import time

import numpy as np
import numpy.testing as npt
import pytest

from gfabic.model import (
    ConfigurationError,
    DataCollection,
    HyperParams,
    ModelVariant,
    ViewData,
    check_state,
    log_joint,
)
from gfabic.sampler import (
    ChainConfig,
    DataDims,
    ancestral_sample,
    chain_rng,
    draw_data,
    gibbs_sweep,
    posterior_mean_reconstruction,
    predict_missing,
    reconstruct_views,
    run_chain,
)


def small_collection(seed=0, n=12, dims=(6, 5), missing_in=None):
    rng = np.random.default_rng(seed)
    views = []
    for i, d in enumerate(dims):
        values = rng.standard_normal((n, d))
        missing = None
        if missing_in is not None and i in missing_in:
            missing = rng.random((n, d)) < 0.2
        views.append(ViewData(f"view{i + 1}", values, missing))
    return DataCollection(mode1=views)


class TestChainConfig:
    def test_total_sweeps(self):
        cfg = ChainConfig(k=2, burn_in=2000, thinning=20, n_samples=101)
        assert cfg.total_sweeps == 2000 + 20 * 101

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            ChainConfig(k=0)
        with pytest.raises(ConfigurationError):
            ChainConfig(k=2, thinning=0)
        with pytest.raises(ConfigurationError):
            ChainConfig(k=(2, 0))
        with pytest.raises(ConfigurationError):
            ChainConfig(k=2, n_samples=0)
        with pytest.raises(ConfigurationError):
            ChainConfig(k=2, burn_in=-1)

    def test_dict_round_trip(self):
        cfg = ChainConfig(k=(3, 2), burn_in=10, thinning=2, n_samples=4,
                          seed=9, variant=ModelVariant(two_mode=True),
                          hyper=HyperParams(a_tau=2.0), snr=1.5)
        assert ChainConfig.from_dict(cfg.to_dict()) == cfg


class TestGibbsSweep:
    def test_deterministic_given_seed(self):
        data = small_collection(seed=1)
        cfg = ChainConfig(k=2, burn_in=0, thinning=1, n_samples=1, seed=4)
        from gfabic.model import init_state
        a = init_state(data, 2, cfg.hyper, rng_seed=4)
        b = init_state(data, 2, cfg.hyper, rng_seed=4)
        gibbs_sweep(a, data, cfg, chain_rng(30))
        gibbs_sweep(b, data, cfg, chain_rng(30))
        npt.assert_array_equal(a.modes[0].X, b.modes[0].X)
        for va, vb in zip(a.modes[0].views, b.modes[0].views):
            npt.assert_array_equal(va.W, vb.W)
            npt.assert_array_equal(va.tau, vb.tau)

    def test_invariants_preserved_over_sweeps(self):
        hyper = HyperParams()
        cfg = ChainConfig(k=(2, 2), variant=ModelVariant(two_mode=True),
                          hyper=hyper)
        rng = chain_rng(8)
        state, data = ancestral_sample(DataDims(8, (5, 4), mode2_dims=(3,)),
                                       (2, 2), hyper, rng,
                                       ModelVariant(two_mode=True))
        for _ in range(5):
            gibbs_sweep(state, data, cfg, rng)
            check_state(state)
        assert np.isfinite(log_joint(state, data, hyper))

    def test_masked_cells_cannot_influence_the_chain(self):
        """Bitwise equality of sweeps run on differently poisoned masked
        cells; the mask, not the stored value, decides what enters."""
        data = small_collection(seed=2, missing_in=(0,))
        v0 = data.mode1[0]
        poisoned = np.where(v0.missing, -4e6, v0.values)
        data_b = DataCollection(mode1=[
            ViewData("view1", poisoned, v0.missing.copy()), data.mode1[1]])

        from gfabic.model import init_state
        cfg = ChainConfig(k=2, seed=11)
        a = init_state(data, 2, cfg.hyper, rng_seed=11)
        b = init_state(data_b, 2, cfg.hyper, rng_seed=11)
        ra, rb = chain_rng(99), chain_rng(99)
        for _ in range(3):
            gibbs_sweep(a, data, cfg, ra)
            gibbs_sweep(b, data_b, cfg, rb)
        npt.assert_array_equal(a.modes[0].X, b.modes[0].X)
        npt.assert_array_equal(a.modes[0].views[0].W, b.modes[0].views[0].W)
        npt.assert_array_equal(a.modes[0].views[0].tau, b.modes[0].views[0].tau)

    def test_sweep_cost_scales_linearly_in_samples(self):
        """Median sweep time stays within a factor two of linear growth as
        the sample count quadruples twice."""
        sizes = (50, 100, 200, 400)
        medians = []
        for n in sizes:
            data = small_collection(seed=3, n=n, dims=(30, 20))
            cfg = ChainConfig(k=3, seed=1)
            from gfabic.model import init_state
            state = init_state(data, 3, cfg.hyper, rng_seed=1)
            from gfabic.updates import prepare
            prep = prepare(data, state.variant)
            rng = chain_rng(5)
            gibbs_sweep(state, prep, cfg, rng)
            times = []
            for _ in range(20):
                t0 = time.perf_counter()
                gibbs_sweep(state, prep, cfg, rng)
                times.append(time.perf_counter() - t0)
            medians.append(float(np.median(times)))
        base = medians[0]
        for n, med in zip(sizes[1:], medians[1:]):
            assert med <= 2.0 * base * (n / 50), (
                f"sweep at N={n} took {med:.6f}s, more than twice linear "
                f"scaling from N=50 ({base:.6f}s)")


class TestRunChain:
    def test_snapshot_count_and_reproducibility(self):
        data = small_collection(seed=4, n=10, dims=(5, 4))
        cfg = ChainConfig(k=2, burn_in=6, thinning=2, n_samples=5, seed=21)
        store = run_chain(data, cfg)
        assert store.n_snapshots == 5
        assert store.chain_id == "chain_21"
        assert store.config == cfg
        again = run_chain(data, cfg)
        for s1, s2 in zip(store.snapshots, again.snapshots):
            npt.assert_array_equal(s1.modes[0].X, s2.modes[0].X)
            npt.assert_array_equal(s1.modes[0].views[1].W,
                                   s2.modes[0].views[1].W)

    def test_snapshots_are_independent_copies(self):
        data = small_collection(seed=5, n=8, dims=(4,))
        cfg = ChainConfig(k=2, burn_in=2, thinning=1, n_samples=3, seed=1)
        store = run_chain(data, cfg)
        assert not np.array_equal(store.snapshots[0].modes[0].X,
                                  store.snapshots[2].modes[0].X)
        store.snapshots[0].modes[0].X[:] = 0.0
        assert not np.array_equal(store.snapshots[0].modes[0].X,
                                  store.snapshots[1].modes[0].X)

    def test_nan_at_masked_cells_is_harmless(self):
        data = small_collection(seed=6, missing_in=(0, 1))
        for v in data.mode1:
            v.values[v.missing] = np.nan
        cfg = ChainConfig(k=2, burn_in=4, thinning=1, n_samples=3, seed=2)
        store = run_chain(data, cfg)
        for st in store.snapshots:
            st.check_finite()

    def test_two_mode_chain_runs_and_keeps_alias_tau_none(self):
        hyper = HyperParams()
        rng = chain_rng(12)
        _, data = ancestral_sample(DataDims(9, (5, 3), mode2_dims=(4,)),
                                   (2, 2), hyper, rng,
                                   ModelVariant(two_mode=True))
        cfg = ChainConfig(k=(2, 2), burn_in=3, thinning=1, n_samples=2,
                          seed=3, variant=ModelVariant(two_mode=True))
        store = run_chain(data, cfg)
        for st in store.snapshots:
            assert st.modes[1].views[0].tau is None
            check_state(st)


class TestAncestralSample:
    def test_moments_match_the_generative_model(self):
        """Inclusion rates follow Beta(a,b) means and active factor values
        have second moment b/(a-1); checked within four standard errors."""
        hyper = HyperParams(a_alpha=3.0, b_alpha=3.0, a_tau=3.0, b_tau=3.0)
        rng = chain_rng(71)
        dims = DataDims(6, (5,))
        inc = []
        sq = []
        for _ in range(3000):
            state, _ = ancestral_sample(dims, 2, hyper, rng)
            mb = state.modes[0]
            inc.append(mb.Hx.mean())
            active = mb.X[mb.Hx == 1]
            if active.size:
                sq.append((active ** 2).mean())
        inc = np.array(inc)
        se = inc.std(ddof=1) / np.sqrt(len(inc))
        assert abs(inc.mean() - 0.5) < 4 * se

        sq = np.array(sq)
        se = sq.std(ddof=1) / np.sqrt(len(sq))
        expected = 3.0 / (3.0 - 1.0)
        assert abs(sq.mean() - expected) < 4 * se

    def test_noise_variance_matches_tau(self):
        hyper = HyperParams(a_tau=3.0, b_tau=3.0)
        rng = chain_rng(73)
        dims = DataDims(200, (50,))
        state, data = ancestral_sample(dims, 1, hyper, rng)
        resid = data.mode1[0].values - state.modes[0].X @ state.modes[0].views[0].W.T
        var = resid.var()
        npt.assert_allclose(var, 1.0 / state.modes[0].views[0].tau[0],
                            rtol=0.05)

    def test_draw_data_consumes_fixed_stream_length(self):
        """Data draws must consume the same number of random values whatever
        the state, so parallel streams stay aligned."""
        hyper = HyperParams()
        dims = DataDims(5, (4, 3))
        state, _ = ancestral_sample(dims, 2, hyper, chain_rng(74))
        dense = state.copy()
        sparse = state.copy()
        for mb in [sparse.modes[0]]:
            mb.X[:] = 0.0
            mb.Hx[:] = 0
        r1, r2 = chain_rng(75), chain_rng(75)
        draw_data(dense, dims, r1)
        draw_data(sparse, dims, r2)
        a = r1.standard_normal(4)
        b = r2.standard_normal(4)
        npt.assert_array_equal(a, b)

    def test_two_mode_data_shapes_and_names(self):
        hyper = HyperParams()
        dims = DataDims(7, (5, 4), mode2_dims=(3, 2))
        state, data = ancestral_sample(dims, (2, 2), hyper, chain_rng(76),
                                       ModelVariant(two_mode=True))
        assert [v.name for v in data.mode1] == ["view1", "view2"]
        assert [v.name for v in data.mode2] == ["pair_view1", "pair_view2"]
        assert data.mode2[0].values.shape == (5, 3)
        assert data.mode2[1].values.shape == (5, 2)


class TestReconstruction:
    def test_posterior_mean_is_average_of_snapshot_reconstructions(self):
        data = small_collection(seed=7, n=8, dims=(4, 3))
        cfg = ChainConfig(k=2, burn_in=3, thinning=1, n_samples=4, seed=6)
        store = run_chain(data, cfg)
        mean = posterior_mean_reconstruction(store)
        for name in ("view1", "view2"):
            stack = np.stack([reconstruct_views(s, store.layout)[name]
                              for s in store.snapshots])
            npt.assert_allclose(mean[name], stack.mean(axis=0), rtol=1e-12)

    def test_two_mode_paired_view_gets_cross_term(self):
        hyper = HyperParams()
        rng = chain_rng(13)
        state, data = ancestral_sample(DataDims(6, (4,), mode2_dims=(3,)),
                                       (2, 2), hyper, rng,
                                       ModelVariant(two_mode=True))
        from gfabic.model import CollectionLayout
        layout = CollectionLayout.from_data(data)
        recon = reconstruct_views(state, layout)
        m1, m2 = state.modes
        expected = m1.X @ m1.views[0].W.T + m2.views[0].W @ m2.X.T
        npt.assert_allclose(recon["view1"], expected, rtol=1e-12)
        npt.assert_allclose(recon["pair_view1"], m2.X @ m2.views[1].W.T,
                            rtol=1e-12)


class TestPredictMissing:
    def test_rank_one_missing_cells_recovered(self):
        """Strong rank-one data with a fifth of one view masked; posterior
        mean must sit close to the true products."""
        rng = np.random.default_rng(42)
        n, d = 40, 8
        x = rng.uniform(1.0, 2.0, n) * rng.choice([-1.0, 1.0], n)
        w = rng.uniform(1.0, 2.0, d)
        y = np.outer(x, w) + 1e-3 * rng.standard_normal((n, d))
        missing = rng.random((n, d)) < 0.2
        data = DataCollection(mode1=[ViewData("view1", y.copy(), missing)])
        cfg = ChainConfig(k=1, burn_in=200, thinning=2, n_samples=50, seed=0)
        store = run_chain(data, cfg)
        pred = predict_missing(store, data)["view1"]
        assert np.isnan(pred[~missing]).all()
        err = pred[missing] - np.outer(x, w)[missing]
        rmse = float(np.sqrt(np.mean(err ** 2)))
        assert rmse < 0.05, f"masked-cell RMSE {rmse:.4f}"

    def test_views_without_mask_return_all_nan(self):
        data = small_collection(seed=8, n=8, dims=(4, 3), missing_in=(1,))
        cfg = ChainConfig(k=2, burn_in=3, thinning=1, n_samples=2, seed=1)
        store = run_chain(data, cfg)
        pred = predict_missing(store, data)
        assert np.isnan(pred["view1"]).all()
        v2 = data.mode1[1]
        assert np.isfinite(pred["view2"][v2.missing]).all()
        assert np.isnan(pred["view2"][~v2.missing]).all()

    def test_layout_mismatch_rejected(self):
        data = small_collection(seed=9, n=8, dims=(4,))
        cfg = ChainConfig(k=2, burn_in=2, thinning=1, n_samples=2, seed=1)
        store = run_chain(data, cfg)
        other = small_collection(seed=9, n=8, dims=(5,))
        with pytest.raises(ConfigurationError):
            predict_missing(store, other)
