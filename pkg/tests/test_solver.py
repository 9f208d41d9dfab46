import io

import numpy as np
import pytest

from planedepth.energy import ProblemInstance, State, gradient, total_energy
from planedepth.geometry import InverseDepthMap
from planedepth.graph import GraphParams, GuideImage, build_graph
from planedepth.solver import (PRESETS, AdamConfig, EmptyConfidence,
                               NonFiniteEnergy, PyramidConfig, adam_minimize,
                               downsample, refine, upsample_and_scale,
                               write_trace_csv)
from planedepth.synthetic import generate_synthetic, two_plane_scene
from oracles import random_instance


def small_instance(seed, lam=None, h=8, w=8):
    return random_instance(seed, h=h, w=w, lam=lam)


class TestAdamMinimize:
    def test_lambda_zero_converges_to_input(self):
        rng = np.random.default_rng(0)
        guide = GuideImage(rng.uniform(0, 1, (8, 8, 3)))
        graph = build_graph(guide, GraphParams(window=5, k=6))
        d_bar = rng.uniform(0.2, 0.8, (8, 8))
        prob = ProblemInstance(d_bar, np.ones((8, 8)), graph, lam=0.0, alpha=1.0)
        init = State(d_bar + rng.uniform(-0.2, 0.2, (8, 8)), np.zeros((8, 8, 2)))
        best, trace = adam_minimize(prob, init, AdamConfig())
        assert np.abs(best.d - d_bar).max() < 1e-3

    def test_stationary_at_planar_ground_truth(self):
        # dyadic plane: every residual is exactly zero, so the gradient is
        # exactly zero and the iterates never move
        ys, xs = np.mgrid[0:8, 0:8].astype(float)
        d = 0.25 + 0.125 * xs - 0.0625 * ys
        u = np.zeros((8, 8, 2))
        u[..., 0], u[..., 1] = 0.125, -0.0625
        graph = build_graph(GuideImage(np.full((8, 8), 0.5)),
                            GraphParams(window=5, k=6))
        prob = ProblemInstance(d, np.ones((8, 8)), graph, lam=2.0, alpha=1.0)
        init = State(d, u)
        best, trace = adam_minimize(prob, init, AdamConfig(iters_per_scale=200))
        assert np.abs(best.d - d).max() <= 1e-6
        assert np.abs(best.u - u).max() <= 1e-6

    def test_best_never_worse_than_initial(self):
        cfg = AdamConfig(iters_per_scale=60)
        for seed in range(20):
            prob, state = small_instance(seed, h=16, w=16)
            best, trace = adam_minimize(prob, state, cfg)
            assert trace.min() <= trace[0]
            assert total_energy(best, prob) == trace.min()

    def test_trace_has_initial_energy(self):
        prob, state = small_instance(3)
        best, trace = adam_minimize(prob, state, AdamConfig(iters_per_scale=10))
        assert trace[0] == total_energy(state, prob)
        assert len(trace) == 11

    def test_nonfinite_energy_raises(self):
        prob, state = small_instance(4)
        huge = State(state.d + 1e200, state.u)
        with pytest.raises(NonFiniteEnergy):
            adam_minimize(prob, huge, AdamConfig(iters_per_scale=5))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdamConfig(step=0.0)
        with pytest.raises(ValueError):
            AdamConfig(beta1=1.0)
        with pytest.raises(ValueError):
            AdamConfig(step_decay=0.0)


class TestDownsample:
    def test_identity_factor_one(self):
        grid = np.arange(12.0).reshape(3, 4)
        out = downsample(grid, 1)
        assert np.array_equal(out, grid)
        assert out is not grid

    def test_ramp_samples_even_coordinates(self):
        grid = np.arange(16.0).reshape(4, 4)
        out = downsample(grid, 2)
        assert np.array_equal(out, [[0.0, 2.0], [8.0, 10.0]])

    def test_floor_division_shape(self):
        grid = np.zeros((7, 9))
        assert downsample(grid, 2).shape == (3, 4)

    def test_planar_slope_scales_by_factor(self):
        # least squares fit on the coarse grid is the oracle
        ys, xs = np.mgrid[0:12, 0:12].astype(float)
        sx, sy = 0.03, -0.05
        grid = 1.0 + sx * xs + sy * ys
        coarse = downsample(grid, 3)
        cy, cx = np.mgrid[0:4, 0:4].astype(float)
        a = np.stack([cx.ravel(), cy.ravel(), np.ones(16)], axis=1)
        coef, *_ = np.linalg.lstsq(a, coarse.ravel(), rcond=None)
        assert coef[0] == pytest.approx(3 * sx, abs=1e-12)
        assert coef[1] == pytest.approx(3 * sy, abs=1e-12)

    def test_three_channel(self):
        grid = np.arange(32.0).reshape(4, 4, 2)
        out = downsample(grid, 2)
        assert out.shape == (2, 2, 2)
        assert np.array_equal(out[0, 0], grid[0, 0])


class TestUpsampleAndScale:
    def test_slope_scaling_example(self):
        d = np.full((2, 2), 0.5)
        u = np.zeros((2, 2, 2))
        u[..., 0], u[..., 1] = 0.2, -0.4
        _, u_f = upsample_and_scale(d, u, 2)
        assert np.allclose(u_f[..., 0], 0.1)
        assert np.allclose(u_f[..., 1], -0.2)

    def test_identity_factor_one(self):
        d = np.random.default_rng(0).uniform(size=(3, 3))
        u = np.random.default_rng(1).uniform(size=(3, 3, 2))
        d_f, u_f = upsample_and_scale(d, u, 1)
        assert np.array_equal(d_f, d)
        assert np.array_equal(u_f, u)

    def test_block_replication(self):
        d = np.array([[1.0, 2.0], [3.0, 4.0]])
        d_f, _ = upsample_and_scale(d, np.zeros((2, 2, 2)), 3)
        assert d_f.shape == (6, 6)
        assert np.array_equal(d_f[0:3, 0:3], np.ones((3, 3)))
        assert np.array_equal(d_f[3:6, 3:6], np.full((3, 3), 4.0))

    @pytest.mark.parametrize("factor", [2, 3])
    def test_planar_pair_stays_planar_at_replicas(self, factor):
        # dyadic slopes that are exact multiples of the factor keep all the
        # arithmetic exact, so the check is to 0 ulp
        rng = np.random.default_rng(factor)
        for _ in range(50):
            ux = factor * rng.integers(-8, 9) / 256.0
            uy = factor * rng.integers(-8, 9) / 256.0
            d0 = rng.integers(1, 64) / 64.0
            ys, xs = np.mgrid[0:6, 0:7].astype(float)
            d = d0 + ux * xs + uy * ys
            u = np.stack([np.full((6, 7), ux), np.full((6, 7), uy)], axis=-1)
            d_f, u_f = upsample_and_scale(d, u, factor)
            for yc in range(6):
                for xc in range(7):
                    xf, yf = factor * xc, factor * yc
                    pred = (d_f[0, 0]
                            + u_f[yf, xf, 0] * xf + u_f[yf, xf, 1] * yf)
                    assert pred == d_f[yf, xf]


class TestPyramidConfig:
    def test_list_length_check(self):
        with pytest.raises(ValueError):
            PyramidConfig(2, 2, (1.0,), (1.0, 1.0))

    def test_factor_check(self):
        with pytest.raises(ValueError):
            PyramidConfig(2, 1, (1.0, 1.0), (1.0, 1.0))

    def test_presets_well_formed(self):
        for name, pyr in PRESETS.items():
            assert len(pyr.lambdas) == pyr.scales
            assert len(pyr.alphas) == pyr.scales


class TestRefine:
    def test_noiseless_planar_is_fixed_point(self):
        bundle = generate_synthetic(two_plane_scene(64, 64))
        res = refine(bundle.d_bar, bundle.confidence, bundle.guide,
                     adam=AdamConfig(iters_per_scale=600))
        assert np.abs(res.d.values - bundle.gt.values).max() < 1e-4

    def test_noisy_recovery(self):
        bundle = generate_synthetic(two_plane_scene(32, 32), noise=0.05,
                                    holes=0.3, seed=5)
        gt = bundle.gt.values
        err_in = (bundle.d_bar.values - gt)[bundle.d_bar.valid]
        rmse_in = np.sqrt(np.mean(err_in ** 2))
        res = refine(bundle.d_bar, bundle.confidence, bundle.guide)
        rmse_out = np.sqrt(np.mean((res.d.values - gt) ** 2))
        assert rmse_out <= 0.5 * rmse_in

    def test_single_scale_reduces_to_adam(self):
        bundle = generate_synthetic(two_plane_scene(16, 16), noise=0.05,
                                    seed=2)
        pyr = PyramidConfig(1, 2, (7.5,), (7.5,))
        cfg = AdamConfig(iters_per_scale=80)
        res = refine(bundle.d_bar, bundle.confidence, bundle.guide,
                     pyramid=pyr, adam=cfg)

        # replicate the internal normalization and single solve
        dbar, valid = bundle.d_bar.values, bundle.d_bar.valid
        vals = dbar[valid]
        dmin, span = vals.min(), vals.max() - vals.min()
        dn = np.where(valid, (dbar - dmin) / span, 0.0)
        graph = build_graph(bundle.guide, GraphParams())
        prob = ProblemInstance(dn, np.where(valid, bundle.confidence, 0.0),
                               graph, lam=7.5, alpha=7.5)
        fill = np.median(dn[valid])
        init = State(np.where(valid, dn, fill), np.zeros(dn.shape + (2,)))
        best, trace = adam_minimize(prob, init, cfg)
        assert np.array_equal(res.d.values, best.d * span + dmin)
        assert np.array_equal(res.u, best.u * span)
        assert np.array_equal(res.traces[0], trace)

    def test_determinism(self):
        bundle = generate_synthetic(two_plane_scene(24, 24), noise=0.05,
                                    holes=0.2, seed=9)
        cfg = AdamConfig(iters_per_scale=60)
        pyr = PyramidConfig(2, 2, (7.5, 7.5), (7.5, 7.5))
        r1 = refine(bundle.d_bar, bundle.confidence, bundle.guide,
                    pyramid=pyr, adam=cfg)
        r2 = refine(bundle.d_bar, bundle.confidence, bundle.guide,
                    pyramid=pyr, adam=cfg)
        assert np.array_equal(r1.d.values, r2.d.values)
        assert np.array_equal(r1.u, r2.u)

    def test_final_energy_not_worse_than_naive_init(self):
        for seed in range(5):
            bundle = generate_synthetic(two_plane_scene(16, 16), noise=0.1,
                                        holes=0.3, seed=seed)
            cfg = AdamConfig(iters_per_scale=120)
            pyr = PyramidConfig(2, 2, (7.5, 7.5), (7.5, 7.5))
            res = refine(bundle.d_bar, bundle.confidence, bundle.guide,
                         pyramid=pyr, adam=cfg)

            dbar, valid = bundle.d_bar.values, bundle.d_bar.valid
            vals = dbar[valid]
            dmin, span = vals.min(), vals.max() - vals.min()
            dn = np.where(valid, (dbar - dmin) / span, 0.0)
            graph = build_graph(bundle.guide, GraphParams())
            prob = ProblemInstance(dn, np.where(valid, bundle.confidence, 0.0),
                                   graph, lam=7.5, alpha=7.5)
            fill = np.median(dn[valid])
            naive = State(np.where(valid, dn, fill), np.zeros(dn.shape + (2,)))
            final = State((res.d.values - dmin) / span, res.u / span)
            assert total_energy(final, prob) <= total_energy(naive, prob)

    def test_coarse_solution_transfers_to_fine_scale(self):
        # constant-depth scene: the upsampled coarse solution is already a
        # stationary point of the fine-scale energy
        h = w = 16
        d = np.full((h, w), 0.4375)
        dmap = InverseDepthMap(d)
        guide = GuideImage(np.full((h, w), 0.5))
        graph_c = build_graph(GuideImage(np.full((h // 2, w // 2), 0.5)),
                              GraphParams(window=5, k=6))
        prob_c = ProblemInstance(downsample(d, 2), np.ones((h // 2, w // 2)),
                                 graph_c, lam=7.5, alpha=7.5)
        coarse = adam_minimize(prob_c, State(downsample(d, 2),
                                             np.zeros((h // 2, w // 2, 2))),
                               AdamConfig(iters_per_scale=100))[0]
        d_f, u_f = upsample_and_scale(coarse.d, coarse.u, 2)
        graph_f = build_graph(guide, GraphParams(window=5, k=6))
        prob_f = ProblemInstance(d, np.ones((h, w)), graph_f, lam=7.5, alpha=7.5)
        gd, gu = gradient(State(d_f, u_f), prob_f)
        assert np.sqrt(np.sum(gd ** 2) + np.sum(gu ** 2)) <= 1e-6

    def test_empty_confidence_with_zero_lambda(self):
        bundle = generate_synthetic(two_plane_scene(8, 8))
        pyr = PyramidConfig(1, 2, (0.0,), (1.0,))
        with pytest.raises(EmptyConfidence):
            refine(bundle.d_bar, np.zeros((8, 8)), bundle.guide, pyramid=pyr,
                   adam=AdamConfig(iters_per_scale=5))

    def test_shape_mismatch(self):
        bundle = generate_synthetic(two_plane_scene(8, 8))
        with pytest.raises(ValueError):
            refine(bundle.d_bar, np.ones((4, 4)), bundle.guide)


class TestTraceCsv:
    def test_format(self):
        buf = io.StringIO()
        write_trace_csv([np.array([3.0, 2.0]), np.array([1.5])], [1, 0], buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "iteration,scale,energy"
        assert lines[1] == "0,1,3.0"
        assert lines[2] == "1,1,2.0"
        assert lines[3] == "0,0,1.5"
