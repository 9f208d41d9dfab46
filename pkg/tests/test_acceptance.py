"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as the
criteria execute.
"""

import time

import numpy as np
import pytest

import planedepth as pd
from planedepth.energy import (MIXED_L12, NLTGV, ProblemInstance, State,
                               data_term, nltgv_energy,
                               normal_smoothness_term, planar_term)
from planedepth.geometry import (image_param_from_plane, normal_from_u,
                                 plane_inverse_depth,
                                 scene_plane_inverse_depth, u_from_normal)
from planedepth.graph import GraphParams, GuideImage, build_graph
from planedepth.metrics import evaluate
from planedepth.solver import AdamConfig, adam_minimize, upsample_and_scale
from planedepth.synthetic import generate_synthetic, two_plane_scene
from oracles import (naive_data_term, naive_metrics, naive_nltgv,
                     naive_planar_term, naive_smoothness_term, naive_weight,
                     random_instance)
from test_energy import check_gradient_fd
from test_geometry import angle_between, random_cam, random_plane


def _report(num, desc, ok):
    print(f"\ncriterion {num} ({desc}): {'PASS' if ok else 'FAIL'}")
    return ok


def test_criterion_1_geometry_round_trip():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    cases = set()
    for trial in range(10_000):
        case = trial % 4
        plane = random_plane(rng, zero_a=case in (2, 3), zero_b=case in (1, 3))
        cam = random_cam(rng)
        param = image_param_from_plane(plane, cam)
        cases.add((param.u[0] != 0.0, param.u[1] != 0.0))
        back = normal_from_u(param.u, param.d0, param.anchor, cam)
        worst = max(worst, angle_between(plane.normal, back))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and len(cases) == 4 and elapsed < 2.0
    assert _report(1, "geometry round trip", ok), \
        f"worst={worst:.3e} rad, cases={len(cases)}, {elapsed:.2f}s"


def test_criterion_2_parameterization_equivalence():
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    checked = 0
    worst = 0.0
    while checked < 10_000:
        plane = random_plane(rng)
        cam = random_cam(rng)
        x, y = rng.uniform(-100, 500, size=2)
        a, b, c = plane.normal
        bracket = a * (x - cam.cx) / cam.fx + b * (y - cam.cy) / cam.fy + c
        if abs(bracket) < 1e-15:
            continue
        d_scene = scene_plane_inverse_depth(plane, cam, x, y)
        if abs(d_scene) < 1e-3:
            continue  # relative agreement is ill-posed at the horizon
        param = image_param_from_plane(plane, cam)
        d_image = plane_inverse_depth(param, x, y)
        worst = max(worst, abs(d_image - d_scene) / abs(d_scene))
        checked += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 2.0
    assert _report(2, "plane parameterization equivalence", ok), \
        f"worst rel={worst:.3e}, {elapsed:.2f}s"


def test_criterion_3_gradient_correctness():
    start = time.perf_counter()
    ok = True
    for variant in (MIXED_L12, NLTGV):
        for seed in range(10):
            prob, state = random_instance(seed + 300, h=12, w=12,
                                          regularizer=variant)
            check_gradient_fd(prob, state, step=1e-6, tol=1e-4)
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 30.0
    assert _report(3, "analytic gradient vs finite differences", ok), \
        f"{elapsed:.2f}s"


def test_criterion_4_u_scaling_law():
    rng = np.random.default_rng(104)
    ok = True
    for factor in (2, 3):
        for _ in range(200):
            # dyadic multiples of the factor keep every product exact
            ux = factor * rng.integers(-16, 17) / 512.0
            uy = factor * rng.integers(-16, 17) / 512.0
            d0 = rng.integers(1, 128) / 128.0
            h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
            ys, xs = np.mgrid[0:h, 0:w].astype(float)
            d = d0 + ux * xs + uy * ys
            u = np.stack([np.full((h, w), ux), np.full((h, w), uy)], axis=-1)
            d_f, u_f = upsample_and_scale(d, u, factor)
            for yc in range(h):
                for xc in range(w):
                    xf, yf = factor * xc, factor * yc
                    pred = (d_f[0, 0] + u_f[yf, xf, 0] * xf
                            + u_f[yf, xf, 1] * yf)
                    if pred != d_f[yf, xf]:
                        ok = False
    assert _report(4, "slope scaling law across scales", ok)


def test_criterion_5_synthetic_recovery():
    bundle = generate_synthetic(two_plane_scene(64, 64), noise=0.05,
                                holes=0.30, seed=7)
    gt = bundle.gt.values
    err_in = (bundle.d_bar.values - gt)[bundle.d_bar.valid]
    rmse_in = float(np.sqrt(np.mean(err_in ** 2)))
    start = time.perf_counter()
    res = pd.refine(bundle.d_bar, bundle.confidence, bundle.guide)
    elapsed = time.perf_counter() - start
    rmse_out = float(np.sqrt(np.mean((res.d.values - gt) ** 2)))
    normals = pd.normals_from_slopes(res.d.values, res.u, bundle.cam)
    chord = np.linalg.norm(normals - bundle.gt_normals, axis=-1)
    ang = np.degrees(2 * np.arcsin(np.clip(chord / 2, 0, 1)))
    median_deg = float(np.median(ang))
    ok = rmse_out <= 0.2 * rmse_in and median_deg < 5.0 and elapsed < 60.0
    assert _report(5, "synthetic two-plane recovery", ok), \
        (f"rmse {rmse_out:.5f} vs 0.2x input {0.2 * rmse_in:.5f}, "
         f"median normal {median_deg:.2f} deg, {elapsed:.1f}s")


def test_criterion_6_energy_decrease():
    cfg = AdamConfig(iters_per_scale=60)
    wins = 0
    for seed in range(100):
        prob, state = random_instance(seed + 600, h=16, w=16)
        _, trace = adam_minimize(prob, state, cfg)
        if trace.min() <= trace[0]:
            wins += 1
    ok = wins == 100
    assert _report(6, "best-iterate energy decrease 100/100", ok), f"{wins}/100"


def test_criterion_7_oracle_equivalence():
    ok = True
    # energy terms vs naive double loops
    for seed in range(3):
        prob, state = random_instance(seed + 700, h=16, w=16)
        pairs = [
            (data_term(state, prob), naive_data_term(state, prob)),
            (planar_term(state, prob), naive_planar_term(state, prob)),
            (normal_smoothness_term(state, prob),
             naive_smoothness_term(state, prob)),
            (nltgv_energy(state, prob), naive_nltgv(state, prob)),
        ]
        for got, ref in pairs:
            if abs(got - ref) > 1e-12 * max(1.0, abs(ref)):
                ok = False

    # edge weights: exact equality against the scalar formula
    rng = np.random.default_rng(701)
    guide = GuideImage(rng.uniform(0, 1, size=(16, 16, 3)))
    params = GraphParams(window=5, k=8)
    graph = build_graph(guide, params)
    for node in range(graph.num_nodes):
        x, y = node % 16, node // 16
        for s in range(int(graph.degree[node])):
            j = int(graph.targets[node, s])
            ref = naive_weight(guide.values, (x, y), (j % 16, j // 16), params)
            if float(graph.weights[node, s]) != ref:
                ok = False

    # metrics: exact equality against a scalar loop
    gt = rng.uniform(0, 20, (16, 16))
    pred = gt + rng.normal(0, 2, (16, 16))
    valid = rng.uniform(size=(16, 16)) > 0.25
    rep = evaluate(pred, np.where(valid, gt, np.nan), [0.5, 1, 2])
    bad, avgerr, rms, count = naive_metrics(pred, gt, valid, [0.5, 1, 2])
    if not (rep.avgerr == avgerr and rep.rms == rms and rep.count == count
            and all(rep.bad[t] == bad[t] for t in bad)):
        ok = False

    assert _report(7, "oracle equivalence (energy, weights, metrics)", ok)


def test_criterion_8_nltgv_contrast():
    bundle = generate_synthetic(two_plane_scene(64, 64), noise=0.05,
                                holes=0.30, outliers=0.05, seed=7)
    gt = bundle.gt.values
    rmse = {}
    for reg in (MIXED_L12, NLTGV):
        res = pd.refine(bundle.d_bar, bundle.confidence, bundle.guide,
                        regularizer=reg)
        rmse[reg] = float(np.sqrt(np.mean((res.d.values - gt) ** 2)))
    ok = rmse[MIXED_L12] <= rmse[NLTGV]
    assert _report(8, "group-l2 regularizer no worse than l1 on outliers", ok), \
        f"mixed {rmse[MIXED_L12]:.5f} vs nltgv {rmse[NLTGV]:.5f}"


def test_criterion_9_pfm_and_metric_report(tmp_path):
    rng = np.random.default_rng(109)
    ok = True
    grid = rng.normal(size=(11, 13)).astype(np.float32).astype(np.float64)
    pd_path = tmp_path / "grid.pfm"
    from planedepth.fileio import read_pfm, write_pfm
    write_pfm(grid, pd_path)
    back, valid = read_pfm(pd_path)
    if not (np.array_equal(back, grid) and valid.all()):
        ok = False

    umap = rng.normal(size=(5, 4, 3)).astype(np.float32).astype(np.float64)
    write_pfm(umap, tmp_path / "u.pfm")
    back3, _ = read_pfm(tmp_path / "u.pfm")
    if not np.array_equal(back3, umap):
        ok = False

    rep = evaluate(np.array([[1.0, -1.0], [3.0, 5.0]]), np.zeros((2, 2)), [2.0])
    if not (rep.bad[2.0] == 50.0 and rep.avgerr == 2.5 and rep.rms == 3.0):
        ok = False
    assert _report(9, "PFM round trip and frozen metric report", ok)
