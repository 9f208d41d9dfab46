"""Command-line interface: refine | eval | synth | normals.

Exit codes: 0 success, 1 usage/config error, 2 file I/O or format error,
3 solver failure. Runs are reproducible: identical flags and seeds produce
identical output files.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import fileio, metrics, solver, synthetic
from .energy import MIXED_L12, NLTGV
from .fileio import (MalformedHeader, TruncatedPayload,
                     UnsupportedChannelCount)
from .geometry import (CameraIntrinsics, InverseDepthMap,
                       disparity_to_inverse_depth, inverse_depth_to_disparity,
                       normals_from_depth_gradient, normals_from_slopes)
from .graph import GraphParams, GuideImage, build_graph
from .solver import (DEFAULT_PRESET, PRESETS, AdamConfig, EmptyConfidence,
                     NonFiniteEnergy, PyramidConfig)


class _UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _float_list(text):
    try:
        return [float(tok) for tok in str(text).split(",") if tok != ""]
    except ValueError:
        raise _UsageError(f"expected a comma-separated float list, got {text!r}")


def _pick(args, config, key, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in config:
        return config[key]
    return default


def _load_config(path):
    if path is None:
        return {}
    with open(path) as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise _UsageError("config file must hold a JSON object")
    return cfg


def _intrinsics(args, config, required=False):
    vals = [_pick(args, config, k) for k in ("fx", "fy", "cx", "cy")]
    if all(v is None for v in vals):
        if required:
            raise _UsageError("this command needs --fx --fy --cx --cy")
        return None
    if any(v is None for v in vals):
        raise _UsageError("give all of --fx --fy --cx --cy or none")
    return CameraIntrinsics(*[float(v) for v in vals])


def _graph_params(args, config):
    return GraphParams(
        sigma_int=float(_pick(args, config, "sigma_int", 0.07)),
        sigma_spa=float(_pick(args, config, "sigma_spa", 3.0)),
        window=int(_pick(args, config, "window", 9)),
        patch=int(_pick(args, config, "patch", 3)),
        k=int(_pick(args, config, "k", 20)),
    )


def _adam_config(args, config):
    return AdamConfig(
        step=float(_pick(args, config, "step", 1e-3)),
        beta1=float(_pick(args, config, "beta1", 0.9)),
        beta2=float(_pick(args, config, "beta2", 0.999)),
        adam_eps=float(_pick(args, config, "adam_eps", 1e-8)),
        iters_per_scale=int(_pick(args, config, "iters", 400)),
        tol=float(_pick(args, config, "tol", 1e-7)),
    )


def _pyramid(args, config):
    preset = _pick(args, config, "preset")
    lambdas = _pick(args, config, "lambdas")
    alphas = _pick(args, config, "alphas")
    if preset is not None and (lambdas is not None or alphas is not None):
        raise _UsageError("give either --preset or explicit --lambdas/--alphas")
    if preset is not None:
        if preset not in PRESETS:
            raise _UsageError(
                f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        return PRESETS[preset]
    if lambdas is None and alphas is None:
        return PRESETS[DEFAULT_PRESET]
    if lambdas is None or alphas is None:
        raise _UsageError("--lambdas and --alphas must be given together")
    if isinstance(lambdas, str):
        lambdas = _float_list(lambdas)
    if isinstance(alphas, str):
        alphas = _float_list(alphas)
    if len(alphas) == 1 and len(lambdas) > 1:
        alphas = list(alphas) * len(lambdas)
    if len(lambdas) != len(alphas):
        raise _UsageError("--lambdas and --alphas must have the same length")
    factor = int(_pick(args, config, "factor", 2))
    return PyramidConfig(len(lambdas), factor, tuple(lambdas), tuple(alphas))


def _reciprocal(values, valid):
    # 1/x on valid positive entries, +inf elsewhere
    good = valid & (values > 0)
    return np.where(good, 1.0 / np.where(good, values, 1.0), np.inf), good


def _load_input_map(path, domain, cam, baseline):
    """Read the input map as an InverseDepthMap plus a function mapping a
    refined InverseDepthMap back to the input domain."""
    values, valid = fileio.read_pfm(path)
    if values.ndim != 2:
        raise _UsageError("input map must be a 1-channel PFM")
    if domain == "depth":
        d, good = _reciprocal(values, valid)
        return InverseDepthMap(d, good), lambda dm: _reciprocal(dm.values, dm.valid)
    if domain == "disparity" and baseline is not None:
        if cam is None:
            raise _UsageError("--baseline needs intrinsics for the focal length")
        dmap = disparity_to_inverse_depth(np.where(valid, values, -1.0),
                                          cam.fx, baseline)
        return dmap, lambda dm: inverse_depth_to_disparity(dm, cam.fx, baseline)
    # inverse depth, or uncalibrated disparity treated as inverse depth up to
    # a global scale the refinement is structurally invariant to
    good = valid & (values > 0)
    dmap = InverseDepthMap(np.where(good, values, np.inf), good)
    return dmap, lambda dm: (np.where(dm.valid, dm.values, np.inf), dm.valid)


def _load_confidence(path, shape):
    name = str(path).lower()
    if name.endswith(".pfm"):
        vals, valid = fileio.read_pfm(path)
        if vals.ndim != 2:
            raise _UsageError("confidence PFM must be 1-channel")
        conf = np.where(valid, vals, 0.0)
    else:
        conf = fileio.load_image(path)
        if conf.ndim != 2:
            raise _UsageError("confidence image must be grayscale")
    if conf.shape != shape:
        raise _UsageError("confidence dims do not match the input map")
    if conf.min() < 0 or conf.max() > 1:
        raise _UsageError("confidence values must lie in [0, 1]")
    return conf


def _cmd_refine(args):
    config = _load_config(args.config)
    input_path = _pick(args, config, "input")
    guide_path = _pick(args, config, "guide")
    out_path = _pick(args, config, "out")
    if input_path is None or guide_path is None or out_path is None:
        raise _UsageError("refine needs --input, --guide and --out")

    cam = _intrinsics(args, config)
    domain = _pick(args, config, "input_domain", "depth")
    if domain not in ("depth", "disparity", "inverse-depth"):
        raise _UsageError(f"bad input domain {domain!r}")
    baseline = _pick(args, config, "baseline")
    baseline = float(baseline) if baseline is not None else None
    if baseline is not None and domain != "disparity":
        raise _UsageError("--baseline only applies to --disparity inputs")

    dmap, to_output = _load_input_map(input_path, domain, cam, baseline)
    guide = GuideImage(fileio.load_image(guide_path))
    if guide.values.shape[:2] != dmap.values.shape:
        raise _UsageError("guide dims do not match the input map")
    conf_path = _pick(args, config, "conf")
    if conf_path is not None:
        conf = _load_confidence(conf_path, dmap.values.shape)
    else:
        conf = dmap.valid.astype(np.float64)

    gparams = _graph_params(args, config)
    pyramid = _pyramid(args, config)
    adam = _adam_config(args, config)
    eps = float(_pick(args, config, "eps", 1e-6))
    reg = _pick(args, config, "regularizer", MIXED_L12)
    if reg not in (MIXED_L12, NLTGV):
        raise _UsageError(f"regularizer must be {MIXED_L12} or {NLTGV}")
    threads = int(_pick(args, config, "threads", 0))
    if threads < 0:
        raise _UsageError("--threads must be >= 0")

    result = solver.refine(dmap, conf, guide, gparams, pyramid, adam,
                           eps=eps, regularizer=reg)

    for level, trace in zip(result.levels, result.traces):
        print(f"scale {level}: energy {trace[0]:.6g} -> {trace.min():.6g} "
              f"({len(trace) - 1} iterations)")

    out_values, out_valid = to_output(result.d)
    fileio.write_pfm(out_values, out_path, out_valid)
    print(f"wrote {out_path}")

    normals_out = _pick(args, config, "normals_out")
    if normals_out:
        h, w = result.u.shape[:2]
        umap = np.concatenate([result.u, np.zeros((h, w, 1))], axis=-1)
        fileio.write_pfm(umap, normals_out)
        print(f"wrote {normals_out}")
    normal_png = _pick(args, config, "normal_png")
    if normal_png:
        if cam is None:
            raise _UsageError("--normal-png needs --fx --fy --cx --cy")
        normals = normals_from_slopes(result.d.values, result.u, cam)
        fileio.write_png(fileio.colorize_normals(normals, result.d.valid),
                         normal_png)
        print(f"wrote {normal_png}")
    trace_path = _pick(args, config, "trace")
    if trace_path:
        with open(trace_path, "w") as f:
            solver.write_trace_csv(result.traces, result.levels, f)
        print(f"wrote {trace_path}")
    dump_graph = _pick(args, config, "dump_graph")
    if dump_graph:
        with open(dump_graph, "w") as f:
            build_graph(guide, gparams).dump_edges(f)
        print(f"wrote {dump_graph}")
    return 0


def _cmd_eval(args):
    pred, _ = fileio.read_pfm(args.pred)
    gt, gt_valid = fileio.read_pfm(args.gt)
    if pred.ndim != 2 or gt.ndim != 2:
        raise _UsageError("eval expects 1-channel PFM maps")
    thresholds = _float_list(args.bad)
    report = metrics.evaluate(pred, gt, thresholds, gt_valid)
    print(report.as_text())
    if args.csv:
        exists = os.path.exists(args.csv) and os.path.getsize(args.csv) > 0
        with open(args.csv, "a") as f:
            if not exists:
                f.write(report.csv_header() + "\n")
            f.write(report.csv_row() + "\n")
    return 0


def _cmd_synth(args):
    if args.scene not in synthetic.SCENES:
        raise _UsageError(
            f"unknown scene {args.scene!r}; choose from {sorted(synthetic.SCENES)}")
    scene = synthetic.SCENES[args.scene](args.size, args.size)
    bundle = synthetic.generate_synthetic(scene, noise=args.noise,
                                          holes=args.holes,
                                          outliers=args.outliers,
                                          seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {
        "gt": os.path.join(args.out_dir, "gt.pfm"),
        "gt_normals": os.path.join(args.out_dir, "gt_normals.pfm"),
        "guide": os.path.join(args.out_dir, "guide.png"),
        "input": os.path.join(args.out_dir, "input.pfm"),
        "conf": os.path.join(args.out_dir, "conf.pfm"),
    }
    fileio.write_pfm(bundle.gt.values, paths["gt"], bundle.gt.valid)
    fileio.write_pfm(bundle.gt_normals, paths["gt_normals"])
    fileio.write_png(np.floor(bundle.guide.values * 255.0 + 0.5).astype(np.uint8),
                     paths["guide"])
    fileio.write_pfm(bundle.d_bar.values, paths["input"], bundle.d_bar.valid)
    fileio.write_pfm(bundle.confidence, paths["conf"])
    cam = bundle.cam
    print(f"fx={cam.fx}\nfy={cam.fy}\ncx={cam.cx}\ncy={cam.cy}")
    for key, path in paths.items():
        print(f"{key}={path}")
    return 0


def _cmd_normals(args):
    cam = _intrinsics(args, {}, required=True)
    values, valid = fileio.read_pfm(args.input)
    if values.ndim != 2:
        raise _UsageError("input map must be a 1-channel PFM")
    if args.input_domain == "depth":
        d, good = _reciprocal(values, valid)
    else:
        good = valid & (values > 0)
        d = np.where(good, values, np.inf)
    dmap = InverseDepthMap(d, good)

    if args.u:
        uvals, uvalid = fileio.read_pfm(args.u)
        if uvals.ndim != 3:
            raise _UsageError("u map must be a 3-channel PFM")
        if uvals.shape[:2] != dmap.values.shape:
            raise _UsageError("u map dims do not match the input map")
        normals = normals_from_slopes(
            np.where(dmap.valid, dmap.values, np.nan), uvals[:, :, :2], cam)
        out_valid = dmap.valid & uvalid
    else:
        normals, out_valid = normals_from_depth_gradient(dmap, cam, args.sigma)

    if not args.out and not args.png:
        raise _UsageError("give --out and/or --png")
    if args.out:
        fileio.write_pfm(np.where(out_valid[..., None], normals, np.inf),
                         args.out)
        print(f"wrote {args.out}")
    if args.png:
        fileio.write_png(fileio.colorize_normals(normals, out_valid), args.png)
        print(f"wrote {args.png}")
    return 0


def build_parser():
    parser = _Parser(prog="planedepth",
                     description="Piecewise-planar refinement of depth, "
                                 "disparity and inverse depth maps with "
                                 "joint normal estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="refine a map and estimate slopes")
    p.add_argument("--input", help="input map (PFM)")
    p.add_argument("--guide", help="guide image (PNG/PPM/PGM)")
    p.add_argument("--conf", help="confidence map (PFM or PGM)")
    p.add_argument("--out", help="refined map output (PFM)")
    p.add_argument("--normals-out", dest="normals_out",
                   help="slope map output (3-channel PFM)")
    p.add_argument("--normal-png", dest="normal_png",
                   help="colorized unit-normal PNG")
    p.add_argument("--trace", help="energy trace CSV")
    p.add_argument("--dump-graph", dest="dump_graph",
                   help="finest-scale graph edge list (text)")
    p.add_argument("--config", help="JSON config; flags override its keys")
    p.add_argument("--preset", help=f"schedule preset {sorted(PRESETS)}")
    p.add_argument("--lambdas", help="per-scale lambda list, coarsest first")
    p.add_argument("--alphas", help="per-scale alpha list, coarsest first")
    p.add_argument("--factor", type=int, help="pyramid downsampling factor")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--depth", dest="input_domain", action="store_const",
                     const="depth", help="input holds depth Z (default)")
    grp.add_argument("--disparity", dest="input_domain", action="store_const",
                     const="disparity", help="input holds disparity")
    grp.add_argument("--inverse-depth", dest="input_domain",
                     action="store_const", const="inverse-depth",
                     help="input holds inverse depth 1/Z")
    p.add_argument("--baseline", type=float,
                   help="stereo baseline in meters (disparity mode)")
    for name in ("fx", "fy", "cx", "cy"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--sigma-int", dest="sigma_int", type=float)
    p.add_argument("--sigma-spa", dest="sigma_spa", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--adam-eps", dest="adam_eps", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--regularizer", choices=(MIXED_L12, NLTGV))
    p.add_argument("--threads", type=int,
                   help="worker threads (0 = auto); reductions stay "
                        "fixed-order either way")
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("eval", help="compare two maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--bad", default="1,2",
                   help="comma-separated bad-pixel thresholds")
    p.add_argument("--csv", help="append the report as a CSV row")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic bundle")
    p.add_argument("--scene", default="two-planes")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--holes", type=float, default=0.0)
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("normals", help="convert a depth/u pair to normals")
    p.add_argument("--input", required=True, help="map (PFM)")
    p.add_argument("--u", help="slope map (3-channel PFM); if omitted, "
                   "slopes come from the smoothed depth gradient")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--depth", dest="input_domain", action="store_const",
                     const="depth", help="input holds depth Z (default)")
    grp.add_argument("--inverse-depth", dest="input_domain",
                     action="store_const", const="inverse-depth",
                     help="input holds inverse depth 1/Z")
    for name in ("fx", "fy", "cx", "cy"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--sigma", type=float, default=0.2,
                   help="gradient kernel sigma (use ~5 for noisy maps)")
    p.add_argument("--out", help="unit-normal map output (3-channel PFM)")
    p.add_argument("--png", help="colorized normal PNG")
    p.set_defaults(func=_cmd_normals, input_domain="depth")

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"planedepth: error: {exc}", file=sys.stderr)
        return 1
    except (MalformedHeader, TruncatedPayload, UnsupportedChannelCount,
            OSError) as exc:
        print(f"planedepth: i/o error: {exc}", file=sys.stderr)
        return 2
    except (NonFiniteEnergy, EmptyConfidence) as exc:
        print(f"planedepth: solver error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"planedepth: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
