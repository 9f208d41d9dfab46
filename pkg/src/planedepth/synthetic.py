"""Synthetic piecewise-planar scenes with controlled corruption.

A scene is a union of axis-aligned rectangular regions, each carrying one
camera-facing plane and a distinct guide color. The generator renders the
ground-truth inverse depth and normals, then corrupts a copy with additive
Gaussian noise, random holes (confidence 0) and, optionally, confidently
wrong outliers (values resampled over the depth range while keeping
confidence 1). All corruption is seed-deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, InverseDepthMap, ScenePlane, u_from_normal
from .graph import GuideImage


class InvalidScene(ValueError):
    """A region's plane is not fully visible (non-positive depth)."""


@dataclass(frozen=True)
class PlanarRegion:
    """Half-open pixel rect [x0, x1) x [y0, y1) carrying one plane."""

    rect: tuple
    plane: ScenePlane
    color: tuple


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    cam: CameraIntrinsics
    regions: tuple


@dataclass
class SyntheticBundle:
    gt: InverseDepthMap
    gt_normals: np.ndarray
    gt_u: np.ndarray
    guide: GuideImage
    d_bar: InverseDepthMap
    confidence: np.ndarray
    cam: CameraIntrinsics


def _render(scene: SceneSpec):
    h, w = scene.height, scene.width
    cam = scene.cam
    d = np.full((h, w), np.nan)
    normals = np.full((h, w, 3), np.nan)
    slopes = np.full((h, w, 2), np.nan)
    colors = np.zeros((h, w, 3))
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    for region in scene.regions:
        x0, y0, x1, y1 = region.rect
        sel = (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)
        a, b, c = region.plane.normal
        bracket = (a * (xs - cam.cx) / cam.fx + b * (ys - cam.cy) / cam.fy + c)
        dv = bracket / region.plane.rho
        if np.any(dv[sel] <= 0):
            raise InvalidScene(
                f"plane over rect {region.rect} yields non-positive depth")
        d[sel] = dv[sel]
        normals[sel] = region.plane.normal
        slopes[sel] = u_from_normal(region.plane, cam)
        colors[sel] = region.color
    if np.any(np.isnan(d)):
        raise InvalidScene("regions do not cover the full image")
    return d, normals, slopes, colors


def generate_synthetic(scene: SceneSpec, noise: float = 0.0, holes: float = 0.0,
                       outliers: float = 0.0, seed: int = 0) -> SyntheticBundle:
    """Render a scene and corrupt it.

    Args:
        scene: scene description (regions must cover the image).
        noise: Gaussian noise sigma as a fraction of the gt inverse-depth range.
        holes: fraction of pixels invalidated (floor(holes * H * W), exact).
        outliers: fraction of pixels replaced by uniform values over the gt
            range while keeping confidence 1.
        seed: RNG seed; identical seeds give identical bundles.
    """
    if not (0 <= holes < 1 and 0 <= outliers < 1 and noise >= 0):
        raise ValueError("corruption fractions out of range")
    d, normals, slopes, colors = _render(scene)
    h, w = d.shape
    n = h * w
    dmin, dmax = float(d.min()), float(d.max())
    span = dmax - dmin if dmax > dmin else 1.0

    rng = np.random.default_rng(seed)
    noisy = d + rng.normal(0.0, noise * span, size=d.shape)

    valid = np.ones((h, w), dtype=bool)
    n_holes = int(np.floor(holes * n))
    if n_holes:
        flat = rng.choice(n, size=n_holes, replace=False)
        valid.reshape(-1)[flat] = False

    n_out = int(np.floor(outliers * n))
    if n_out:
        candidates = np.flatnonzero(valid.reshape(-1))
        chosen = rng.choice(candidates, size=min(n_out, candidates.size),
                            replace=False)
        noisy.reshape(-1)[chosen] = rng.uniform(dmin, dmax, size=chosen.size)

    noisy = np.maximum(noisy, 0.01 * dmin)
    noisy[~valid] = np.inf
    confidence = valid.astype(np.float64)

    return SyntheticBundle(
        gt=InverseDepthMap(d),
        gt_normals=normals,
        gt_u=slopes,
        guide=GuideImage(colors),
        d_bar=InverseDepthMap(noisy, valid),
        confidence=confidence,
        cam=scene.cam,
    )


def _default_cam(width, height):
    return CameraIntrinsics(fx=100.0, fy=100.0,
                            cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)


def single_plane_scene(width=64, height=64) -> SceneSpec:
    """One fronto-parallel plane at Z = 2."""
    cam = _default_cam(width, height)
    plane = ScenePlane((0.0, 0.0, 2.0), (0.0, 0.0, -1.0))
    region = PlanarRegion((0, 0, width, height), plane, (0.5, 0.5, 0.5))
    return SceneSpec(width, height, cam, (region,))


def two_plane_scene(width=64, height=64) -> SceneSpec:
    """Two slanted planes split at the vertical midline, distinct colors."""
    cam = _default_cam(width, height)
    left = ScenePlane.facing_camera((0.0, 0.0, 4.0), (0.3, 0.0, -1.0))
    right = ScenePlane.facing_camera((0.0, 0.0, 2.5), (0.0, 0.4, -1.0))
    half = width // 2
    return SceneSpec(width, height, cam, (
        PlanarRegion((0, 0, half, height), left, (0.2, 0.3, 0.8)),
        PlanarRegion((half, 0, width, height), right, (0.85, 0.4, 0.15)),
    ))


SCENES = {
    "single-plane": single_plane_scene,
    "two-planes": two_plane_scene,
}
