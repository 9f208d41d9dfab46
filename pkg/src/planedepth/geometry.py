"""Camera and plane geometry for inverse depth maps.

A 3D plane seen through a pinhole camera produces an inverse depth map
d(x, y) = 1/Z(x, y) that is itself planar in image coordinates:

    d(x, y) = d(x0, y0) + <u, (x - x0, y - y0)>

with a 2-vector slope u that encodes the scene normal. This module holds
both plane parameterizations, the conversions between them (including the
closed-form recovery of a unit scene normal from a slope), normal maps
from depth gradients, and disparity scaling.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate, minimum_filter


class DegeneratePlaneRay(ValueError):
    """Viewing ray is (numerically) parallel to the plane."""


class ZeroRho(ValueError):
    """Plane passes through the camera center."""


class NonPositiveCalibration(ValueError):
    """Focal length or baseline is not positive."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise NonPositiveCalibration(
                f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )


@dataclass(frozen=True)
class ScenePlane:
    """A scene-space plane (point, unit normal) with camera-facing orientation.

    ``rho`` is the signed plane offset <normal, point>. Visibility from the
    camera requires rho < 0 (the normal points toward the camera side), and
    the anchor point must sit in front of the camera (Z > 0).
    """

    point: tuple
    normal: tuple
    rho: float = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float)
        n = np.asarray(self.normal, dtype=float)
        if p.shape != (3,) or n.shape != (3,):
            raise ValueError("point and normal must be 3-vectors")
        object.__setattr__(self, "point", tuple(float(v) for v in p))
        object.__setattr__(self, "normal", tuple(float(v) for v in n))
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("normal must be unit length")
        if p[2] <= 0:
            raise ValueError("plane anchor point must have Z > 0")
        rho = float(n @ p)
        if rho >= 0:
            raise ValueError("rho = <normal, point> must be negative (camera-facing)")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def facing_camera(cls, point, direction):
        """Build a plane through ``point``, normalizing ``direction`` and
        flipping it if needed so the camera-facing constraint rho < 0 holds."""
        p = np.asarray(point, dtype=float)
        d = np.asarray(direction, dtype=float)
        n = d / np.linalg.norm(d)
        if n @ p >= 0:
            n = -n
        return cls(tuple(p), tuple(n))


@dataclass(frozen=True)
class ImagePlaneParam:
    """Image-space plane: anchor pixel, inverse depth there, and slope u."""

    anchor: tuple
    d0: float
    u: tuple

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError("anchor inverse depth d0 must be positive")


class InverseDepthMap:
    """H x W grid of inverse depth values with a per-pixel validity mask.

    Valid entries must be finite and strictly positive (visible geometry has
    positive inverse depth). Invalid entries may hold anything.
    """

    def __init__(self, values, valid=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("inverse depth map must be a 2-D grid")
        if valid is None:
            valid = np.isfinite(values)
        else:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != values.shape:
                raise ValueError("validity mask shape mismatch")
        if not np.all(np.isfinite(values[valid])):
            raise ValueError("valid pixels must hold finite values")
        if np.any(values[valid] <= 0):
            raise ValueError("valid pixels must hold positive inverse depth")
        self.values = values
        self.valid = valid

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def project_point(cam: CameraIntrinsics, point) -> tuple:
    """Project a scene point (Z > 0) to pixel coordinates."""
    x, y, z = np.asarray(point, dtype=float)
    if z <= 0:
        raise ValueError("cannot project a point with Z <= 0")
    return (float(x / z * cam.fx + cam.cx), float(y / z * cam.fy + cam.cy))


def plane_inverse_depth(param: ImagePlaneParam, x, y):
    """Inverse depth of the image-space plane at pixel (x, y).

    May be non-positive for pixels beyond the plane's horizon; the caller
    decides what to do with those.
    """
    x0, y0 = param.anchor
    ux, uy = param.u
    return param.d0 + ux * (x - x0) + uy * (y - y0)


def scene_plane_inverse_depth(plane: ScenePlane, cam: CameraIntrinsics, x, y):
    """Inverse depth 1/Z of a scene plane along the ray through pixel (x, y).

    Raises DegeneratePlaneRay when the ray is parallel to the plane.
    """
    a, b, c = plane.normal
    bracket = a * (x - cam.cx) / cam.fx + b * (y - cam.cy) / cam.fy + c
    if abs(bracket) < 1e-15:
        raise DegeneratePlaneRay("viewing ray parallel to plane")
    return bracket / plane.rho


def u_from_normal(plane: ScenePlane, cam: CameraIntrinsics) -> tuple:
    """Image-space slope u = (a/(rho*fx), b/(rho*fy)) of a scene plane."""
    if abs(plane.rho) < 1e-15:
        raise ZeroRho("plane passes through the camera center")
    a, b, _ = plane.normal
    return (float(a / (plane.rho * cam.fx)), float(b / (plane.rho * cam.fy)))


def image_param_from_plane(plane: ScenePlane, cam: CameraIntrinsics) -> ImagePlaneParam:
    """Image-space parameterization anchored at the projection of the plane's point."""
    anchor = project_point(cam, plane.point)
    d0 = 1.0 / plane.point[2]
    return ImagePlaneParam(anchor, d0, u_from_normal(plane, cam))


def normal_from_u(u, d0, anchor, cam: CameraIntrinsics):
    """Recover the unit scene normal from an image-space slope.

    Solves the nonlinear system linking u to (a, b, c) under the unit-norm
    and camera-facing (rho < 0) constraints. Dispatch on exact zeros of the
    slope components:

      both nonzero / only ux / only uy -> closed form below
      u == (0, 0)                      -> fronto-parallel (0, 0, -1)

    The nonzero branches share one factorization of the closed form,
        n = -v / ||v||,  v = (ux*fx, uy*fy, d0 - <u, anchor - c>),
    which stays finite for arbitrarily small nonzero slopes.

    Args:
        u: slope (ux, uy) in inverse-depth units per pixel.
        d0: inverse depth at the anchor, > 0.
        anchor: anchor pixel (x0, y0).
        cam: camera intrinsics.

    Returns:
        Unit normal (a, b, c) with rho < 0.
    """
    if d0 <= 0:
        raise ValueError("anchor inverse depth d0 must be positive")
    ux, uy = float(u[0]), float(u[1])
    x0, y0 = anchor
    if ux != 0.0 and uy != 0.0:
        v = np.array([ux * cam.fx, uy * cam.fy,
                      d0 - ux * (x0 - cam.cx) - uy * (y0 - cam.cy)])
    elif ux != 0.0:
        v = np.array([ux * cam.fx, 0.0, d0 - ux * (x0 - cam.cx)])
    elif uy != 0.0:
        v = np.array([0.0, uy * cam.fy, d0 - uy * (y0 - cam.cy)])
    else:
        return (0.0, 0.0, -1.0)
    n = -v / np.linalg.norm(v)
    return (float(n[0]), float(n[1]), float(n[2]))


def normals_from_slopes(d, u, cam: CameraIntrinsics):
    """Vectorized normal recovery over a full grid.

    Args:
        d: H x W inverse depth values (positive where meaningful).
        u: H x W x 2 slope grid.
        cam: camera intrinsics.

    Returns:
        H x W x 3 unit normals; NaN where d is not positive and finite.
    """
    d = np.asarray(d, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    h, w = d.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ok = np.isfinite(d) & (d > 0) & np.all(np.isfinite(u), axis=-1)
    dsafe = np.where(ok, d, 1.0)
    usafe = np.where(ok[..., None], u, 0.0)
    vz = dsafe - usafe[..., 0] * (xs - cam.cx) - usafe[..., 1] * (ys - cam.cy)
    v = np.stack([usafe[..., 0] * cam.fx, usafe[..., 1] * cam.fy, vz], axis=-1)
    normals = -v / np.linalg.norm(v, axis=-1, keepdims=True)
    normals[~ok] = np.nan
    return normals


def _gaussian_derivative_kernels(sigma: float):
    # 5x5 separable taps at integer offsets -2..2; the derivative kernel is
    # rescaled so correlation with a unit-slope ramp returns exactly 1.
    t = np.arange(-2.0, 3.0)
    g = np.exp(-t * t / (2.0 * sigma * sigma))
    gd = -t * g
    kx = np.outer(g, gd)          # [dy, dx] taps for d/dx
    scale = float(np.sum(kx * t[None, :]))
    kx = kx / scale
    ky = kx.T.copy()
    return kx, ky


def normals_from_depth_gradient(dmap: InverseDepthMap, cam: CameraIntrinsics,
                                sigma: float):
    """Approximate per-pixel unit normals from an inverse depth map.

    The slope u is estimated as the image gradient of d with a 5x5 Gaussian
    derivative kernel (replicate padding at the borders), then converted to a
    normal per pixel. Use a small sigma (0.2) on clean maps and a large one
    (5) on noisy ones.

    Returns:
        (normals, valid): H x W x 3 unit normals and the validity mask, which
        is the input mask eroded by the 5x5 kernel footprint.
    """
    kx, ky = _gaussian_derivative_kernels(sigma)
    filled = np.where(dmap.valid, dmap.values, 1.0)
    ux = correlate(filled, kx, mode="nearest")
    uy = correlate(filled, ky, mode="nearest")
    valid = minimum_filter(dmap.valid, size=5, mode="nearest")
    normals = normals_from_slopes(filled, np.stack([ux, uy], axis=-1), cam)
    normals[~valid] = np.nan
    return normals, valid


def disparity_to_inverse_depth(disp, focal: float, baseline: float) -> InverseDepthMap:
    """Scale a disparity grid to inverse depth: d = disp / (focal * baseline).

    Non-positive or non-finite disparities are marked invalid.
    """
    if focal <= 0 or baseline <= 0:
        raise NonPositiveCalibration(
            f"focal and baseline must be positive, got {focal}, {baseline}"
        )
    disp = np.asarray(disp, dtype=np.float64)
    valid = np.isfinite(disp) & (disp > 0)
    scale = focal * baseline
    values = np.where(valid, disp / scale, np.inf)
    return InverseDepthMap(values, valid)


def inverse_depth_to_disparity(dmap: InverseDepthMap, focal: float, baseline: float):
    """Exact inverse of :func:`disparity_to_inverse_depth` on valid pixels."""
    if focal <= 0 or baseline <= 0:
        raise NonPositiveCalibration(
            f"focal and baseline must be positive, got {focal}, {baseline}"
        )
    scale = focal * baseline
    disp = np.where(dmap.valid, dmap.values * scale, np.inf)
    return disp, dmap.valid.copy()
