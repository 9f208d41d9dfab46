"""Weighted K-nearest-neighbor pixel graph built from a guide image.

Each pixel is connected to the K highest-weight pixels inside a centered
B x B search window. The weight of an edge combines patch similarity and
spatial proximity:

    w_ij = exp(-||Q_i - Q_j||_F^2 / (2 sigma_int^2))
         * exp(-||i - j||_2^2   / (2 sigma_spa^2))

where Q_i is the patch x patch window around pixel i (replicate padding at
the image borders). Selection is per source pixel, so the graph is directed.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GuideImage:
    """Guide image with values normalized to [0, 1], 1 or 3 channels."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[2] not in (1, 3):
            raise ValueError("guide image must be H x W or H x W x {1,3}")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValueError("guide image values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def channels(self):
        return self.values.shape[2]


@dataclass(frozen=True)
class GraphParams:
    sigma_int: float = 0.07
    sigma_spa: float = 3.0
    window: int = 9
    patch: int = 3
    k: int = 20

    def __post_init__(self):
        if self.sigma_int <= 0 or self.sigma_spa <= 0:
            raise ValueError("bandwidths must be positive")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("search window must be odd and >= 3")
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError("patch side must be odd and >= 1")
        if not (1 <= self.k <= self.window ** 2 - 1):
            raise ValueError("k must be in [1, window^2 - 1]")


class PixelGraph:
    """Directed KNN graph over the pixels of an H x W image.

    Edges of node i occupy ``targets[i, :degree[i]]`` (flat row-major pixel
    indices), sorted by descending weight with ties broken by ascending
    target index. ``offsets`` stores the (dx, dy) pixel displacement of each
    edge. Entries past the degree are padding with zero weight.
    """

    def __init__(self, height, width, targets, offsets, weights, degree):
        self.height = height
        self.width = width
        self.targets = targets
        self.offsets = offsets
        self.weights = weights
        self.degree = degree

    @property
    def num_nodes(self):
        return self.height * self.width

    @property
    def edge_mask(self):
        """Boolean (N, K) mask of real (non-padding) edges."""
        k = self.targets.shape[1]
        return np.arange(k)[None, :] < self.degree[:, None]

    def dump_edges(self, fp):
        """Write a plain-text edge list: ``i_x i_y j_x j_y weight`` per line."""
        w = self.width
        for i in range(self.num_nodes):
            ix, iy = i % w, i // w
            for slot in range(int(self.degree[i])):
                j = int(self.targets[i, slot])
                fp.write(f"{ix} {iy} {j % w} {j // w} "
                         f"{float(self.weights[i, slot])!r}\n")


def patch_distance(img: GuideImage, i, j, patch: int) -> float:
    """Squared Frobenius distance between the patches centered at pixels i, j.

    Pixels are (x, y) pairs; patches are clamped to the image (replicate
    padding).
    """
    if patch % 2 == 0:
        raise ValueError("patch side must be odd")
    v = img.values
    h, w = img.height, img.width
    rad = patch // 2
    ix, iy = i
    jx, jy = j
    total = 0.0
    for dy in range(-rad, rad + 1):
        for dx in range(-rad, rad + 1):
            pi = v[min(max(iy + dy, 0), h - 1), min(max(ix + dx, 0), w - 1)]
            pj = v[min(max(jy + dy, 0), h - 1), min(max(jx + dx, 0), w - 1)]
            for c in range(img.channels):
                diff = pi[c] - pj[c]
                total += diff * diff
    return total


def edge_weight(img: GuideImage, i, j, params: GraphParams) -> float:
    """Patch-similarity times spatial-proximity weight for two distinct pixels."""
    if i == j:
        raise ValueError("edge weight is defined for distinct pixels")
    pd = patch_distance(img, i, j, params.patch)
    sd = float((i[0] - j[0]) ** 2 + (i[1] - j[1]) ** 2)
    return float(np.exp(-pd / (2.0 * params.sigma_int ** 2))
                 * np.exp(-sd / (2.0 * params.sigma_spa ** 2)))


def build_graph(img: GuideImage, params: GraphParams) -> PixelGraph:
    """Build the directed KNN pixel graph for a guide image.

    For every pixel, weights are computed against all in-bounds pixels of the
    centered window and the K largest are kept. Ties are broken by ascending
    flat target index, so the construction is fully deterministic. Border
    windows are clipped, so border degrees may fall below K.
    """
    v = img.values
    h, w, nc = v.shape
    n = h * w
    rad = params.window // 2
    prad = params.patch // 2

    # Patch sums accumulate offset-by-offset in row-major tap order so weights
    # match a scalar reference loop bitwise.
    padded = np.pad(v, ((prad, prad), (prad, prad), (0, 0)), mode="edge")

    offsets = [(dx, dy)
               for dy in range(-rad, rad + 1)
               for dx in range(-rad, rad + 1)
               if (dx, dy) != (0, 0)]
    n_off = len(offsets)

    cand_w = np.full((n_off, h, w), -np.inf)
    cand_j = np.zeros((n_off, h, w), dtype=np.int64)
    # Same expressions as edge_weight so stored weights match it bitwise.
    denom_int = 2.0 * params.sigma_int ** 2
    denom_spa = 2.0 * params.sigma_spa ** 2

    ys, xs = np.mgrid[0:h, 0:w]
    for idx, (dx, dy) in enumerate(offsets):
        y0s, y0e = max(0, -dy), min(h, h - dy)
        x0s, x0e = max(0, -dx), min(w, w - dx)
        if y0s >= y0e or x0s >= x0e:
            continue
        pd = np.zeros((y0e - y0s, x0e - x0s))
        for ty in range(-prad, prad + 1):
            for tx in range(-prad, prad + 1):
                a = padded[y0s + ty + prad: y0e + ty + prad,
                           x0s + tx + prad: x0e + tx + prad]
                b = padded[y0s + dy + ty + prad: y0e + dy + ty + prad,
                           x0s + dx + tx + prad: x0e + dx + tx + prad]
                diff = a - b
                for c in range(nc):
                    pd += diff[:, :, c] * diff[:, :, c]
        sd = float(dx * dx + dy * dy)
        wgt = np.exp(-pd / denom_int) * np.exp(-sd / denom_spa)
        cand_w[idx, y0s:y0e, x0s:x0e] = wgt
        cand_j[idx, y0s:y0e, x0s:x0e] = ((ys + dy) * w + (xs + dx))[y0s:y0e, x0s:x0e]

    cand_w = cand_w.reshape(n_off, n).T          # (N, n_off)
    cand_j = cand_j.reshape(n_off, n).T
    in_bounds = np.isfinite(cand_w)
    degree = np.minimum(in_bounds.sum(axis=1), params.k).astype(np.int32)

    # Sort per node: weight descending, then target index ascending.
    order = np.lexsort((cand_j, -cand_w), axis=1)
    rows = np.arange(n)[:, None]
    sorted_w = cand_w[rows, order][:, :params.k]
    sorted_j = cand_j[rows, order][:, :params.k]

    k = params.k
    slot = np.arange(k)[None, :]
    pad = slot >= degree[:, None]
    targets = np.where(pad, 0, sorted_j).astype(np.int32)
    weights = np.where(pad, 0.0, sorted_w)

    tx = targets % w - (np.arange(n) % w)[:, None]
    ty = targets // w - (np.arange(n) // w)[:, None]
    offs = np.stack([tx, ty], axis=-1).astype(np.float64)
    offs[pad] = 0.0

    return PixelGraph(h, w, targets, offs, weights, degree)
