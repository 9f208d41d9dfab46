"""Objective for joint inverse-depth refinement and slope estimation.

The energy couples a confidence-weighted data term with a graph regularizer
over the per-pixel plane parameters (d_i, u_i):

    E(d, u) = sum_i m_i |d_i - dbar_i|
            + lambda * [ sum_i sqrt(sum_{j~i} w_ij^2 (d_j - d_i - <u_i, j-i>)^2)
                       + alpha * sum_i sum_{j~i} w_ij ||u_j - u_i||_2 ]

plus an alternative regularizer that aggregates the per-node residual vector
with an l1 norm instead of the group l2 (the classic nonlocal-TGV flavor).

Every nonsmooth |.| and ||.||_2 is smoothed as sqrt(.^2 + eps^2) - eps, which
keeps the energy convex, keeps its zero set at zero, and makes the analytic
gradient well defined everywhere. All evaluations are pure and use fixed-order
reductions, so results are reproducible bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from .graph import PixelGraph

MIXED_L12 = "mixed_l12"
NLTGV = "nltgv"
REGULARIZERS = (MIXED_L12, NLTGV)


@dataclass(frozen=True)
class ProblemInstance:
    """One refinement problem: input map, confidence, graph and weights.

    ``d_bar`` holds 0 at invalid pixels; the confidence mask is forced to 0
    there, so those entries never contribute to the data term.
    """

    d_bar: np.ndarray
    mask: np.ndarray
    graph: PixelGraph
    lam: float
    alpha: float
    eps: float = 1e-6
    regularizer: str = MIXED_L12

    def __post_init__(self):
        d = np.asarray(self.d_bar, dtype=np.float64)
        m = np.asarray(self.mask, dtype=np.float64)
        if d.shape != m.shape or d.ndim != 2:
            raise ValueError("d_bar and mask must be equal-shape 2-D grids")
        if d.shape != (self.graph.height, self.graph.width):
            raise ValueError("graph size does not match the grids")
        if m.min() < 0 or m.max() > 1:
            raise ValueError("mask entries must lie in [0, 1]")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.eps <= 0:
            raise ValueError("smoothing eps must be positive")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        object.__setattr__(self, "d_bar", d)
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_map(cls, dmap, mask, graph, lam, alpha, eps=1e-6,
                 regularizer=MIXED_L12):
        """Build an instance from an InverseDepthMap, zeroing the confidence
        and the held value at invalid pixels."""
        m = np.where(dmap.valid, np.asarray(mask, dtype=np.float64), 0.0)
        d = np.where(dmap.valid, dmap.values, 0.0)
        return cls(d, m, graph, lam, alpha, eps, regularizer)


@dataclass
class State:
    """Optimization variables: inverse depth d (H x W) and slopes u (H x W x 2)."""

    d: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.d.ndim != 2 or self.u.shape != self.d.shape + (2,):
            raise ValueError("state shapes must be (H, W) and (H, W, 2)")
        if not (np.all(np.isfinite(self.d)) and np.all(np.isfinite(self.u))):
            raise ValueError("state entries must be finite")

    def copy(self):
        return State(self.d.copy(), self.u.copy())


def _scatter(values, targets, n):
    return np.bincount(targets.reshape(-1), weights=values.reshape(-1),
                       minlength=n)


def _edge_residuals(state, prob):
    """Plane-fit residual d_j - d_i - <u_i, j - i> per stored edge, (N, K)."""
    g = prob.graph
    d = state.d.reshape(-1)
    u = state.u.reshape(-1, 2)
    off = g.offsets
    return (d[g.targets] - d[:, None]
            - u[:, None, 0] * off[..., 0] - u[:, None, 1] * off[..., 1])


def _data(state, prob):
    eps = prob.eps
    delta = state.d - prob.d_bar
    root = np.sqrt(delta * delta + eps * eps)
    energy = float(np.sum(prob.mask * (root - eps)))
    grad_d = prob.mask * (delta / root)
    return energy, grad_d


def _planar(state, prob, r):
    g = prob.graph
    eps = prob.eps
    n = g.num_nodes
    wr = g.weights * r
    s = np.sqrt(np.sum(wr * wr, axis=1) + eps * eps)
    energy = float(np.sum(s - eps))
    t = (g.weights * wr) / s[:, None]
    grad_d = (_scatter(t, g.targets, n) - t.sum(axis=1)).reshape(state.d.shape)
    grad_u = np.stack([-(t * g.offsets[..., 0]).sum(axis=1),
                       -(t * g.offsets[..., 1]).sum(axis=1)],
                      axis=-1).reshape(state.u.shape)
    return energy, grad_d, grad_u


def _smooth(state, prob):
    g = prob.graph
    eps = prob.eps
    n = g.num_nodes
    u = state.u.reshape(-1, 2)
    du = u[g.targets] - u[:, None, :]
    nu = np.sqrt(du[..., 0] ** 2 + du[..., 1] ** 2 + eps * eps)
    energy = prob.alpha * float(np.sum(g.weights * (nu - eps)))
    c = (prob.alpha * g.weights / nu)[..., None] * du
    grad_u = np.stack(
        [_scatter(c[..., 0], g.targets, n) - c[..., 0].sum(axis=1),
         _scatter(c[..., 1], g.targets, n) - c[..., 1].sum(axis=1)],
        axis=-1).reshape(state.u.shape)
    return energy, grad_u


def _nltgv(state, prob, r):
    g = prob.graph
    eps = prob.eps
    n = g.num_nodes
    wr = g.weights * r
    rho = np.sqrt(wr * wr + eps * eps)
    energy = float(np.sum(rho - eps))
    t = (g.weights * wr) / rho
    grad_d = (_scatter(t, g.targets, n) - t.sum(axis=1)).reshape(state.d.shape)
    grad_u = np.stack([-(t * g.offsets[..., 0]).sum(axis=1),
                       -(t * g.offsets[..., 1]).sum(axis=1)],
                      axis=-1).reshape(state.u.shape)

    u = state.u.reshape(-1, 2)
    du = u[g.targets] - u[:, None, :]
    nux = np.sqrt(du[..., 0] ** 2 + eps * eps)
    nuy = np.sqrt(du[..., 1] ** 2 + eps * eps)
    energy += prob.alpha * float(np.sum(g.weights * (nux - eps + nuy - eps)))
    cx = prob.alpha * g.weights * du[..., 0] / nux
    cy = prob.alpha * g.weights * du[..., 1] / nuy
    grad_u += np.stack([_scatter(cx, g.targets, n) - cx.sum(axis=1),
                        _scatter(cy, g.targets, n) - cy.sum(axis=1)],
                       axis=-1).reshape(state.u.shape)
    return energy, grad_d, grad_u


def data_term(state: State, prob: ProblemInstance) -> float:
    """Smoothed confidence-weighted l1 distance to the input map."""
    return _data(state, prob)[0]


def planar_term(state: State, prob: ProblemInstance) -> float:
    """Group-l2 plane-fit term: per node, the l2 norm of its weighted
    neighborhood residual vector (smoothed)."""
    return _planar(state, prob, _edge_residuals(state, prob))[0]


def normal_smoothness_term(state: State, prob: ProblemInstance) -> float:
    """Slope-field smoothness: alpha * sum of weighted ||u_j - u_i||_2."""
    return _smooth(state, prob)[0]


def nltgv_energy(state: State, prob: ProblemInstance) -> float:
    """Baseline regularizer with l1 aggregation over edges and per-component
    slope differences."""
    return _nltgv(state, prob, _edge_residuals(state, prob))[0]


def total_energy(state: State, prob: ProblemInstance) -> float:
    """Data term plus lambda times the selected regularizer."""
    if prob.regularizer == MIXED_L12:
        reg = planar_term(state, prob) + normal_smoothness_term(state, prob)
    else:
        reg = nltgv_energy(state, prob)
    return data_term(state, prob) + prob.lam * reg


def gradient(state: State, prob: ProblemInstance):
    """Exact gradient of the smoothed energy.

    Returns:
        (dE/dd, dE/du) with shapes (H, W) and (H, W, 2).
    """
    return total_energy_and_gradient(state, prob)[1:]


def total_energy_and_gradient(state: State, prob: ProblemInstance):
    """Energy and gradient in one pass (the solver's inner loop).

    Overflow in far-out states is tolerated here: the solver detects the
    resulting non-finite energy and reports it as a step-size failure.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        e_data, gd = _data(state, prob)
        r = _edge_residuals(state, prob)
        if prob.regularizer == MIXED_L12:
            e_p, gd_p, gu_p = _planar(state, prob, r)
            e_s, gu_s = _smooth(state, prob)
            energy = e_data + prob.lam * (e_p + e_s)
            grad_d = gd + prob.lam * gd_p
            grad_u = prob.lam * (gu_p + gu_s)
        else:
            e_r, gd_r, gu_r = _nltgv(state, prob, r)
            energy = e_data + prob.lam * e_r
            grad_d = gd + prob.lam * gd_r
            grad_u = prob.lam * gu_r
    return energy, grad_d, grad_u
