"""Sample distance correlation (biased, double-centred V-statistic).

Two flavours live here: plain numpy functions used for evaluation, and
:func:`log_dcor_loss` / :func:`dcor_loss` which record the same computation
on a tape so the loss can be differentiated with respect to the embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeError

EPS_DIST = 1e-12
EPS_CLAMP = 1e-6
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class DcorResult:
    dcor: float
    dcov2: float
    dvar2_x: float
    dvar2_y: float
    degenerate: bool = False


def _as_batch(x, what="x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeError(f"{what}: expected an [n, d] batch, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError(f"{what}: distance correlation needs n >= 2 samples")
    return x


def pairwise_distances(x, eps: float = 0.0) -> np.ndarray:
    """Euclidean distance matrix, ``sqrt(||x_i - x_j||^2 + eps)``."""
    x = _as_batch(x)
    # centring first keeps the expansion below well conditioned
    xc = x - x.mean(axis=0)
    sq = np.einsum("ij,ij->i", xc, xc)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (xc @ xc.T)
    np.fill_diagonal(d2, 0.0)
    np.maximum(d2, 0.0, out=d2)
    d2 = 0.5 * (d2 + d2.T)
    return np.sqrt(d2 + eps)


def double_center(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ShapeError(f"double_center: expected a square matrix, got shape {d.shape}")
    row = d.mean(axis=1, keepdims=True)
    col = d.mean(axis=0, keepdims=True)
    return d - row - col + d.mean()


def dcor(x, y, eps: float = 0.0) -> DcorResult:
    x = _as_batch(x, "x")
    y = _as_batch(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"dcor: sample counts differ ({x.shape[0]} vs {y.shape[0]})")
    a = double_center(pairwise_distances(x, eps))
    b = double_center(pairwise_distances(y, eps))
    dcov2 = max(float(np.mean(a * b)), 0.0)
    vx = float(np.mean(a * a))
    vy = float(np.mean(b * b))
    if vx < DEGENERATE_TOL or vy < DEGENERATE_TOL:
        return DcorResult(0.0, dcov2, vx, vy, degenerate=True)
    r = np.sqrt(dcov2 / np.sqrt(vx * vy))
    return DcorResult(float(min(r, 1.0)), dcov2, vx, vy)


# ---------------------------------------------------------------------------
# tape versions


def _tape_distances(x: Node, eps: float) -> Node:
    n = x.shape[0]
    xc = x - ad.mean(x, axis=0, keepdims=True)
    sq = ad.sum_(xc * xc, axis=1, keepdims=True)  # [n, 1]
    d2 = sq + sq.T - 2.0 * ad.matmul(xc, xc.T)
    # exact zeros on the diagonal; roundoff there would otherwise go negative
    off = np.ones((n, n)) - np.eye(n)
    d2 = d2 * off
    return ad.sqrt(ad.relu(d2) + eps)


def _tape_center(d: Node) -> Node:
    row = ad.mean(d, axis=1, keepdims=True)
    col = ad.mean(d, axis=0, keepdims=True)
    return d - row - col + ad.mean(d)


def _tape_log_dcor(x: Node, y: Node, eps: float):
    a = _tape_center(_tape_distances(x, eps))
    b = _tape_center(_tape_distances(y, eps))
    dcov2 = ad.mean(a * b)
    vx = ad.mean(a * a)
    vy = ad.mean(b * b)
    return dcov2, vx, vy


def log_dcor_loss(x, y: Node, eps_dist: float = EPS_DIST, eps_clamp: float = EPS_CLAMP):
    """Record log(max(dCor(x, y), eps_clamp)) on ``y``'s tape.

    Returns ``(node, DcorResult)``.  In the clamped or degenerate branch the
    node is a constant, so no gradient reaches ``y``.
    """
    tape = y.tape
    x = tape.lift(x)
    _check_pair(x, y)
    dcov2, vx, vy = _tape_log_dcor(x, y, eps_dist)
    res = _result(dcov2, vx, vy)
    if res.degenerate or res.dcor < eps_clamp:
        return tape.constant(np.log(eps_clamp)), res
    # log dCor = 0.5 log dcov2 - 0.25 log vx - 0.25 log vy
    node = 0.5 * ad.log(dcov2) - 0.25 * ad.log(vx) - 0.25 * ad.log(vy)
    return node, res


def dcor_loss(x, y: Node, eps_dist: float = EPS_DIST):
    """Raw dCor as a differentiable node (for comparison with the log form)."""
    tape = y.tape
    x = tape.lift(x)
    _check_pair(x, y)
    dcov2, vx, vy = _tape_log_dcor(x, y, eps_dist)
    res = _result(dcov2, vx, vy)
    if res.degenerate or res.dcov2 <= 0.0:
        return tape.constant(res.dcor), res
    node = ad.exp(0.5 * ad.log(dcov2) - 0.25 * ad.log(vx) - 0.25 * ad.log(vy))
    return node, res


def _check_pair(x: Node, y: Node):
    if x.value.ndim != 2 or y.value.ndim != 2:
        raise ShapeError("dcor loss expects [n, d] batches")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"dcor: sample counts differ ({x.shape[0]} vs {y.shape[0]})")
    if x.shape[0] < 2:
        raise ValueError("distance correlation needs n >= 2 samples")


def _result(dcov2: Node, vx: Node, vy: Node) -> DcorResult:
    c, a, b = float(dcov2.value), float(vx.value), float(vy.value)
    if a < DEGENERATE_TOL or b < DEGENERATE_TOL:
        return DcorResult(0.0, max(c, 0.0), a, b, degenerate=True)
    r = np.sqrt(max(c, 0.0) / np.sqrt(a * b))
    return DcorResult(float(min(r, 1.0)), max(c, 0.0), a, b)
