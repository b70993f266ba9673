"""Rigid and non-rigid point-cloud registration.

The non-rigid path is an EM fit of a Gaussian mixture whose centroids are
the source points, regularized by a motion-coherence kernel so nearby
source points move together. The rigid path is the usual weighted SVD
orthogonal-Procrustes solve, plus an ICP loop on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geom import PointCloud, RigidTransform

__all__ = [
    "CpdConfig",
    "IcpConfig",
    "DisplacementField",
    "IcpResult",
    "cpd_nonrigid",
    "kabsch",
    "icp",
]


@dataclass(frozen=True)
class CpdConfig:
    """Settings for the non-rigid EM registration.

    beta is the width of the motion-coherence kernel and lam the strength
    of that regularizer; both are expressed for clouds rescaled to unit
    bounding-box diagonal, so they carry across object scales unchanged.
    outlier_weight is the uniform-noise mixture weight.
    """

    beta: float = 1.0
    lam: float = 2.0
    max_iterations: int = 60
    tolerance: float = 1e-6
    outlier_weight: float = 0.1

    def __post_init__(self):
        if self.beta <= 0 or self.lam <= 0:
            raise ValueError("beta and lam must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 <= self.outlier_weight < 1.0:
            raise ValueError("outlier_weight must be in [0, 1)")


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 50
    convergence_tolerance: float = 1e-8
    max_correspondence_distance: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_tolerance <= 0:
            raise ValueError("convergence_tolerance must be positive")
        if self.max_correspondence_distance is not None and self.max_correspondence_distance <= 0:
            raise ValueError("max_correspondence_distance must be positive")


@dataclass(frozen=True)
class DisplacementField:
    """Per-point displacement vectors for a source cloud."""

    displacements: np.ndarray
    converged: bool
    objective_history: tuple[float, ...]

    def __post_init__(self):
        disp = np.asarray(self.displacements, dtype=np.float64)
        if disp.ndim != 2 or disp.shape[1] != 3:
            raise ValueError("displacements must have shape (n, 3)")
        if not np.all(np.isfinite(disp)):
            raise ValueError("displacements must be finite")
        disp.flags.writeable = False
        object.__setattr__(self, "displacements", disp)
        object.__setattr__(self, "objective_history", tuple(self.objective_history))

    def apply(self, cloud: PointCloud) -> PointCloud:
        if len(cloud) != self.displacements.shape[0]:
            raise ValueError("field size does not match cloud size")
        return PointCloud(cloud.points + self.displacements, cloud.labels)


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    residual: float
    residual_history: tuple[float, ...]
    converged: bool
    correspondence_count: int


def cpd_nonrigid(source: PointCloud, target: PointCloud, cfg: CpdConfig = CpdConfig()) -> DisplacementField:
    """Warp `source` toward `target` with a coherence-regularized EM fit.

    Returns the displacement field that carries each source point to its
    warped position. On non-convergence the best field seen is returned
    with converged = False.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("empty cloud")
    span = target.points.max(axis=0) - target.points.min(axis=0)
    if float(np.linalg.norm(span)) < 1e-12:
        raise ValueError("degenerate target")

    # Shared normalization so beta/lam are scale-free and the result maps
    # straight back to world units.
    lo = np.minimum(source.points.min(axis=0), target.points.min(axis=0))
    hi = np.maximum(source.points.max(axis=0), target.points.max(axis=0))
    center = (lo + hi) / 2.0
    scale = float(np.linalg.norm(hi - lo))
    s = (source.points - center) / scale
    x = (target.points - center) / scale

    m, n = s.shape[0], x.shape[0]
    diff = s[:, None, :] - s[None, :, :]
    g = np.exp(-np.einsum("ijk,ijk->ij", diff, diff) / (2.0 * cfg.beta**2))

    w = np.zeros((m, 3))
    warped = s.copy()
    d2 = _pairwise_sq(x, warped)
    sigma2 = d2.sum() / (3.0 * m * n)
    sigma2 = max(sigma2, 1e-12)

    history: list[float] = []
    best_obj = np.inf
    best_w = w.copy()
    converged = False
    outlier = cfg.outlier_weight

    for _ in range(cfg.max_iterations):
        d2 = _pairwise_sq(x, warped)
        gauss = np.exp(-d2 / (2.0 * sigma2))

        # Negative log-likelihood of the mixture plus the coherence penalty,
        # evaluated at the current parameters. EM never increases this.
        density = (1.0 - outlier) * (2.0 * np.pi * sigma2) ** (-1.5) / m * gauss.sum(axis=1)
        density += outlier / n + 1e-300
        objective = float(-np.log(density).sum() + 0.5 * cfg.lam * np.trace(w.T @ g @ w))
        history.append(objective)
        if objective < best_obj:
            best_obj = objective
            best_w = w.copy()
        if len(history) > 1 and abs(history[-2] - objective) <= cfg.tolerance * (abs(history[-2]) + 1.0):
            converged = True
            break

        c = (2.0 * np.pi * sigma2) ** 1.5 * outlier / max(1.0 - outlier, 1e-12) * m / n
        p = gauss / (gauss.sum(axis=1, keepdims=True) + c)  # (n, m) responsibilities

        p1 = p.sum(axis=0)
        np_total = p1.sum()
        if np_total < 1e-12:
            break  # every point explained by the outlier component
        lhs = g * p1[:, None] + cfg.lam * sigma2 * np.eye(m)
        rhs = p.T @ x - p1[:, None] * s
        try:
            w = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("coherent registration failed: singular system") from exc
        warped = s + g @ w

        pt1 = p.sum(axis=1)
        sigma2 = (
            np.einsum("i,ij,ij->", pt1, x, x)
            - 2.0 * np.einsum("ij,ij->", p.T @ x, warped)
            + np.einsum("i,ij,ij->", p1, warped, warped)
        ) / (3.0 * np_total)
        sigma2 = max(float(sigma2), 1e-12)
    else:
        # Budget exhausted: score the final M-step so best-so-far sees it.
        d2 = _pairwise_sq(x, warped)
        density = (1.0 - outlier) * (2.0 * np.pi * sigma2) ** (-1.5) / m * np.exp(
            -d2 / (2.0 * sigma2)
        ).sum(axis=1)
        density += outlier / n + 1e-300
        objective = float(-np.log(density).sum() + 0.5 * cfg.lam * np.trace(w.T @ g @ w))
        history.append(objective)
        if objective < best_obj:
            best_obj = objective
            best_w = w.copy()

    displacement = (g @ best_w) * scale
    return DisplacementField(displacement, converged, tuple(history))


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", a, a)[:, None]
        + np.einsum("ij,ij->i", b, b)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def kabsch(source: np.ndarray, target: np.ndarray, weights: np.ndarray | None = None) -> RigidTransform:
    """Least-squares rigid transform taking source points onto target points.

    Solves argmin_T sum_k w_k ||T(source_k) - target_k||^2 with the SVD
    construction, forcing a proper rotation. Requires at least three pairs
    in a non-collinear configuration.
    """
    a = np.asarray(source, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3 or a.shape != b.shape:
        raise ValueError("source and target must both have shape (k, 3)")
    k = a.shape[0]
    if k < 3:
        raise ValueError("rank-deficient correspondence set")
    if weights is None:
        wgt = np.full(k, 1.0 / k)
    else:
        wgt = np.asarray(weights, dtype=np.float64)
        if wgt.shape != (k,) or (wgt < 0).any() or wgt.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        wgt = wgt / wgt.sum()

    ca = wgt @ a
    cb = wgt @ b
    a0 = a - ca
    b0 = b - cb
    for pts in (a0, b0):
        sv = np.linalg.svd(pts * np.sqrt(wgt)[:, None], compute_uv=False)
        if sv[0] < 1e-12 or sv[1] <= 1e-9 * sv[0]:
            raise ValueError("rank-deficient correspondence set")

    h = (a0 * wgt[:, None]).T @ b0
    u, _, vt = np.linalg.svd(h)
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    if sign == 0:
        sign = 1.0
    rot = vt.T @ np.diag([1.0, 1.0, sign]) @ u.T
    return RigidTransform(rot, cb - rot @ ca)


def icp(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform | None = None,
    cfg: IcpConfig = IcpConfig(),
) -> IcpResult:
    """Iterative closest point with an SVD solve per iteration.

    The returned transform includes the initialization. The residual is
    the RMS correspondence distance after the final solve. If a maximum
    correspondence distance is set and no pairs survive it, the unchanged
    init is returned flagged with an empty correspondence set.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("empty cloud")
    t = init if init is not None else RigidTransform.identity()
    tree = cKDTree(target.points)
    history: list[float] = []
    residual = np.inf
    converged = False
    used = 0

    for _ in range(cfg.max_iterations):
        moved = t.apply(source.points)
        dist, idx = tree.query(moved)
        if cfg.max_correspondence_distance is not None:
            mask = dist <= cfg.max_correspondence_distance
            if not mask.any():
                return IcpResult(t, np.inf, tuple(history), False, 0)
        else:
            mask = np.ones(len(source), dtype=bool)
        src = source.points[mask]
        dst = target.points[idx[mask]]
        used = int(mask.sum())
        t = kabsch(src, dst)
        res = float(np.sqrt(np.mean(np.sum((t.apply(src) - dst) ** 2, axis=1))))
        history.append(res)
        if len(history) > 1 and abs(history[-2] - res) <= cfg.convergence_tolerance:
            converged = True
            residual = res
            break
        residual = res

    return IcpResult(t, residual, tuple(history), converged, used)
