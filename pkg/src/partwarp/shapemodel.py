"""Per-part statistical shape models and fitting to observed clouds.

Training registers every pose-aligned instance of a part onto a canonical
instance via the non-rigid EM registration, then runs an uncentered PCA of
the flattened displacement fields. Reconstruction at latent zero is the
canonical cloud itself; label arrays travel by point identity, so a label
painted on the canonical cloud is known on every reconstruction.

Fitting is a derivative-free pattern search over the latent vector jointly
with a rigid pose, scoring the label-aware one-sided Chamfer distance from
the observation into the posed reconstruction plus a whitened quadratic
latent penalty.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geom import (
    PointCloud,
    RigidTransform,
    rotation_about_axis,
    symmetric_chamfer,
    z_label_values,
)
from .registration import CpdConfig, cpd_nonrigid

__all__ = [
    "CanonicalPartModel",
    "InferenceConfig",
    "InferenceResult",
    "InferenceError",
    "select_canonical",
    "train_part_model",
    "reconstruct",
    "infer",
    "warp_point_indices",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

Z_KEY = "z"


class InferenceError(RuntimeError):
    """Raised when no fit attempt produced a finite objective."""

    def __init__(self, message: str, best: "InferenceResult | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class CanonicalPartModel:
    """Low-rank generative model of one part category.

    basis columns are orthonormal directions in the flattened (3n)
    displacement space; latent values are plain coefficients on those
    columns, so latent zero reproduces the canonical cloud exactly.
    """

    part_category: str
    canonical: PointCloud
    basis: np.ndarray
    latent_mean: np.ndarray
    latent_scales: np.ndarray
    training_latents: np.ndarray
    training_residuals: np.ndarray
    explained_variance: np.ndarray
    cpd_config: CpdConfig

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        n = len(self.canonical)
        if basis.ndim != 2 or basis.shape[0] != 3 * n:
            raise ValueError("basis must have shape (3n, d)")
        gram = basis.T @ basis
        if np.abs(gram - np.eye(basis.shape[1])).max() > 1e-8:
            raise ValueError("basis columns must be orthonormal")
        for name in ("basis", "latent_mean", "latent_scales", "training_latents",
                     "training_residuals", "explained_variance"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def point_count(self) -> int:
        return len(self.canonical)

    @property
    def latent_dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class InferenceConfig:
    restarts: int = 3
    yaw_init_count: int = 8
    max_evals: int = 300
    latent_reg_weight: float = 0.01
    step_tolerance: float = 1e-3

    def __post_init__(self):
        if self.restarts < 1 or self.yaw_init_count < 1:
            raise ValueError("restarts and yaw_init_count must be >= 1")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")
        if self.latent_reg_weight < 0:
            raise ValueError("latent_reg_weight must be >= 0")
        if self.step_tolerance <= 0:
            raise ValueError("step_tolerance must be positive")


@dataclass(frozen=True)
class InferenceResult:
    latent: np.ndarray
    pose: RigidTransform
    objective: float
    converged: bool

    def __post_init__(self):
        lat = np.asarray(self.latent, dtype=np.float64)
        lat.flags.writeable = False
        object.__setattr__(self, "latent", lat)


def select_canonical(instances: Sequence[PointCloud]) -> int:
    """Index of the instance closest to all others by symmetric Chamfer."""
    if len(instances) < 2:
        raise ValueError("need at least two instances")
    totals = []
    for i, inst in enumerate(instances):
        total = 0.0
        for j, other in enumerate(instances):
            if i != j:
                total += symmetric_chamfer(inst, other)
        totals.append(total)
    return int(np.argmin(totals))  # argmin takes the lowest index on ties


def train_part_model(
    instances: Sequence[PointCloud],
    labels: Sequence[Mapping[str, np.ndarray]] | None = None,
    d: int | None = None,
    cpd: CpdConfig = CpdConfig(),
    part_category: str = "part",
) -> CanonicalPartModel:
    """Fit a canonical shape model to pose-aligned instances of one part.

    labels, when given, supplies per-instance label arrays; only the
    canonical instance's arrays are baked into the model. d defaults to
    min(K - 1, 4).
    """
    k = len(instances)
    if k < 2:
        raise ValueError("need at least two instances")
    if not 5 <= k <= 10:
        warnings.warn(f"{k} training instances is outside the expected 5..10 range")
    if d is None:
        d = min(k - 1, 4)
    if d < 1 or d > k - 1:
        raise ValueError("latent dimension must satisfy 1 <= d <= K - 1")

    canon_idx = select_canonical(instances)
    canon_points = instances[canon_idx].points
    n = canon_points.shape[0]

    if labels is None:
        labels = [inst.labels or {} for inst in instances]

    canon_labels: dict[str, np.ndarray] = {}
    if labels is not None:
        raw = labels[canon_idx]
        for key in sorted(raw):
            arr = np.asarray(raw[key], dtype=np.int64)
            # Keys whose class split collapses on the canonical instance
            # cannot anchor a label-aware distance; drop them up front.
            if 0 < arr.sum() < arr.size:
                canon_labels[key] = arr
            else:
                warnings.warn(f"dropping degenerate label key {key!r}")
    canonical = PointCloud(canon_points, canon_labels or None)

    fields = np.empty((k, 3 * n))
    for j, inst in enumerate(instances):
        try:
            field = cpd_nonrigid(canonical, inst, cpd)
        except (ValueError, RuntimeError) as exc:
            raise RuntimeError(f"registration failed on instance {j}: {exc}") from exc
        fields[j] = field.displacements.reshape(-1)

    u, s, vt = np.linalg.svd(fields, full_matrices=False)
    basis = vt[:d].T
    latents = fields @ basis
    total_power = float(np.square(s).sum())
    explained = np.square(s[:d]) / total_power if total_power > 0 else np.zeros(d)
    residuals = np.sqrt(
        np.sum((fields - latents @ basis.T) ** 2, axis=1) / n
    )

    scales = latents.std(axis=0)
    return CanonicalPartModel(
        part_category=part_category,
        canonical=canonical,
        basis=basis,
        latent_mean=latents.mean(axis=0),
        latent_scales=scales,
        training_latents=latents,
        training_residuals=residuals,
        explained_variance=explained,
        cpd_config=cpd,
    )


def reconstruct(model: CanonicalPartModel, latent: np.ndarray) -> PointCloud:
    """Canonical cloud displaced along the basis; labels ride along."""
    v = np.asarray(latent, dtype=np.float64).reshape(model.latent_dim)
    offset = (model.basis @ v).reshape(-1, 3)
    return PointCloud(model.canonical.points + offset, model.canonical.labels)


def _euler_zyx(yaw: float, pitch: float, roll: float) -> np.ndarray:
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def _pattern_search(fn, x0, steps0, max_evals, step_tolerance):
    """Coordinate pattern search with multiplicative step shrinking.

    Probes each coordinate in both directions, moving greedily on the
    first improvement; a full sweep without improvement halves every
    step. Converged means all steps shrank below step_tolerance times
    their initial size within the evaluation budget.
    """
    x = np.array(x0, dtype=np.float64)
    steps = np.array(steps0, dtype=np.float64)
    floor = steps * step_tolerance
    fx = fn(x)
    evals = 1
    while evals < max_evals:
        if np.all(steps <= floor):
            return x, fx, True
        improved = False
        for i in range(x.size):
            for sign in (1.0, -1.0):
                if evals >= max_evals:
                    return x, fx, False
                trial = x.copy()
                trial[i] += sign * steps[i]
                ft = fn(trial)
                evals += 1
                if ft < fx:
                    x, fx = trial, ft
                    improved = True
                    break
        if not improved:
            steps *= 0.5
    return x, fx, np.all(steps <= floor)


def _azimuth_anchor(cloud: PointCloud, keys: Sequence[str]) -> float:
    """Yaw angle derived from the cloud itself, so it rotates with the data.

    Relational label classes give the most stable anchor: the centroid of a
    key's positive class points from the cloud center toward the labeled
    feature. Clouds without one fall back to the planar covariance axis
    with the sign fixed by the skewness along it. Rotationally symmetric
    clouds have no usable anchor and return 0.
    """
    q = cloud.points - cloud.points.mean(axis=0)
    extent = cloud.extent()
    if extent == 0.0:
        return 0.0
    vec = np.zeros(2)
    for key in keys:
        if key == Z_KEY or cloud.labels is None or key not in cloud.labels:
            continue
        mask = cloud.label(key) == 1
        if 0 < mask.sum() < len(cloud):
            vec += q[mask, :2].mean(axis=0)
    if np.linalg.norm(vec) > 1e-6 * extent:
        return float(np.arctan2(vec[1], vec[0]))
    xy = q[:, :2]
    evals, evecs = np.linalg.eigh(xy.T @ xy / len(xy))
    if evals[1] - evals[0] <= 1e-6 * max(evals[1], 1e-30):
        return 0.0
    v = evecs[:, 1]
    if float(np.sum((xy @ v) ** 3)) < 0.0:
        v = -v
    return float(np.arctan2(v[1], v[0]))


def infer(
    model: CanonicalPartModel,
    observed: PointCloud,
    adjacency_keys: Iterable[str] = (),
    cfg: InferenceConfig = InferenceConfig(),
    seed: int = 0,
) -> InferenceResult:
    """Recover latent shape and rigid pose explaining an observed cloud.

    The objective sums the label-aware one-sided Chamfer distance from the
    observation into the posed reconstruction over every requested
    adjacency key plus the height key, and adds a whitened quadratic
    penalty pulling the latent toward the training mean. Restarts cover a
    grid of yaw initializations crossed with latent seeds (zero plus draws
    from the training latent statistics).

    The search runs in a frame anchored to the observation (its centroid
    and azimuth anchor), so a scene that has been shifted or spun about
    the vertical axis is optimized along the same trajectory and the
    returned pose moves with the scene.
    """
    if len(observed) == 0:
        raise ValueError("empty cloud")
    keys = sorted(set(adjacency_keys) | {Z_KEY})
    canon = model.canonical

    frame = RigidTransform(
        rotation_about_axis(np.array([0.0, 0.0, 1.0]), _azimuth_anchor(observed, keys)),
        observed.points.mean(axis=0),
    )
    observed = observed.transformed(frame.inverse())

    def label_of(cloud: PointCloud, key: str) -> np.ndarray:
        # The height key is a pure function of the cloud, so it can be
        # filled in on demand; every other key must be present.
        if key == Z_KEY and (cloud.labels is None or Z_KEY not in cloud.labels):
            return z_label_values(cloud)
        return cloud.label(key)

    for key in keys:
        lx = label_of(observed, key)
        ly = label_of(canon, key)
        for value in (0, 1):
            if (lx == value).any() and not (ly == value).any():
                raise ValueError("unmatched label class")

    x = observed.points
    x_subs = {}
    for key in keys:
        lx = label_of(observed, key)
        ly = label_of(canon, key)
        per_class = []
        for value in (0, 1):
            mx = lx == value
            if mx.any():
                per_class.append((x[mx], ly == value))
        x_subs[key] = per_class

    d = model.latent_dim
    n = model.point_count
    canon_pts = canon.points
    basis = model.basis
    mean = model.latent_mean
    scales = np.maximum(model.latent_scales, 1e-8)
    reg = cfg.latent_reg_weight
    obs_centroid = x.mean(axis=0)
    extent = observed.extent()
    if extent == 0.0:
        extent = 1.0

    def objective(params: np.ndarray) -> float:
        v = params[:d]
        rot = _euler_zyx(params[d], params[d + 1], params[d + 2])
        y = (canon_pts + (basis @ v).reshape(n, 3)) @ rot.T + params[d + 3:]
        total = reg * float(np.sum(((v - mean) / scales) ** 2))
        for key in keys:
            for x_sub, my in x_subs[key]:
                y_sub = y[my]
                d2 = (
                    np.einsum("ij,ij->i", x_sub, x_sub)[:, None]
                    + np.einsum("ij,ij->i", y_sub, y_sub)[None, :]
                    - 2.0 * (x_sub @ y_sub.T)
                )
                total += float(max(d2.min(axis=1).mean(), 0.0))
        return total

    rng = np.random.default_rng(seed)
    latent_seeds = [np.zeros(d)]
    for _ in range(cfg.restarts - 1):
        latent_seeds.append(mean + scales * rng.standard_normal(d))

    step_lat = np.maximum(model.latent_scales, 0.05 * max(model.latent_scales.max(), 1e-6))
    steps0 = np.concatenate([step_lat, [0.3, 0.12, 0.12], np.full(3, 0.08 * extent)])

    best = None
    ordinal = 0
    for yaw_idx in range(cfg.yaw_init_count):
        yaw = 2.0 * np.pi * yaw_idx / cfg.yaw_init_count
        rot0 = _euler_zyx(yaw, 0.0, 0.0)
        for v0 in latent_seeds:
            recon_centroid = canon_pts.mean(axis=0) + (basis @ v0).reshape(n, 3).mean(axis=0)
            t0 = obs_centroid - rot0 @ recon_centroid
            x0 = np.concatenate([v0, [yaw, 0.0, 0.0], t0])
            xf, fval, conv = _pattern_search(
                objective, x0, steps0, cfg.max_evals, cfg.step_tolerance
            )
            if np.isfinite(fval) and (best is None or fval < best[0]):
                best = (fval, ordinal, xf, conv)
            ordinal += 1

    if best is None:
        raise InferenceError("inference failed")
    fval, _, xf, conv = best
    pose = frame.compose(
        RigidTransform(_euler_zyx(xf[d], xf[d + 1], xf[d + 2]), xf[d + 3:])
    )
    return InferenceResult(latent=xf[:d].copy(), pose=pose, objective=fval, converged=bool(conv))


def warp_point_indices(
    model: CanonicalPartModel, fit: InferenceResult, points: np.ndarray
) -> np.ndarray:
    """Ground world-frame points in canonical point indices.

    Each point maps to the index of the nearest point of the posed
    reconstruction under the fit; exact ties resolve to the lowest index.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    recon = reconstruct(model, fit.latent)
    posed = fit.pose.apply(recon.points)
    diff = pts[:, None, :] - posed[None, :, :]
    d2 = np.einsum("qnk,qnk->qn", diff, diff)
    return d2.argmin(axis=1)


def model_to_dict(model: CanonicalPartModel) -> dict:
    cloud_payload: dict = {"points": model.canonical.points.tolist()}
    if model.canonical.labels:
        cloud_payload["labels"] = {
            k: model.canonical.labels[k].tolist() for k in sorted(model.canonical.labels)
        }
    cfg = model.cpd_config
    return {
        "part_category": model.part_category,
        "canonical": cloud_payload,
        "basis": model.basis.tolist(),
        "latent_mean": model.latent_mean.tolist(),
        "latent_scales": model.latent_scales.tolist(),
        "training_latents": model.training_latents.tolist(),
        "training_residuals": model.training_residuals.tolist(),
        "explained_variance": model.explained_variance.tolist(),
        "cpd_config": {
            "beta": cfg.beta,
            "lam": cfg.lam,
            "max_iterations": cfg.max_iterations,
            "tolerance": cfg.tolerance,
            "outlier_weight": cfg.outlier_weight,
        },
    }


def model_from_dict(payload: Mapping) -> CanonicalPartModel:
    cloud = payload["canonical"]
    canonical = PointCloud(np.asarray(cloud["points"]), cloud.get("labels"))
    cfg = payload["cpd_config"]
    return CanonicalPartModel(
        part_category=payload["part_category"],
        canonical=canonical,
        basis=np.asarray(payload["basis"], dtype=np.float64),
        latent_mean=np.asarray(payload["latent_mean"], dtype=np.float64),
        latent_scales=np.asarray(payload["latent_scales"], dtype=np.float64),
        training_latents=np.asarray(payload["training_latents"], dtype=np.float64),
        training_residuals=np.asarray(payload["training_residuals"], dtype=np.float64),
        explained_variance=np.asarray(payload["explained_variance"], dtype=np.float64),
        cpd_config=CpdConfig(
            beta=cfg["beta"],
            lam=cfg["lam"],
            max_iterations=cfg["max_iterations"],
            tolerance=cfg["tolerance"],
            outlier_weight=cfg["outlier_weight"],
        ),
    )


def save_model(path, model: CanonicalPartModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> CanonicalPartModel:
    return model_from_dict(json.loads(Path(path).read_text()))
