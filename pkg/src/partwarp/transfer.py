"""One-shot transfer of a demonstrated object-object arrangement.

The pipeline grounds contact-region points from a single demonstration in
the canonical frames of per-part shape models, re-localizes them on novel
objects through model fits, and solves for the rigid motion of the placed
object that best reproduces the demonstrated relation set. A whole-object
variant of the same pipeline (single part, height labels only) serves as
the comparison baseline.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geom import (
    PointCloud,
    RigidTransform,
    adjacency_label_values,
    cloud_from_dict,
    cloud_to_dict,
    rotation_geodesic,
    transform_from_dict,
    transform_to_dict,
    z_label_values,
)
from .registration import kabsch
from .shapemodel import (
    CanonicalPartModel,
    InferenceConfig,
    InferenceResult,
    infer,
    reconstruct,
    warp_point_indices,
)

__all__ = [
    "PartDecomposedObject",
    "Demonstration",
    "InteractionPointSet",
    "RelationSet",
    "TransferResult",
    "PipelineConfig",
    "DemoContext",
    "label_parts",
    "fit_parts",
    "merge_object",
    "extract_interaction_points",
    "transfer_points",
    "align_pair",
    "select_relevant_relations",
    "optimize_placement",
    "process_demonstration",
    "transfer_skill",
    "whole_object_baseline",
    "scene_extent",
    "object_to_dict",
    "object_from_dict",
    "demo_to_dict",
    "demo_from_dict",
    "save_demo",
    "load_demo",
    "result_to_dict",
]

Z_KEY = "z"


@dataclass(frozen=True)
class PartDecomposedObject:
    """A segmented object: named part clouds sharing one world frame."""

    category: str
    parts: Mapping[str, PointCloud]
    dropped_parts: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.parts:
            raise ValueError("object needs at least one part")
        object.__setattr__(self, "parts", dict(self.parts))
        object.__setattr__(self, "dropped_parts", tuple(self.dropped_parts))

    def part_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.parts))

    def all_points(self) -> np.ndarray:
        return np.concatenate([self.parts[p].points for p in self.part_names()])

    def extent(self) -> float:
        pts = self.all_points()
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    def transformed(self, t: RigidTransform) -> "PartDecomposedObject":
        return PartDecomposedObject(
            self.category,
            {name: cloud.transformed(t) for name, cloud in self.parts.items()},
            self.dropped_parts,
        )


@dataclass(frozen=True)
class Demonstration:
    """Initial clouds of two objects plus the goal transform of the first."""

    object_a: PartDecomposedObject
    object_b: PartDecomposedObject
    t_ab: RigidTransform


@dataclass(frozen=True)
class InteractionPointSet:
    """Contact pairs for one part pair, grounded in canonical indices.

    demo_displacements holds, per pair, the world-frame offset from the
    second object's point to the first object's point in the demonstrated
    goal configuration. displacements_n holds the same vectors expressed
    in part n's canonical frame; a novel fit of part n re-expresses them
    in its own scene, which keeps the replayed contact geometry attached
    to the reference part rather than to the demo's world axes. offsets_m
    and offsets_n keep each demo point's residual from its grounding
    point, expressed in the canonical frame, so re-localization is not
    quantized to the model's discrete points. source_indices keeps the
    raw demo cloud indices the pairs came from.
    """

    part_m: str
    part_n: str
    pairs: np.ndarray
    demo_displacements: np.ndarray
    displacements_n: np.ndarray
    offsets_m: np.ndarray
    offsets_n: np.ndarray
    source_indices: np.ndarray

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64)
        k = pairs.shape[0] if pairs.ndim == 2 else 0
        if pairs.ndim != 2 or pairs.shape[1] != 2 or k < 3:
            raise ValueError("need at least three interaction pairs")
        arrays = {"pairs": pairs, "source_indices": np.asarray(self.source_indices, np.int64)}
        for name in ("demo_displacements", "displacements_n", "offsets_m", "offsets_n"):
            arrays[name] = np.asarray(getattr(self, name), dtype=np.float64)
            if arrays[name].shape != (k, 3):
                raise ValueError("inconsistent interaction point arrays")
        if arrays["source_indices"].shape != (k, 2):
            raise ValueError("inconsistent interaction point arrays")
        for name, arr in arrays.items():
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class RelationSet:
    relations: tuple[tuple[str, str], ...]
    score: float


@dataclass(frozen=True)
class TransferResult:
    t_final: RigidTransform
    per_relation_transforms: Mapping[tuple[str, str], RigidTransform]
    objective: float
    relations: tuple[tuple[str, str], ...]
    diagnostics: Mapping[str, float]
    transferred: Mapping[tuple[str, str], tuple[np.ndarray, np.ndarray]] | None = None
    fits_a: Mapping[str, InferenceResult] | None = None
    fits_b: Mapping[str, InferenceResult] | None = None


@dataclass(frozen=True)
class PipelineConfig:
    delta_scale: float = 0.02
    k_max: int = 32
    label_ratio: float = 0.4
    adjacency_scale: float = 0.02
    refine_iterations: int = 40
    max_relation_pairs: int = 12
    symmetric_objective: bool = False
    inference: InferenceConfig = field(default_factory=InferenceConfig)

    def __post_init__(self):
        if self.delta_scale <= 0 or self.k_max < 3:
            raise ValueError("delta_scale must be positive and k_max >= 3")
        if self.max_relation_pairs < 1:
            raise ValueError("max_relation_pairs must be >= 1")


@dataclass(frozen=True)
class DemoContext:
    """Everything derived from one demonstration, reusable across scenes."""

    demo: Demonstration
    labeled_a: PartDecomposedObject
    labeled_b: PartDecomposedObject
    fits_a: Mapping[str, InferenceResult]
    fits_b: Mapping[str, InferenceResult]
    interactions: Mapping[tuple[str, str], InteractionPointSet]
    relations: RelationSet


def _object_extent(*objects: PartDecomposedObject) -> float:
    pts = np.concatenate([o.all_points() for o in objects])
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def scene_extent(demo: Demonstration) -> float:
    """Bounding-box diagonal of the demo scene in its goal configuration."""
    goal_a = demo.object_a.transformed(demo.t_ab)
    return _object_extent(goal_a, demo.object_b)


def label_parts(
    obj: PartDecomposedObject, ratio: float = 0.4, adjacency_scale: float = 0.02
) -> PartDecomposedObject:
    """Attach height labels and relational labels between adjacent parts.

    Two parts are adjacent when their closest points come within
    adjacency_scale times the object extent. Every part receives the
    height key; each adjacent pair receives mutual adj:<other> keys.
    """
    names = obj.part_names()
    threshold = adjacency_scale * obj.extent()
    labeled: dict[str, dict[str, np.ndarray]] = {name: {} for name in names}
    for name in names:
        labeled[name][Z_KEY] = z_label_values(obj.parts[name])
    for a, b in itertools.combinations(names, 2):
        ca, cb = obj.parts[a], obj.parts[b]
        diff = ca.points[:, None, :] - cb.points[None, :, :]
        gap = float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).min()))
        if gap < threshold:
            labeled[a][f"adj:{b}"] = adjacency_label_values(ca, cb, ratio)
            labeled[b][f"adj:{a}"] = adjacency_label_values(cb, ca, ratio)
    return PartDecomposedObject(
        obj.category,
        {name: obj.parts[name].with_labels(labeled[name]) for name in names},
        obj.dropped_parts,
    )


def merge_object(obj: PartDecomposedObject) -> PartDecomposedObject:
    """Collapse an object to a single unlabeled part named 'whole'."""
    return PartDecomposedObject(obj.category, {"whole": PointCloud(obj.all_points())})


def _part_seed(seed: int, name: str) -> int:
    # Seeds depend on the part name only, never on which object or scene the
    # part came from, so fitting the same cloud twice gives the same answer.
    digest = sum(ord(c) * (i + 1) for i, c in enumerate(name))
    return int(np.random.SeedSequence((seed, digest)).generate_state(1)[0])


def fit_parts(
    obj: PartDecomposedObject,
    models: Mapping[str, CanonicalPartModel],
    cfg: InferenceConfig = InferenceConfig(),
    seed: int = 0,
    parts: Sequence[str] | None = None,
) -> dict[str, InferenceResult]:
    """Fit each requested part of a labeled object with its model."""
    out: dict[str, InferenceResult] = {}
    for name in sorted(parts) if parts is not None else obj.part_names():
        model = models[name]
        cloud = obj.parts[name]
        keys = sorted(
            (set(model.canonical.label_keys()) & set(cloud.label_keys())) - {Z_KEY}
        )
        out[name] = infer(model, cloud, keys, cfg, seed=_part_seed(seed, name))
    return out


def extract_interaction_points(
    demo: Demonstration,
    models_a: Mapping[str, CanonicalPartModel],
    models_b: Mapping[str, CanonicalPartModel],
    fits_a: Mapping[str, InferenceResult],
    fits_b: Mapping[str, InferenceResult],
    delta: float | None = None,
    k_max: int = 32,
    delta_scale: float = 0.02,
) -> dict[tuple[str, str], InteractionPointSet]:
    """Collect contact-region point pairs from the demonstrated goal.

    For every cross-object part pair, all point pairs closer than delta in
    the goal configuration are found and the k_max closest kept; pairs
    with fewer than three hits carry no interaction and are skipped. When
    delta is not given it defaults to delta_scale times the goal-scene
    bounding-box diagonal.
    """
    if delta is None:
        delta = delta_scale * scene_extent(demo)
    out: dict[tuple[str, str], InteractionPointSet] = {}
    for m in demo.object_a.part_names():
        cloud_m = demo.object_a.parts[m]
        goal_m = demo.t_ab.apply(cloud_m.points)
        for n in demo.object_b.part_names():
            cloud_n = demo.object_b.parts[n]
            diff = goal_m[:, None, :] - cloud_n.points[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            ii, jj = np.nonzero(d2 <= delta * delta)
            if ii.size < 3:
                continue
            order = np.lexsort((jj, ii, d2[ii, jj]))[:k_max]
            ii, jj = ii[order], jj[order]
            ci = warp_point_indices(models_a[m], fits_a[m], cloud_m.points[ii])
            cj = warp_point_indices(models_b[n], fits_b[n], cloud_n.points[jj])
            canon_m = reconstruct(models_a[m], fits_a[m].latent).points
            canon_n = reconstruct(models_b[n], fits_b[n].latent).points
            off_m = fits_a[m].pose.inverse().apply(cloud_m.points[ii]) - canon_m[ci]
            off_n = fits_b[n].pose.inverse().apply(cloud_n.points[jj]) - canon_n[cj]
            displacements = goal_m[ii] - cloud_n.points[jj]
            out[(m, n)] = InteractionPointSet(
                part_m=m,
                part_n=n,
                pairs=np.stack([ci, cj], axis=1),
                demo_displacements=displacements,
                displacements_n=displacements @ fits_b[n].pose.rotation,
                offsets_m=off_m,
                offsets_n=off_n,
                source_indices=np.stack([ii, jj], axis=1),
            )
    if not out:
        raise ValueError("no interaction found in demonstration")
    return out


def transfer_points(
    ips: InteractionPointSet,
    model_m: CanonicalPartModel,
    fit_m: InferenceResult,
    model_n: CanonicalPartModel,
    fit_n: InferenceResult,
) -> tuple[np.ndarray, np.ndarray]:
    """World positions of the interaction points on a novel object pair.

    Each point is the fitted reconstruction at its canonical index plus
    the canonical-frame residual recorded at extraction time, so contact
    geometry survives the model's finite point resolution.
    """
    recon_m = reconstruct(model_m, fit_m.latent)
    recon_n = reconstruct(model_n, fit_n.latent)
    pm = fit_m.pose.apply(recon_m.points[ips.pairs[:, 0]] + ips.offsets_m)
    pn = fit_n.pose.apply(recon_n.points[ips.pairs[:, 1]] + ips.offsets_n)
    return pm, pn


def align_pair(
    transferred_m: np.ndarray,
    transferred_n: np.ndarray,
    demo_displacements: np.ndarray,
) -> RigidTransform:
    """Rigid transform reproducing the demonstrated contact offsets.

    Minimizes sum_k ||T p_m_k - (p_n_k + d_k)||^2 over rigid T.
    """
    return kabsch(transferred_m, np.asarray(transferred_n) + np.asarray(demo_displacements))


def _chordal_mean(transforms: Sequence[RigidTransform]) -> RigidTransform:
    stack = np.sum([t.rotation for t in transforms], axis=0)
    u, _, vt = np.linalg.svd(stack)
    rot = u @ np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt))]) @ vt
    trans = np.mean([t.translation for t in transforms], axis=0)
    return RigidTransform(rot, trans)


def _alignment_groups(
    novel_a: PartDecomposedObject,
    relations: Sequence[tuple[str, str]],
    targets: Mapping[tuple[str, str], PointCloud],
    symmetric: bool,
):
    """Expand relations into (x_subset, y_subset, weight, part) match groups.

    Each group is one label class of one key of one relation; its weight
    makes the per-group sum of squared distances equal the class-mean term
    of the placement objective.
    """
    groups = []
    for rel in relations:
        m = rel[0]
        x_cloud = novel_a.parts[m]
        y_cloud = targets[rel]
        keys = sorted(set(x_cloud.label_keys()) & set(y_cloud.label_keys()))
        if not keys:
            raise ValueError(f"no shared label keys for relation {rel}")
        for key in keys:
            lx = x_cloud.label(key)
            ly = y_cloud.label(key)
            for value in (0, 1):
                mx = lx == value
                if not mx.any():
                    continue
                my = ly == value
                if not my.any():
                    raise ValueError("unmatched label class")
                groups.append((x_cloud.points[mx], y_cloud.points[my], 1.0 / mx.sum(), m, False))
                if symmetric:
                    groups.append(
                        (x_cloud.points[mx], y_cloud.points[my], 1.0 / my.sum(), m, True)
                    )
    return groups


def _group_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", a, a)[:, None]
        + np.einsum("ij,ij->i", b, b)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _placement_objective(groups, t: RigidTransform) -> tuple[float, dict[str, float]]:
    total = 0.0
    per_part: dict[str, float] = {}
    for x, y, weight, part, reverse in groups:
        tx = t.apply(x)
        d2 = _group_sqdist(y, tx) if reverse else _group_sqdist(tx, y)
        term = weight * float(d2.min(axis=1).sum())
        total += term
        per_part[part] = per_part.get(part, 0.0) + term
    return total, per_part


def _refine_placement(groups, init: RigidTransform, iterations: int) -> tuple[RigidTransform, float]:
    t = init
    best, _ = _placement_objective(groups, t)
    for _ in range(iterations):
        sources, matched, weights = [], [], []
        for x, y, weight, _part, reverse in groups:
            tx = t.apply(x)
            if reverse:
                idx = _group_sqdist(y, tx).argmin(axis=1)
                sources.append(x[idx])
                matched.append(y)
                weights.append(np.full(len(y), weight))
            else:
                idx = _group_sqdist(tx, y).argmin(axis=1)
                sources.append(x)
                matched.append(y[idx])
                weights.append(np.full(len(x), weight))
        try:
            candidate = kabsch(
                np.concatenate(sources), np.concatenate(matched), np.concatenate(weights)
            )
        except ValueError:
            break
        value, _ = _placement_objective(groups, candidate)
        if value < best - 1e-15:
            t, best = candidate, value
        else:
            break
    return t, best


def optimize_placement(
    novel_a: PartDecomposedObject,
    novel_b: PartDecomposedObject,
    relations: Sequence[tuple[str, str]],
    models_a: Mapping[str, CanonicalPartModel],
    models_b: Mapping[str, CanonicalPartModel],
    fits_a: Mapping[str, InferenceResult],
    fits_b: Mapping[str, InferenceResult],
    interactions: Mapping[tuple[str, str], InteractionPointSet],
    cfg: PipelineConfig = PipelineConfig(),
) -> TransferResult:
    """Solve for the placed-object transform satisfying the relation set.

    Each relation contributes a per-relation candidate transform from its
    aligned interaction points; the final transform is chosen by a local
    correspondence refinement of the label-aware Chamfer objective between
    the moved observed parts and the candidate-posed reconstructions,
    started from every candidate plus their average.
    """
    relations = sorted(relations)
    per_relation: dict[tuple[str, str], RigidTransform] = {}
    transferred: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
    targets: dict[tuple[str, str], PointCloud] = {}
    for rel in relations:
        m, n = rel
        ips = interactions[rel]
        pm, pn = transfer_points(ips, models_a[m], fits_a[m], models_b[n], fits_b[n])
        t_rel = align_pair(pm, pn, ips.displacements_n @ fits_b[n].pose.rotation.T)
        per_relation[rel] = t_rel
        transferred[rel] = (pm, pn)
        recon = reconstruct(models_a[m], fits_a[m].latent)
        posed = recon.transformed(fits_a[m].pose)
        targets[rel] = posed.transformed(t_rel)

    groups = _alignment_groups(novel_a, relations, targets, cfg.symmetric_objective)
    inits = [per_relation[rel] for rel in relations]
    if len(inits) > 1:
        inits.append(_chordal_mean(inits))

    best: tuple[float, int, RigidTransform] | None = None
    for ordinal, init in enumerate(inits):
        t, value = _refine_placement(groups, init, cfg.refine_iterations)
        if best is None or value < best[0]:
            best = (value, ordinal, t)
    assert best is not None
    objective, _, t_final = best
    _, per_part = _placement_objective(groups, t_final)

    return TransferResult(
        t_final=t_final,
        per_relation_transforms=per_relation,
        objective=objective,
        relations=tuple(relations),
        diagnostics=per_part,
        transferred=transferred,
        fits_a=dict(fits_a),
        fits_b=dict(fits_b),
    )


def select_relevant_relations(
    demo: Demonstration,
    models_a: Mapping[str, CanonicalPartModel],
    models_b: Mapping[str, CanonicalPartModel],
    cfg: PipelineConfig = PipelineConfig(),
    seed: int = 0,
    labeled: tuple[PartDecomposedObject, PartDecomposedObject] | None = None,
    fits: tuple[Mapping[str, InferenceResult], Mapping[str, InferenceResult]] | None = None,
    interactions: Mapping[tuple[str, str], InteractionPointSet] | None = None,
) -> RelationSet:
    """Pick the interaction-bearing relation subset that best replays the demo.

    Every non-empty subset of the interaction-bearing part pairs is scored
    by re-running the placement optimization against the demonstration
    itself and measuring how closely the demonstrated goal transform is
    recreated (translation error over scene extent plus rotation geodesic
    over pi). Ties prefer smaller, then lexicographically earlier subsets.
    """
    if labeled is None:
        labeled = (
            label_parts(demo.object_a, cfg.label_ratio, cfg.adjacency_scale),
            label_parts(demo.object_b, cfg.label_ratio, cfg.adjacency_scale),
        )
    labeled_a, labeled_b = labeled
    if fits is None:
        fits = (
            fit_parts(labeled_a, models_a, cfg.inference, seed),
            fit_parts(labeled_b, models_b, cfg.inference, seed),
        )
    fits_a, fits_b = fits
    if interactions is None:
        interactions = extract_interaction_points(
            Demonstration(labeled_a, labeled_b, demo.t_ab),
            models_a,
            models_b,
            fits_a,
            fits_b,
            k_max=cfg.k_max,
            delta_scale=cfg.delta_scale,
        )
    bearing = sorted(interactions)
    if len(bearing) > cfg.max_relation_pairs:
        raise ValueError(
            f"{len(bearing)} interaction-bearing pairs exceeds the cap of {cfg.max_relation_pairs}"
        )
    extent = scene_extent(demo)

    best_key: tuple[float, int, tuple] | None = None
    best_set: RelationSet | None = None
    degenerate: ValueError | None = None
    for size in range(1, len(bearing) + 1):
        for subset in itertools.combinations(bearing, size):
            try:
                result = optimize_placement(
                    labeled_a,
                    labeled_b,
                    subset,
                    models_a,
                    models_b,
                    fits_a,
                    fits_b,
                    interactions,
                    cfg,
                )
            except ValueError as exc:
                # A subset whose pairs are too degenerate to align (for
                # example a handful of near-collinear contact points) simply
                # cannot be the demo's explanation; score it out.
                degenerate = exc
                continue
            trans_err = float(
                np.linalg.norm(result.t_final.translation - demo.t_ab.translation)
            )
            score = trans_err / extent + rotation_geodesic(result.t_final, demo.t_ab) / np.pi
            key = (score, size, subset)
            if best_key is None or key < best_key:
                best_key, best_set = key, RelationSet(subset, score)
    if best_set is None:
        raise degenerate if degenerate is not None else ValueError("no relation candidates")
    return best_set


def process_demonstration(
    demo: Demonstration,
    models_a: Mapping[str, CanonicalPartModel],
    models_b: Mapping[str, CanonicalPartModel],
    cfg: PipelineConfig = PipelineConfig(),
    seed: int = 0,
) -> DemoContext:
    """Label, fit, extract, and select relations for a demonstration once."""
    labeled_a = label_parts(demo.object_a, cfg.label_ratio, cfg.adjacency_scale)
    labeled_b = label_parts(demo.object_b, cfg.label_ratio, cfg.adjacency_scale)
    fits_a = fit_parts(labeled_a, models_a, cfg.inference, seed)
    fits_b = fit_parts(labeled_b, models_b, cfg.inference, seed)
    interactions = extract_interaction_points(
        Demonstration(labeled_a, labeled_b, demo.t_ab),
        models_a,
        models_b,
        fits_a,
        fits_b,
        k_max=cfg.k_max,
        delta_scale=cfg.delta_scale,
    )
    relations = select_relevant_relations(
        demo,
        models_a,
        models_b,
        cfg,
        seed,
        labeled=(labeled_a, labeled_b),
        fits=(fits_a, fits_b),
        interactions=interactions,
    )
    return DemoContext(demo, labeled_a, labeled_b, fits_a, fits_b, interactions, relations)


def transfer_skill(
    ctx: DemoContext,
    models_a: Mapping[str, CanonicalPartModel],
    models_b: Mapping[str, CanonicalPartModel],
    novel_a: PartDecomposedObject,
    novel_b: PartDecomposedObject,
    cfg: PipelineConfig = PipelineConfig(),
    seed: int = 0,
) -> TransferResult:
    """Apply a processed demonstration to a novel object pair."""
    labeled_a = label_parts(novel_a, cfg.label_ratio, cfg.adjacency_scale)
    labeled_b = label_parts(novel_b, cfg.label_ratio, cfg.adjacency_scale)
    relations = ctx.relations.relations
    parts_a = sorted({m for m, _ in relations})
    parts_b = sorted({n for _, n in relations})
    fits_a = fit_parts(labeled_a, models_a, cfg.inference, seed, parts=parts_a)
    fits_b = fit_parts(labeled_b, models_b, cfg.inference, seed, parts=parts_b)
    return optimize_placement(
        labeled_a,
        labeled_b,
        relations,
        models_a,
        models_b,
        fits_a,
        fits_b,
        ctx.interactions,
        cfg,
    )


def whole_object_baseline(
    demo: Demonstration,
    models_a: Mapping[str, CanonicalPartModel],
    models_b: Mapping[str, CanonicalPartModel],
    novel_a: PartDecomposedObject,
    novel_b: PartDecomposedObject,
    cfg: PipelineConfig = PipelineConfig(),
    seed: int = 0,
    ctx: DemoContext | None = None,
) -> TransferResult:
    """Run the identical pipeline on single-part objects with height labels only.

    models_a/models_b must map the part name 'whole' to models trained on
    merged clouds. The demonstration and novel objects are merged here.
    """
    if ctx is None:
        merged_demo = Demonstration(
            merge_object(demo.object_a), merge_object(demo.object_b), demo.t_ab
        )
        ctx = process_demonstration(merged_demo, models_a, models_b, cfg, seed)
    return transfer_skill(
        ctx, models_a, models_b, merge_object(novel_a), merge_object(novel_b), cfg, seed
    )


def object_to_dict(obj: PartDecomposedObject) -> dict:
    return {
        "category": obj.category,
        "parts": {name: cloud_to_dict(obj.parts[name]) for name in obj.part_names()},
    }


def object_from_dict(payload: Mapping) -> PartDecomposedObject:
    return PartDecomposedObject(
        payload["category"],
        {name: cloud_from_dict(part) for name, part in payload["parts"].items()},
    )


def demo_to_dict(demo: Demonstration) -> dict:
    return {
        "object_a": object_to_dict(demo.object_a),
        "object_b": object_to_dict(demo.object_b),
        "t_ab": transform_to_dict(demo.t_ab),
    }


def demo_from_dict(payload: Mapping) -> Demonstration:
    return Demonstration(
        object_from_dict(payload["object_a"]),
        object_from_dict(payload["object_b"]),
        transform_from_dict(payload["t_ab"]),
    )


def save_demo(path, demo: Demonstration) -> None:
    Path(path).write_text(json.dumps(demo_to_dict(demo)))


def load_demo(path) -> Demonstration:
    return demo_from_dict(json.loads(Path(path).read_text()))


def result_to_dict(result: TransferResult) -> dict:
    return {
        "t_final": transform_to_dict(result.t_final),
        "relations": [list(rel) for rel in result.relations],
        "per_relation_transforms": {
            f"{m}|{n}": transform_to_dict(t)
            for (m, n), t in sorted(result.per_relation_transforms.items())
        },
        "objective": result.objective,
        "diagnostics": {k: result.diagnostics[k] for k in sorted(result.diagnostics)},
    }
