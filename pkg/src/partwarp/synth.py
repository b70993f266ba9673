"""Analytic benchmark world: parametric object families with exact geometry.

Four categories of tabletop objects (mugs, peg racks, bowls, teapots) are
built from closed-form primitives. Each part exposes three consistent views
of the same geometry: a boundary sampler with a stored surface
parameterization (so corresponding points can be re-evaluated on any other
member of the family), an exact or conservative signed distance function,
and a small set of named feature points used by task success checks.

Signed distances are exact on every sampled boundary point and never
overestimate the true distance anywhere, so penetration measured through
them is trustworthy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .geom import PointCloud, RigidTransform, rotation_about_axis
from .transfer import Demonstration, PartDecomposedObject

__all__ = [
    "ParametricObjectSpec",
    "CameraView",
    "AnalyticSdf",
    "CorrespondenceMap",
    "ObjectFeatures",
    "DemoScene",
    "CATEGORY_PARTS",
    "CATEGORY_DEFAULTS",
    "TASKS",
    "default_spec",
    "sample_spec",
    "generate",
    "features",
    "partial_view",
    "goal_transform",
    "task_predicate",
    "generate_demo",
    "generate_demo_scene",
    "penetration_depth",
    "task_categories",
]

# Shared construction constants. Vessel walls are 4 mm, bowls 5 mm; handles
# are capsule arcs spanning 190 degrees whose ring center sits 2 mm outside
# the vessel wall; rack pegs tilt upward by 0.1 rad.
WALL = 0.004
BOWL_WALL = 0.005
HANDLE_ARC = math.radians(95.0)
RING_STANDOFF = 0.002
PEG_TILT = 0.10
BASE_HEIGHT = 0.008
LID_PLATE_HEIGHT = 0.006
LID_KNOB_HEIGHT = 0.012
LID_KNOB_RADIUS = 0.007
SPOUT_ROOT_RADIUS = 0.011
SPOUT_TIP_RADIUS = 0.006

# Hanging construction for mug-on-rack goals: gap between peg surface and
# handle tube at the resting contact, and between peg surface and cup wall.
# Goal configurations keep a few millimetres of air so that a predicted
# placement can miss by a couple of millimetres without clipping.
HANG_TUBE_GAP = 0.0025
HANG_WALL_GAP = 0.005
HANG_FRACTION = 0.60
BOWL_REST_GAP = 0.002
POUR_HEIGHT = 0.006

CATEGORY_PARTS: dict[str, tuple[str, ...]] = {
    "mug": ("cup", "handle"),
    "rack": ("base", "trunk", "peg"),
    "bowl": ("bowl",),
    "teapot": ("body", "spout", "handle", "lid"),
}

CATEGORY_DEFAULTS: dict[str, dict[str, float]] = {
    "mug": {
        "cup_radius": 0.040,
        "cup_height": 0.090,
        "handle_radius": 0.030,
        "handle_thickness": 0.0045,
        "handle_height": 0.045,
    },
    "rack": {
        "base_radius": 0.055,
        "trunk_radius": 0.010,
        "trunk_height": 0.240,
        "peg_length": 0.075,
        "peg_radius": 0.008,
        "peg_height": 0.160,
        "peg_angle": 0.0,
    },
    "bowl": {
        "bowl_radius": 0.055,
        "bowl_angle": 1.65,
    },
    "teapot": {
        "body_radius": 0.050,
        "body_height": 0.095,
        "spout_length": 0.075,
        "spout_angle": 0.60,
        "handle_radius": 0.026,
        "lid_radius": 0.049,
    },
}

TASKS: dict[str, tuple[str, str]] = {
    "mug_on_rack": ("mug", "rack"),
    "bowl_on_mug": ("bowl", "mug"),
    "teapot_pour_align": ("teapot", "mug"),
}

_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])


def _validate_mug(p: Mapping[str, float]) -> None:
    r, h = p["cup_radius"], p["cup_height"]
    rr, rt, zh = p["handle_radius"], p["handle_thickness"], p["handle_height"]
    if r < WALL + 0.008:
        raise ValueError(f"cup_radius {r} leaves no interior after the wall")
    if h < 0.04:
        raise ValueError(f"cup_height {h} is too small")
    if rt < 0.002:
        raise ValueError(f"handle_thickness {rt} is too thin to sample")
    if rr - rt < 0.011:
        raise ValueError(f"handle_radius {rr} leaves the handle opening too small")
    if zh - rr - rt < 0.002:
        raise ValueError(f"handle_height {zh} pushes the handle below the cup base")
    if zh + rr + rt > h + 1e-9:
        raise ValueError(f"handle_height {zh} pushes the handle above the rim")


def _validate_rack(p: Mapping[str, float]) -> None:
    br, tr, th = p["base_radius"], p["trunk_radius"], p["trunk_height"]
    pl, pr, ph = p["peg_length"], p["peg_radius"], p["peg_height"]
    if tr < 0.005:
        raise ValueError(f"trunk_radius {tr} is too thin")
    if br < tr + 0.01:
        raise ValueError(f"base_radius {br} does not clear the trunk")
    if th < 0.05:
        raise ValueError(f"trunk_height {th} is too short")
    if pl < 0.03:
        raise ValueError(f"peg_length {pl} is too short to hang anything")
    if not 0.003 <= pr <= 0.0105:
        raise ValueError(f"peg_radius {pr} is outside the usable range")
    if not BASE_HEIGHT + 0.015 <= ph <= BASE_HEIGHT + th - 0.010:
        raise ValueError(f"peg_height {ph} is off the trunk")


def _validate_bowl(p: Mapping[str, float]) -> None:
    rho, alpha = p["bowl_radius"], p["bowl_angle"]
    if rho < 0.03:
        raise ValueError(f"bowl_radius {rho} is too small")
    if not 1.2 <= alpha <= 1.9:
        raise ValueError(f"bowl_angle {alpha} is outside the cap range")


def _validate_teapot(p: Mapping[str, float]) -> None:
    rb, hb = p["body_radius"], p["body_height"]
    ls, sa = p["spout_length"], p["spout_angle"]
    rr, rl = p["handle_radius"], p["lid_radius"]
    if rb < WALL + 0.012:
        raise ValueError(f"body_radius {rb} leaves no interior after the wall")
    if hb < 0.06:
        raise ValueError(f"body_height {hb} is too small")
    if not 0.3 <= sa <= 0.9:
        raise ValueError(f"spout_angle {sa} is outside the usable range")
    if ls < 0.04:
        raise ValueError(f"spout_length {ls} is too short")
    if rr - 0.005 < 0.011:
        raise ValueError(f"handle_radius {rr} leaves the handle opening too small")
    if 0.55 * hb + rr + 0.005 > hb + 1e-9:
        raise ValueError(f"handle_radius {rr} pushes the handle above the rim")
    if rl < rb - WALL + 0.001:
        raise ValueError(f"lid_radius {rl} does not cover the opening")
    if rl > rb + 0.012:
        raise ValueError(f"lid_radius {rl} overhangs the body")


_VALIDATORS = {
    "mug": _validate_mug,
    "rack": _validate_rack,
    "bowl": _validate_bowl,
    "teapot": _validate_teapot,
}


@dataclass(frozen=True)
class ParametricObjectSpec:
    """Immutable description of one family member plus sampling controls."""

    category: str
    params: Mapping[str, float]
    seed: int = 0
    points_per_part: int = 400
    noise: float = 0.0

    def __post_init__(self):
        if self.category not in CATEGORY_PARTS:
            raise ValueError(f"unknown category {self.category!r}")
        defaults = CATEGORY_DEFAULTS[self.category]
        params = {k: float(v) for k, v in dict(self.params).items()}
        missing = sorted(set(defaults) - set(params))
        extra = sorted(set(params) - set(defaults))
        if missing:
            raise ValueError(f"missing parameter {missing[0]!r}")
        if extra:
            raise ValueError(f"unknown parameter {extra[0]!r}")
        if not all(np.isfinite(v) for v in params.values()):
            raise ValueError("parameters must be finite")
        if self.points_per_part < 10:
            raise ValueError("points_per_part must be at least 10")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        _VALIDATORS[self.category](params)
        object.__setattr__(self, "params", params)

    def part_names(self) -> tuple[str, ...]:
        return CATEGORY_PARTS[self.category]


def default_spec(
    category: str,
    seed: int = 0,
    points_per_part: int = 400,
    noise: float = 0.0,
    **overrides: float,
) -> ParametricObjectSpec:
    params = dict(CATEGORY_DEFAULTS[category])
    params.update(overrides)
    return ParametricObjectSpec(category, params, seed, points_per_part, noise)


def _clamp_params(category: str, p: dict[str, float]) -> dict[str, float]:
    """Nudge randomly drawn parameters back into the valid joint region."""
    q = dict(p)
    if category == "mug":
        q["cup_radius"] = max(q["cup_radius"], WALL + 0.009)
        q["handle_thickness"] = min(max(q["handle_thickness"], 0.0025), 0.007)
        q["handle_radius"] = max(q["handle_radius"], q["handle_thickness"] + 0.0115)
        q["cup_height"] = max(q["cup_height"], 0.045)
        rr, rt = q["handle_radius"], q["handle_thickness"]
        rr = min(rr, (q["cup_height"] - 0.003) / 2.0 - rt)
        q["handle_radius"] = rr
        lo = rr + rt + 0.003
        hi = q["cup_height"] - rr - rt
        q["handle_height"] = float(np.clip(q["handle_height"], lo, max(hi, lo)))
    elif category == "rack":
        q["trunk_radius"] = max(q["trunk_radius"], 0.006)
        q["base_radius"] = max(q["base_radius"], q["trunk_radius"] + 0.012)
        q["trunk_height"] = max(q["trunk_height"], 0.06)
        q["peg_length"] = max(q["peg_length"], 0.035)
        q["peg_radius"] = float(np.clip(q["peg_radius"], 0.004, 0.0105))
        lo = BASE_HEIGHT + 0.016
        hi = BASE_HEIGHT + q["trunk_height"] - 0.011
        q["peg_height"] = float(np.clip(q["peg_height"], lo, max(hi, lo)))
    elif category == "bowl":
        q["bowl_radius"] = max(q["bowl_radius"], 0.032)
        q["bowl_angle"] = float(np.clip(q["bowl_angle"], 1.25, 1.85))
    elif category == "teapot":
        q["body_radius"] = max(q["body_radius"], WALL + 0.013)
        q["body_height"] = max(q["body_height"], 0.065)
        q["spout_angle"] = float(np.clip(q["spout_angle"], 0.35, 0.85))
        q["spout_length"] = max(q["spout_length"], 0.045)
        q["handle_radius"] = float(
            np.clip(q["handle_radius"], 0.017, 0.45 * q["body_height"] - 0.006)
        )
        q["lid_radius"] = float(
            np.clip(q["lid_radius"], q["body_radius"] - WALL + 0.001, q["body_radius"] + 0.010)
        )
    return q


def sample_spec(
    category: str,
    rng: np.random.Generator,
    widths: float | Mapping[str, float] = 0.10,
    shifts: Mapping[str, float] | None = None,
    seed: int = 0,
    points_per_part: int = 400,
    noise: float = 0.0,
) -> ParametricObjectSpec:
    """Draw a family member around the category defaults.

    Each parameter is jittered by a uniform fractional amount (widths, a
    scalar or per-parameter map), then optionally shifted by an absolute
    uniform draw of half-range shifts[name]. Draws happen in sorted
    parameter order so a given rng state always yields the same spec.
    """
    defaults = CATEGORY_DEFAULTS[category]
    params: dict[str, float] = {}
    for name in sorted(defaults):
        w = widths.get(name, 0.0) if isinstance(widths, Mapping) else float(widths)
        value = defaults[name] * (1.0 + w * rng.uniform(-1.0, 1.0))
        if shifts and name in shifts:
            value += rng.uniform(-shifts[name], shifts[name])
        params[name] = value
    return ParametricObjectSpec(
        category, _clamp_params(category, params), seed, points_per_part, noise
    )


def spec_to_dict(spec: ParametricObjectSpec) -> dict:
    return {
        "category": spec.category,
        "params": {k: spec.params[k] for k in sorted(spec.params)},
        "seed": spec.seed,
        "points_per_part": spec.points_per_part,
        "noise": spec.noise,
    }


def spec_from_dict(payload: Mapping) -> ParametricObjectSpec:
    return ParametricObjectSpec(
        payload["category"],
        payload["params"],
        int(payload.get("seed", 0)),
        int(payload.get("points_per_part", 400)),
        float(payload.get("noise", 0.0)),
    )


# ---------------------------------------------------------------------------
# surfaces and samplers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Surface:
    name: str
    area: float
    embed: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _frame(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = _Z if abs(float(d @ _Z)) < 0.9 else _X
    e1 = _unit(np.cross(ref, d))
    return e1, np.cross(d, e1)


def _cyl_lateral(name, p0, d, e1, e2, radius, length) -> _Surface:
    p0 = np.asarray(p0, dtype=float)

    def embed(u, v, p0=p0, d=d, e1=e1, e2=e2, radius=radius, length=length):
        phi = 2.0 * np.pi * v
        return (
            p0
            + np.outer(u * length, d)
            + radius * (np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2))
        )

    return _Surface(name, 2.0 * np.pi * radius * length, embed)


def _disk(name, center, e1, e2, radius, inner=0.0) -> _Surface:
    center = np.asarray(center, dtype=float)

    def embed(u, v, center=center, e1=e1, e2=e2, radius=radius, inner=inner):
        r = np.sqrt(inner * inner + u * (radius * radius - inner * inner))
        phi = 2.0 * np.pi * v
        return center + np.outer(r * np.cos(phi), e1) + np.outer(r * np.sin(phi), e2)

    return _Surface(name, np.pi * (radius * radius - inner * inner), embed)


def _vessel_surfaces(radius: float, height: float, wall: float) -> list[_Surface]:
    inner = radius - wall
    return [
        _cyl_lateral("lateral_outer", np.zeros(3), _Z, _X, _Y, radius, height),
        _cyl_lateral("lateral_inner", np.array([0, 0, wall]), _Z, _X, _Y, inner, height - wall),
        _disk("bottom", np.zeros(3), _X, _Y, radius),
        _disk("floor", np.array([0, 0, wall]), _X, _Y, inner),
        _disk("rim", np.array([0, 0, height]), _X, _Y, radius, inner=inner),
    ]


def _arc_surfaces(center, e1, e2, normal, ring, tube, half_angle) -> list[_Surface]:
    center = np.asarray(center, dtype=float)
    surfaces = []

    def tube_embed(u, v, center=center, e1=e1, e2=e2, normal=normal, ring=ring, tube=tube):
        theta = half_angle * (2.0 * u - 1.0)
        phi = 2.0 * np.pi * v
        radial = np.outer(np.cos(theta), e1) + np.outer(np.sin(theta), e2)
        return (
            center
            + (ring + tube * np.cos(phi))[:, None] * radial
            + np.outer(tube * np.sin(phi), normal)
        )

    surfaces.append(
        _Surface("tube", (2.0 * half_angle * ring) * (2.0 * np.pi * tube), tube_embed)
    )
    for label, sgn in (("cap_pos", 1.0), ("cap_neg", -1.0)):
        theta_end = sgn * half_angle
        end = center + ring * (math.cos(theta_end) * e1 + math.sin(theta_end) * e2)
        tangent = sgn * (-math.sin(theta_end) * e1 + math.cos(theta_end) * e2)
        b2 = np.cross(tangent, normal)

        def cap_embed(u, v, end=end, tangent=tangent, normal=normal, b2=b2, tube=tube):
            w = u
            rad = np.sqrt(np.clip(1.0 - w * w, 0.0, 1.0))
            phi = 2.0 * np.pi * v
            return end + tube * (
                np.outer(w, tangent)
                + np.outer(rad * np.cos(phi), normal)
                + np.outer(rad * np.sin(phi), b2)
            )

        surfaces.append(_Surface(label, 2.0 * np.pi * tube * tube, cap_embed))
    return surfaces


def _bowl_surfaces(p: Mapping[str, float]) -> list[_Surface]:
    rho_o = p["bowl_radius"] + BOWL_WALL / 2.0
    rho_i = p["bowl_radius"] - BOWL_WALL / 2.0
    alpha = p["bowl_angle"]
    center = np.array([0.0, 0.0, rho_o])
    cos_a = math.cos(alpha)

    def shell_embed(u, v, radius):
        w = 1.0 - u * (1.0 - cos_a)
        sin_t = np.sqrt(np.clip(1.0 - w * w, 0.0, 1.0))
        phi = 2.0 * np.pi * v
        direction = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), -w], axis=1)
        return center + radius * direction

    def rim_embed(u, v):
        r = np.sqrt(rho_i * rho_i + u * (rho_o * rho_o - rho_i * rho_i))
        phi = 2.0 * np.pi * v
        sin_a = math.sin(alpha)
        direction = np.stack(
            [sin_a * np.cos(phi), sin_a * np.sin(phi), np.full_like(phi, -cos_a)], axis=1
        )
        return center + r[:, None] * direction

    return [
        _Surface(
            "outer",
            2.0 * np.pi * rho_o * rho_o * (1.0 - cos_a),
            lambda u, v: shell_embed(u, v, rho_o),
        ),
        _Surface(
            "inner",
            2.0 * np.pi * rho_i * rho_i * (1.0 - cos_a),
            lambda u, v: shell_embed(u, v, rho_i),
        ),
        _Surface(
            "rim", np.pi * math.sin(alpha) * (rho_o * rho_o - rho_i * rho_i), rim_embed
        ),
    ]


def _frustum_surfaces(origin, d, length, r0, r1) -> list[_Surface]:
    origin = np.asarray(origin, dtype=float)
    e1, e2 = _frame(d)
    slant = math.hypot(length, r1 - r0)

    def lateral_embed(u, v, origin=origin, d=d, e1=e1, e2=e2):
        # Invert the cdf of the radius-weighted axial density so points are
        # uniform by area on the cone.
        total = r0 * length + 0.5 * (r1 - r0) * length
        target = u * total
        a = (r1 - r0) / (2.0 * length)
        if abs(a) < 1e-12:
            z = target / max(r0, 1e-12)
        else:
            z = (-r0 + np.sqrt(np.maximum(r0 * r0 + 4.0 * a * target, 0.0))) / (2.0 * a)
        z = np.clip(z, 0.0, length)
        radius = r0 + (r1 - r0) * z / length
        phi = 2.0 * np.pi * v
        return (
            origin
            + np.outer(z, d)
            + radius[:, None] * (np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2))
        )

    return [
        _Surface("lateral", np.pi * (r0 + r1) * slant, lateral_embed),
        _disk("root", origin, e1, e2, r0),
        _disk("tip", origin + length * np.asarray(d, dtype=float), e1, e2, r1),
    ]


def _rack_peg_frame(p: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray, float]:
    psi = p["peg_angle"]
    d = np.array(
        [
            math.cos(psi) * math.cos(PEG_TILT),
            math.sin(psi) * math.cos(PEG_TILT),
            math.sin(PEG_TILT),
        ]
    )
    p0 = np.array([0.0, 0.0, p["peg_height"]])
    total = p["trunk_radius"] + p["peg_length"]
    return p0, d, total


def _teapot_spout_frame(p: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
    d = np.array([math.cos(p["spout_angle"]), 0.0, math.sin(p["spout_angle"])])
    origin = np.array([p["body_radius"] - 0.002, 0.0, 0.45 * p["body_height"]])
    return origin, d


def _teapot_handle_frame(p: Mapping[str, float]) -> np.ndarray:
    return np.array([-(p["body_radius"] + RING_STANDOFF), 0.0, 0.55 * p["body_height"]])


def _surfaces(spec: ParametricObjectSpec) -> dict[str, list[_Surface]]:
    p = spec.params
    if spec.category == "mug":
        center = np.array([p["cup_radius"] + RING_STANDOFF, 0.0, p["handle_height"]])
        return {
            "cup": _vessel_surfaces(p["cup_radius"], p["cup_height"], WALL),
            "handle": _arc_surfaces(
                center, _X, _Z, _Y, p["handle_radius"], p["handle_thickness"], HANDLE_ARC
            ),
        }
    if spec.category == "rack":
        p0, d, total = _rack_peg_frame(p)
        e1, e2 = _frame(d)
        return {
            "base": [
                _cyl_lateral("lateral", np.zeros(3), _Z, _X, _Y, p["base_radius"], BASE_HEIGHT),
                _disk("bottom", np.zeros(3), _X, _Y, p["base_radius"]),
                _disk("top", np.array([0, 0, BASE_HEIGHT]), _X, _Y, p["base_radius"]),
            ],
            "trunk": [
                _cyl_lateral(
                    "lateral",
                    np.array([0, 0, BASE_HEIGHT]),
                    _Z,
                    _X,
                    _Y,
                    p["trunk_radius"],
                    p["trunk_height"],
                ),
                _disk("bottom", np.array([0, 0, BASE_HEIGHT]), _X, _Y, p["trunk_radius"]),
                _disk(
                    "top",
                    np.array([0, 0, BASE_HEIGHT + p["trunk_height"]]),
                    _X,
                    _Y,
                    p["trunk_radius"],
                ),
            ],
            "peg": [
                _cyl_lateral("lateral", p0, d, e1, e2, p["peg_radius"], total),
                _disk("root", p0, e1, e2, p["peg_radius"]),
                _disk("tip", p0 + total * d, e1, e2, p["peg_radius"]),
            ],
        }
    if spec.category == "bowl":
        return {"bowl": _bowl_surfaces(p)}
    if spec.category == "teapot":
        rb, hb = p["body_radius"], p["body_height"]
        spout_origin, spout_dir = _teapot_spout_frame(p)
        handle_center = _teapot_handle_frame(p)
        rl = p["lid_radius"]
        z0 = hb
        z1 = hb + LID_PLATE_HEIGHT
        z2 = z1 + LID_KNOB_HEIGHT
        return {
            "body": _vessel_surfaces(rb, hb, WALL),
            "spout": _frustum_surfaces(
                spout_origin, spout_dir, p["spout_length"], SPOUT_ROOT_RADIUS, SPOUT_TIP_RADIUS
            ),
            "handle": _arc_surfaces(
                handle_center, -_X, _Z, _Y, p["handle_radius"], 0.005, HANDLE_ARC
            ),
            "lid": [
                _cyl_lateral("plate_lateral", np.array([0, 0, z0]), _Z, _X, _Y, rl, z1 - z0),
                _disk("plate_bottom", np.array([0, 0, z0]), _X, _Y, rl),
                _disk("plate_top", np.array([0, 0, z1]), _X, _Y, rl, inner=LID_KNOB_RADIUS),
                _cyl_lateral(
                    "knob_lateral", np.array([0, 0, z1]), _Z, _X, _Y, LID_KNOB_RADIUS, z2 - z1
                ),
                _disk("knob_top", np.array([0, 0, z2]), _X, _Y, LID_KNOB_RADIUS),
            ],
        }
    raise ValueError(f"unknown category {spec.category!r}")


# ---------------------------------------------------------------------------
# signed distances
# ---------------------------------------------------------------------------


def _cyl_sdf_z(radius: float, z0: float, z1: float) -> Callable[[np.ndarray], np.ndarray]:
    def sdf(pts):
        rho = np.hypot(pts[:, 0], pts[:, 1])
        dr = rho - radius
        dz = np.maximum(z0 - pts[:, 2], pts[:, 2] - z1)
        outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
        inside = np.minimum(np.maximum(dr, dz), 0.0)
        return outside + inside

    return sdf


def _cyl_sdf_frame(p0, d, length: float, radius: float) -> Callable[[np.ndarray], np.ndarray]:
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(d, dtype=float)

    def sdf(pts):
        q = pts - p0
        z = q @ d
        rho = np.sqrt(np.maximum(np.einsum("ij,ij->i", q, q) - z * z, 0.0))
        dr = rho - radius
        dz = np.maximum(-z, z - length)
        outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
        inside = np.minimum(np.maximum(dr, dz), 0.0)
        return outside + inside

    return sdf


def _vessel_sdf(radius: float, height: float, wall: float) -> Callable[[np.ndarray], np.ndarray]:
    outer = _cyl_sdf_z(radius, 0.0, height)
    cavity = _cyl_sdf_z(radius - wall, wall, height + 0.05)

    def sdf(pts):
        return np.maximum(outer(pts), -cavity(pts))

    return sdf


def _arc_sdf(center, e1, e2, normal, ring, tube, half_angle) -> Callable[[np.ndarray], np.ndarray]:
    center = np.asarray(center, dtype=float)

    def sdf(pts):
        q = pts - center
        a = q @ e1
        b = q @ e2
        lam = np.clip(np.arctan2(b, a), -half_angle, half_angle)
        nearest = center + ring * (np.outer(np.cos(lam), e1) + np.outer(np.sin(lam), e2))
        return np.linalg.norm(pts - nearest, axis=1) - tube

    return sdf


def _bowl_sdf(p: Mapping[str, float]) -> Callable[[np.ndarray], np.ndarray]:
    rho_o = p["bowl_radius"] + BOWL_WALL / 2.0
    rho_i = p["bowl_radius"] - BOWL_WALL / 2.0
    alpha = p["bowl_angle"]
    center = np.array([0.0, 0.0, rho_o])

    def sdf(pts):
        q = pts - center
        r = np.linalg.norm(q, axis=1)
        safe_r = np.maximum(r, 1e-15)
        cos_t = np.clip(-q[:, 2] / safe_r, -1.0, 1.0)
        theta = np.arccos(cos_t)
        band = np.maximum(r - rho_o, rho_i - r)
        cone = r * np.sin(theta - alpha)
        return np.maximum(band, cone)

    return sdf


def _frustum_sdf(origin, d, length, r0, r1) -> Callable[[np.ndarray], np.ndarray]:
    origin = np.asarray(origin, dtype=float)
    d = np.asarray(d, dtype=float)
    edges = [
        (np.array([0.0, 0.0]), np.array([r0, 0.0])),
        (np.array([r0, 0.0]), np.array([r1, length])),
        (np.array([r1, length]), np.array([0.0, length])),
    ]

    def sdf(pts):
        q = pts - origin
        z = q @ d
        rho = np.sqrt(np.maximum(np.einsum("ij,ij->i", q, q) - z * z, 0.0))
        pt2 = np.stack([rho, z], axis=1)
        dist = np.full(len(pts), np.inf)
        for a, b in edges:
            ab = b - a
            tt = np.clip(((pt2 - a) @ ab) / float(ab @ ab), 0.0, 1.0)
            proj = a + tt[:, None] * ab
            dist = np.minimum(dist, np.linalg.norm(pt2 - proj, axis=1))
        inside = (z >= 0.0) & (z <= length) & (rho <= r0 + (r1 - r0) * z / length)
        return np.where(inside, -dist, dist)

    return sdf


def _sdfs(spec: ParametricObjectSpec) -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    p = spec.params
    if spec.category == "mug":
        center = np.array([p["cup_radius"] + RING_STANDOFF, 0.0, p["handle_height"]])
        return {
            "cup": _vessel_sdf(p["cup_radius"], p["cup_height"], WALL),
            "handle": _arc_sdf(
                center, _X, _Z, _Y, p["handle_radius"], p["handle_thickness"], HANDLE_ARC
            ),
        }
    if spec.category == "rack":
        p0, d, total = _rack_peg_frame(p)
        return {
            "base": _cyl_sdf_z(p["base_radius"], 0.0, BASE_HEIGHT),
            "trunk": _cyl_sdf_z(
                p["trunk_radius"], BASE_HEIGHT, BASE_HEIGHT + p["trunk_height"]
            ),
            "peg": _cyl_sdf_frame(p0, d, total, p["peg_radius"]),
        }
    if spec.category == "bowl":
        return {"bowl": _bowl_sdf(p)}
    if spec.category == "teapot":
        rb, hb = p["body_radius"], p["body_height"]
        spout_origin, spout_dir = _teapot_spout_frame(p)
        handle_center = _teapot_handle_frame(p)
        z1 = hb + LID_PLATE_HEIGHT
        plate = _cyl_sdf_z(p["lid_radius"], hb, z1)
        knob = _cyl_sdf_z(LID_KNOB_RADIUS, z1, z1 + LID_KNOB_HEIGHT)

        def lid_sdf(pts):
            return np.minimum(plate(pts), knob(pts))

        return {
            "body": _vessel_sdf(rb, hb, WALL),
            "spout": _frustum_sdf(
                spout_origin, spout_dir, p["spout_length"], SPOUT_ROOT_RADIUS, SPOUT_TIP_RADIUS
            ),
            "handle": _arc_sdf(handle_center, -_X, _Z, _Y, p["handle_radius"], 0.005, HANDLE_ARC),
            "lid": lid_sdf,
        }
    raise ValueError(f"unknown category {spec.category!r}")


@dataclass(frozen=True)
class AnalyticSdf:
    """Signed distance of an object, posable in the world frame."""

    part_fns: Mapping[str, Callable[[np.ndarray], np.ndarray]]
    pose: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        object.__setattr__(self, "part_fns", dict(self.part_fns))

    def part(self, name: str, points: np.ndarray) -> np.ndarray:
        local = self.pose.inverse().apply(np.atleast_2d(np.asarray(points, dtype=float)))
        return self.part_fns[name](local)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        local = self.pose.inverse().apply(np.atleast_2d(np.asarray(points, dtype=float)))
        values = [fn(local) for fn in self.part_fns.values()]
        return np.min(np.stack(values, axis=0), axis=0)

    def transformed(self, t: RigidTransform) -> "AnalyticSdf":
        return AnalyticSdf(self.part_fns, t.compose(self.pose))


def penetration_depth(points: np.ndarray, sdf: AnalyticSdf) -> float:
    """Deepest incursion of any point into the solid described by sdf."""
    values = sdf(np.asarray(points, dtype=float))
    return float(max(0.0, -values.min()))


@dataclass(frozen=True)
class CorrespondenceMap:
    """Stored surface coordinates of every sampled point of one object.

    evaluate() re-embeds those coordinates on another spec of the same
    category, giving exact ground-truth correspondences across the family.
    """

    spec: ParametricObjectSpec
    surface_names: Mapping[str, np.ndarray]
    surface_uv: Mapping[str, np.ndarray]

    def evaluate(
        self,
        spec: ParametricObjectSpec,
        part: str,
        indices: np.ndarray | Sequence[int] | None = None,
    ) -> np.ndarray:
        if spec.category != self.spec.category:
            raise ValueError("incompatible spec for correspondence")
        names = self.surface_names[part]
        uv = self.surface_uv[part]
        if indices is not None:
            idx = np.asarray(indices, dtype=np.int64)
            names = names[idx]
            uv = uv[idx]
        table = {s.name: s.embed for s in _surfaces(spec)[part]}
        out = np.empty((len(names), 3))
        for name in np.unique(names):
            mask = names == name
            out[mask] = table[str(name)](uv[mask, 0], uv[mask, 1])
        return out


def generate(
    spec: ParametricObjectSpec,
) -> tuple[PartDecomposedObject, AnalyticSdf, CorrespondenceMap]:
    """Sample the object boundary and return clouds, distances, coordinates.

    Points are allocated to surfaces proportionally to area (largest
    remainder), drawn uniformly in each surface's own parameterization, and
    perturbed by isotropic Gaussian noise when the spec asks for it. All
    randomness is keyed to the spec seed plus the part and surface indices,
    so two specs that differ in one parameter share almost all of their
    surface samples.
    """
    surfaces = _surfaces(spec)
    clouds: dict[str, PointCloud] = {}
    names: dict[str, np.ndarray] = {}
    uvs: dict[str, np.ndarray] = {}
    for part_index, part in enumerate(spec.part_names()):
        areas = np.array([s.area for s in surfaces[part]])
        quota = spec.points_per_part * areas / areas.sum()
        counts = np.floor(quota).astype(int)
        shortfall = spec.points_per_part - counts.sum()
        counts[np.argsort(-(quota - counts), kind="stable")[:shortfall]] += 1
        pts_list, name_list, uv_list = [], [], []
        for surf_index, (surf, count) in enumerate(zip(surfaces[part], counts)):
            if count == 0:
                continue
            # Each surface draws from its own substream, one (u, v) row per
            # point, so a small parameter change that shifts the area-based
            # allocation by a point or two leaves every other sample in
            # place. Nearby specs then produce nearby clouds instead of
            # fully resampled ones.
            rng = np.random.default_rng([spec.seed, part_index, surf_index])
            uv = rng.random((count, 2))
            u, v = uv[:, 0], uv[:, 1]
            pts_list.append(surf.embed(u, v))
            name_list.append(np.full(count, surf.name, dtype=object))
            uv_list.append(np.stack([u, v], axis=1))
        pts = np.concatenate(pts_list)
        if spec.noise > 0:
            noise_rng = np.random.default_rng([spec.seed, part_index, 104729])
            pts = pts + noise_rng.normal(0.0, spec.noise, pts.shape)
        clouds[part] = PointCloud(pts)
        names[part] = np.concatenate(name_list)
        uvs[part] = np.concatenate(uv_list)
    obj = PartDecomposedObject(spec.category, clouds)
    sdf = AnalyticSdf(_sdfs(spec))
    corr = CorrespondenceMap(spec, names, uvs)
    return obj, sdf, corr


# ---------------------------------------------------------------------------
# feature points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectFeatures:
    """Named analytic landmarks of one object, posable like its cloud."""

    category: str
    points: Mapping[str, np.ndarray]
    directions: Mapping[str, np.ndarray]
    scalars: Mapping[str, float]

    def transformed(self, t: RigidTransform) -> "ObjectFeatures":
        return ObjectFeatures(
            self.category,
            {k: t.apply(v) for k, v in self.points.items()},
            {k: t.rotation @ v for k, v in self.directions.items()},
            dict(self.scalars),
        )


def features(spec: ParametricObjectSpec) -> ObjectFeatures:
    p = spec.params
    if spec.category == "mug":
        return ObjectFeatures(
            "mug",
            {
                "rim_center": np.array([0.0, 0.0, p["cup_height"]]),
                "loop_center": np.array(
                    [p["cup_radius"] + RING_STANDOFF, 0.0, p["handle_height"]]
                ),
            },
            {"up": _Z.copy(), "loop_normal": _Y.copy()},
            {
                "rim_radius_outer": p["cup_radius"],
                "rim_radius_inner": p["cup_radius"] - WALL,
                "height": p["cup_height"],
                "loop_ring": p["handle_radius"],
                "loop_tube": p["handle_thickness"],
                "hole": p["handle_radius"] - p["handle_thickness"],
            },
        )
    if spec.category == "rack":
        p0, d, total = _rack_peg_frame(p)
        return ObjectFeatures(
            "rack",
            {"peg_base": p0 + p["trunk_radius"] * d},
            {"peg_dir": d, "up": _Z.copy()},
            {
                "peg_length": p["peg_length"],
                "peg_radius": p["peg_radius"],
                "trunk_radius": p["trunk_radius"],
                "base_radius": p["base_radius"],
            },
        )
    if spec.category == "bowl":
        rho_o = p["bowl_radius"] + BOWL_WALL / 2.0
        alpha = p["bowl_angle"]
        return ObjectFeatures(
            "bowl",
            {
                "sphere_center": np.array([0.0, 0.0, rho_o]),
                "rim_center": np.array([0.0, 0.0, rho_o * (1.0 - math.cos(alpha))]),
            },
            {"up": _Z.copy()},
            {
                "radius_outer": rho_o,
                "radius_inner": p["bowl_radius"] - BOWL_WALL / 2.0,
                "rim_radius": rho_o * math.sin(alpha),
            },
        )
    if spec.category == "teapot":
        spout_origin, spout_dir = _teapot_spout_frame(p)
        return ObjectFeatures(
            "teapot",
            {
                "spout_tip": spout_origin + p["spout_length"] * spout_dir,
                "rim_center": np.array([0.0, 0.0, p["body_height"]]),
            },
            {"spout_dir": spout_dir, "up": _Z.copy()},
            {
                "rim_radius_outer": p["body_radius"],
                "rim_radius_inner": p["body_radius"] - WALL,
                "height": p["body_height"],
            },
        )
    raise ValueError(f"unknown category {spec.category!r}")


# ---------------------------------------------------------------------------
# partial views
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera for self-occlusion culling of sampled clouds."""

    eye: Sequence[float]
    target: Sequence[float] = (0.0, 0.0, 0.0)
    grid_resolution: int = 128
    depth_band: float = 0.015

    def __post_init__(self):
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be at least 2")
        if self.depth_band <= 0:
            raise ValueError("depth_band must be positive")


def partial_view(obj: PartDecomposedObject, camera: CameraView) -> PartDecomposedObject:
    """Keep only points visible from the camera, part structure preserved.

    Points project onto a pinhole image grid; within each cell only points
    inside a fixed depth band behind the nearest point survive. Parts
    reduced below three points are dropped with a warning; losing every
    part raises.
    """
    eye = np.asarray(camera.eye, dtype=float)
    target = np.asarray(camera.target, dtype=float)
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera eye and target coincide")
    forward = forward / norm
    up0 = _Z if np.linalg.norm(np.cross(forward, _Z)) > 1e-6 else _X
    right = _unit(np.cross(forward, up0))
    up = np.cross(right, forward)

    parts = obj.part_names()
    sizes = [len(obj.parts[name]) for name in parts]
    stops = np.cumsum([0] + sizes)
    pts = np.concatenate([obj.parts[name].points for name in parts])
    q = pts - eye
    depth = q @ forward
    visible = depth > 1e-9
    if not visible.any():
        raise ValueError("empty view")
    uu = np.zeros(len(pts))
    vv = np.zeros(len(pts))
    uu[visible] = (q[visible] @ right) / depth[visible]
    vv[visible] = (q[visible] @ up) / depth[visible]

    grid = camera.grid_resolution
    umin, umax = uu[visible].min(), uu[visible].max()
    vmin, vmax = vv[visible].min(), vv[visible].max()
    du = max(umax - umin, 1e-12) / grid
    dv = max(vmax - vmin, 1e-12) / grid
    ix = np.clip(((uu - umin) / du).astype(int), 0, grid - 1)
    iy = np.clip(((vv - vmin) / dv).astype(int), 0, grid - 1)
    flat = ix * grid + iy
    nearest = np.full(grid * grid, np.inf)
    np.minimum.at(nearest, flat[visible], depth[visible])
    keep = visible & (depth <= nearest[flat] + camera.depth_band)

    kept: dict[str, PointCloud] = {}
    dropped: list[str] = []
    for name, a, b in zip(parts, stops[:-1], stops[1:]):
        idx = np.nonzero(keep[a:b])[0]
        if len(idx) < 3:
            dropped.append(name)
            warnings.warn(f"partial view dropped part {name!r}", stacklevel=2)
            continue
        kept[name] = obj.parts[name].subset(idx)
    if not kept:
        raise ValueError("empty view")
    return PartDecomposedObject(obj.category, kept, tuple(dropped))


# ---------------------------------------------------------------------------
# tasks and demonstrations
# ---------------------------------------------------------------------------


def task_categories(task: str) -> tuple[str, str]:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    return TASKS[task]


def _rz(angle: float) -> np.ndarray:
    return rotation_about_axis(_Z, angle)


def goal_transform(
    task: str, spec_a: ParametricObjectSpec, spec_b: ParametricObjectSpec
) -> RigidTransform:
    """Pose of object A (local frame) that accomplishes the task on B at identity."""
    cat_a, cat_b = task_categories(task)
    if (spec_a.category, spec_b.category) != (cat_a, cat_b):
        raise ValueError(f"task {task!r} expects categories {cat_a!r}, {cat_b!r}")
    pa, pb = spec_a.params, spec_b.params

    if task == "mug_on_rack":
        feat = features(spec_b)
        q = feat.points["peg_base"] + HANG_FRACTION * pb["peg_length"] * feat.directions["peg_dir"]
        hole = pa["handle_radius"] - pa["handle_thickness"]
        reach = hole - pb["peg_radius"] - HANG_TUBE_GAP
        if reach <= 0.0005:
            raise ValueError("infeasible pair")
        sin_chi = (pb["peg_radius"] + HANG_WALL_GAP - RING_STANDOFF) / reach
        if not 0.0 <= sin_chi <= 0.98:
            raise ValueError("infeasible pair")
        chi = math.asin(sin_chi)
        crossing_local = np.array(
            [
                pa["cup_radius"] + RING_STANDOFF + reach * sin_chi,
                0.0,
                pa["handle_height"] - reach * math.cos(chi),
            ]
        )
        yaw = pb["peg_angle"] - math.pi / 2.0
        rot = _rz(yaw)
        return RigidTransform(rot, q - rot @ crossing_local)

    if task == "bowl_on_mug":
        rho_o = pa["bowl_radius"] + BOWL_WALL / 2.0
        inner = pb["cup_radius"] - WALL
        if rho_o <= inner + 0.003:
            raise ValueError("infeasible pair")
        drop = math.sqrt(rho_o * rho_o - inner * inner)
        center_z = pb["cup_height"] + drop + BOWL_REST_GAP
        return RigidTransform(np.eye(3), np.array([0.0, 0.0, center_z - rho_o]))

    if task == "teapot_pour_align":
        # Pour over the rim point opposite the mug handle so the spout body
        # clears the handle on approach.
        tip_local = features(spec_a).points["spout_tip"]
        target = np.array(
            [-pb["cup_radius"], 0.0, pb["cup_height"] + POUR_HEIGHT]
        )
        rot = np.eye(3)
        return RigidTransform(rot, target - rot @ tip_local)

    raise ValueError(f"unknown task {task!r}")


def task_predicate(task: str, feat_a: ObjectFeatures, feat_b: ObjectFeatures) -> bool:
    """Geometric success test in the world frame, penetration not included."""
    task_categories(task)
    if task == "mug_on_rack":
        center = feat_a.points["loop_center"]
        normal = feat_a.directions["loop_normal"]
        hole = feat_a.scalars["hole"]
        q0 = feat_b.points["peg_base"]
        d = feat_b.directions["peg_dir"]
        dn = float(d @ normal)
        if abs(dn) < 1e-9:
            return False
        s = float((center - q0) @ normal) / dn
        if not 0.0 <= s <= feat_b.scalars["peg_length"]:
            return False
        crossing = q0 + s * d
        return float(np.linalg.norm(crossing - center)) < hole
    if task == "bowl_on_mug":
        center = feat_a.points["sphere_center"]
        rho_o = feat_a.scalars["radius_outer"]
        rim = feat_b.points["rim_center"]
        inner = feat_b.scalars["rim_radius_inner"]
        if rho_o <= inner + 0.002:
            return False
        rest_z = rim[2] + math.sqrt(rho_o * rho_o - inner * inner)
        lateral = float(np.linalg.norm(center[:2] - rim[:2]))
        return lateral <= 0.4 * inner and abs(float(center[2]) - rest_z) <= 0.008
    if task == "teapot_pour_align":
        tip = feat_a.points["spout_tip"]
        rim = feat_b.points["rim_center"]
        lateral = float(np.linalg.norm(tip[:2] - rim[:2]))
        lift = float(tip[2] - rim[2])
        return lateral <= feat_b.scalars["rim_radius_outer"] + 0.003 and 0.001 <= lift <= 0.05
    raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class DemoScene:
    """A demonstration plus everything needed to audit or evaluate it."""

    demo: Demonstration
    spec_a: ParametricObjectSpec
    spec_b: ParametricObjectSpec
    init_a: RigidTransform
    sdf_a: AnalyticSdf
    sdf_b: AnalyticSdf
    corr_a: CorrespondenceMap
    corr_b: CorrespondenceMap


def generate_demo_scene(
    task: str,
    spec_a: ParametricObjectSpec | None = None,
    spec_b: ParametricObjectSpec | None = None,
    init_a: RigidTransform | None = None,
) -> DemoScene:
    cat_a, cat_b = task_categories(task)
    if spec_a is None:
        spec_a = default_spec(cat_a, seed=11)
    if spec_b is None:
        spec_b = default_spec(cat_b, seed=12)
    if init_a is None:
        init_a = RigidTransform(_rz(0.3), np.array([0.32, -0.14, 0.0]))

    t_goal = goal_transform(task, spec_a, spec_b)
    obj_a, sdf_a, corr_a = generate(spec_a)
    obj_b, sdf_b, corr_b = generate(spec_b)

    goal_points = t_goal.apply(obj_a.all_points())
    depth = penetration_depth(goal_points, sdf_b)
    depth = max(depth, penetration_depth(obj_b.all_points(), sdf_a.transformed(t_goal)))
    if depth > 0.001:
        raise ValueError("infeasible pair")
    if not task_predicate(task, features(spec_a).transformed(t_goal), features(spec_b)):
        raise ValueError("infeasible pair")

    t_ab = t_goal.compose(init_a.inverse())
    demo = Demonstration(obj_a.transformed(init_a), obj_b, t_ab)
    return DemoScene(demo, spec_a, spec_b, init_a, sdf_a, sdf_b, corr_a, corr_b)


def generate_demo(
    task: str,
    spec_a: ParametricObjectSpec | None = None,
    spec_b: ParametricObjectSpec | None = None,
) -> Demonstration:
    """Build a feasible demonstration of the task with objects in general pose."""
    return generate_demo_scene(task, spec_a, spec_b).demo
