"""Multi-view sphere recovery and metric scale definition.

Given matched silhouette ellipses of one sphere in n >= 2 calibrated views,
the sphere is recovered in closed form: correct each ellipse center for the
eccentricity displacement, triangulate the corrected centers to get the world
center, transform that center into each camera frame, read off one radius
estimate per view from the depth and semi-minor length, and average.  With
known real-world radii of one or more spheres the global scale of the
reconstruction follows from a least-squares radius ratio.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateGeometry, DegenerateProjection, EmptyInput, InvalidAnchor
from .projection import (
    CameraView,
    EllipseObservation,
    Sphere,
    project_point,
    projected_sphere_center,
    radius_from_depth,
    world_to_camera,
)

_RANK_TOL = 1e-9
_INFINITY_TOL = 1e-12


@dataclass
class SphereModel:
    """A reconstructed sphere plus per-view diagnostics.

    ``per_view_radii`` holds one (image_id, radius) entry per contributing
    view; the model radius is their (weighted) mean.  ``radius_spread`` is
    max |R_i - R| and ``triangulation_residual`` the RMS pixel distance
    between the corrected ellipse centers and the reprojected world center.
    """

    sphere: Sphere
    per_view_radii: list[tuple[str, float]]
    radius_spread: float
    triangulation_residual: float
    scale_applied: Optional[float] = None


@dataclass
class ScaleResult:
    """Metric scale factor (real units per model unit) and its fit residual."""

    s_r: float
    residual_rmse: float


def triangulate_center(observations: Sequence[tuple[CameraView, np.ndarray]]) -> np.ndarray:
    """Linear homogeneous least-squares triangulation of one world point.

    ``observations`` pairs each view with a pixel measurement of the point.
    Pixels are reduced to normalized image coordinates before stacking the
    projection constraints, which keeps the design matrix well conditioned.

    Raises DegenerateGeometry when the stacked constraints are rank-deficient
    (coincident rays, identical camera centers) or the solution lies at
    infinity.
    """
    if len(observations) < 2:
        raise ValueError("triangulation needs at least two views")
    rows = []
    for view, pixel in observations:
        pixel = np.asarray(pixel, dtype=float).reshape(2)
        xn = (pixel[0] - view.px) / view.f
        yn = (pixel[1] - view.py) / view.f
        pose = np.hstack([view.rot, view.t[:, None]])
        rows.append(xn * pose[2] - pose[0])
        rows.append(yn * pose[2] - pose[1])
    a = np.vstack(rows)
    a = a / np.linalg.norm(a, axis=1)[:, None]
    _, s, vt = np.linalg.svd(a)
    if s[2] <= _RANK_TOL * s[0]:
        raise DegenerateGeometry(
            "triangulation design matrix is rank-deficient (coincident rays?)")
    x = vt[-1]
    if abs(x[3]) <= _INFINITY_TOL * np.linalg.norm(x[:3]):
        raise DegenerateGeometry("triangulated point lies at infinity")
    return x[:3] / x[3]


def triangulate_midpoint(observations: Sequence[tuple[CameraView, np.ndarray]]) -> np.ndarray:
    """Diagnostic triangulation: average of pairwise closest-approach midpoints.

    Slower-converging than the linear solution but independent of it, which
    makes it useful as a cross-check on suspicious geometry.
    """
    if len(observations) < 2:
        raise ValueError("triangulation needs at least two views")
    rays = []
    for view, pixel in observations:
        pixel = np.asarray(pixel, dtype=float).reshape(2)
        direction = view.rot.T @ np.array(
            [(pixel[0] - view.px) / view.f, (pixel[1] - view.py) / view.f, 1.0])
        rays.append((view.center, direction / np.linalg.norm(direction)))
    midpoints = []
    for (c1, d1), (c2, d2) in itertools.combinations(rays, 2):
        cross = np.cross(d1, d2)
        denom = float(cross @ cross)
        if denom <= 1e-24:
            continue  # parallel rays contribute no midpoint
        delta = c2 - c1
        s1 = float(np.cross(delta, d2) @ cross) / denom
        s2 = float(np.cross(delta, d1) @ cross) / denom
        midpoints.append(0.5 * ((c1 + s1 * d1) + (c2 + s2 * d2)))
    if not midpoints:
        raise DegenerateGeometry("all ray pairs are parallel")
    return np.mean(midpoints, axis=0)


def estimate_radius_ls(radii: Sequence[float], weights: Optional[Sequence[float]] = None) -> float:
    """Least-squares radius from per-view estimates: the (weighted) mean."""
    radii = [float(r) for r in radii]
    if not radii:
        raise EmptyInput("no radii to average")
    if weights is None:
        return float(np.mean(radii))
    weights = [float(w) for w in weights]
    if len(weights) != len(radii):
        raise ValueError(f"{len(radii)} radii but {len(weights)} weights")
    if any(w < 0.0 for w in weights):
        raise ValueError("weights must be nonnegative")
    total = sum(weights)
    if not total > 0.0:
        raise ValueError("weights must have positive sum")
    return float(sum(w * r for w, r in zip(weights, radii)) / total)


def reconstruct_sphere(matched: Sequence[tuple[CameraView, EllipseObservation]],
                       weights: Optional[Sequence[float]] = None) -> SphereModel:
    """Recover one world-frame sphere from matched ellipses in n >= 2 views.

    Steps: eccentricity-correct each ellipse center, triangulate the
    corrected centers, transform the world center into each camera frame,
    estimate one radius per view from depth and semi-minor length, and take
    the (weighted) mean.  Deterministic; raises DegenerateGeometry from the
    triangulation and DegenerateProjection when the triangulated center falls
    at or behind any contributing camera.
    """
    if len(matched) < 2:
        raise ValueError("sphere reconstruction needs at least two views")
    corrected = [projected_sphere_center(e, v.f, v.px, v.py) for v, e in matched]
    center_w = triangulate_center([(v, c) for (v, _), c in zip(matched, corrected)])
    per_view = []
    for view, e in matched:
        cam = world_to_camera(center_w, view)
        if cam[2] <= 0.0:
            raise DegenerateProjection(
                f"triangulated center has nonpositive depth in view {view.image_id!r}")
        per_view.append((view.image_id, radius_from_depth(cam[2], e.b_e, view.f)))
    radius = estimate_radius_ls([r for _, r in per_view], weights)
    spread = max(abs(r - radius) for _, r in per_view)
    residual = math.sqrt(np.mean([
        float(np.sum((project_point(center_w, v) - c) ** 2))
        for (v, _), c in zip(matched, corrected)]))
    return SphereModel(sphere=Sphere(center_w, radius, frame="world"),
                       per_view_radii=per_view,
                       radius_spread=spread,
                       triangulation_residual=residual)


def metric_scale(anchors: Sequence[tuple[float, float]]) -> ScaleResult:
    """Scale factor from (real_radius, estimated_radius) anchor pairs.

    One anchor gives the plain ratio; several give the least-squares norm
    ratio sqrt(sum R_real^2 / sum R_est^2).  The residual is the RMSE of
    R_real - s * R_est over the anchors, in real units.
    """
    anchors = [(float(rr), float(rw)) for rr, rw in anchors]
    if not anchors:
        raise EmptyInput("no anchors supplied")
    for rr, rw in anchors:
        if rr <= 0.0 or rw <= 0.0:
            raise InvalidAnchor(f"anchor radii must be positive, got ({rr}, {rw})")
    if len(anchors) == 1:
        s = anchors[0][0] / anchors[0][1]
    else:
        s = math.sqrt(sum(rr * rr for rr, _ in anchors)
                      / sum(rw * rw for _, rw in anchors))
    residual = math.sqrt(float(np.mean([(rr - s * rw) ** 2 for rr, rw in anchors])))
    return ScaleResult(s_r=s, residual_rmse=residual)


def apply_scale(obj, s_r: float):
    """Scaled copy of a Sphere, SphereModel, or array of points.

    Lengths (centers, radii, coordinates) are multiplied by ``s_r``;
    rotations and pixel-space diagnostics are untouched.
    """
    if not s_r > 0.0:
        raise ValueError(f"scale factor must be positive, got {s_r}")
    if isinstance(obj, Sphere):
        return Sphere(obj.center * s_r, obj.radius * s_r, frame=obj.frame)
    if isinstance(obj, SphereModel):
        prior = obj.scale_applied
        return SphereModel(
            sphere=apply_scale(obj.sphere, s_r),
            per_view_radii=[(i, r * s_r) for i, r in obj.per_view_radii],
            radius_spread=obj.radius_spread * s_r,
            triangulation_residual=obj.triangulation_residual,
            scale_applied=s_r if prior is None else prior * s_r)
    return np.asarray(obj, dtype=float) * s_r
