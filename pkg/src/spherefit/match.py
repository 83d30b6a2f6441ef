"""Matching sphere silhouettes between two views.

Candidates are pre-filtered with the epipolar constraint on the
eccentricity-corrected ellipse centers (the corrected center is the true
image of the sphere center, so it must obey two-view point geometry), then
verified by hypothesis: reconstruct a sphere from the candidate pair,
reproject it into both images, and measure the parameter distance between
observed and reprojected ellipses.  Matching is one-to-one, greedy by
ascending total reprojection distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateGeometry, DegenerateProjection
from .projection import (
    CameraView,
    EllipseObservation,
    project_sphere_into_view,
    projected_sphere_center,
)
from .reconstruct import SphereModel, reconstruct_sphere

#: Epipolar gate floor in pixels; widened per candidate by center uncertainty.
DEFAULT_EPIPOLAR_TOL = 3.0


@dataclass
class MatchCandidate:
    """One evaluated ellipse pairing and its sphere hypothesis."""

    ellipse_l: str
    ellipse_k: str
    epipolar_distance: float
    reprojection_distance: float
    sphere: SphereModel


@dataclass
class MatchResult:
    matches: list[MatchCandidate]
    unmatched_l: list[str]
    unmatched_k: list[str]


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def fundamental_from_views(view_l: CameraView, view_k: CameraView) -> np.ndarray:
    """Fundamental matrix F with x_k^T F x_l = 0 for corresponding pixels.

    Built from the relative pose (camera-l frame to camera-k frame) and both
    calibration matrices; normalized to unit Frobenius norm.  Raises
    DegenerateGeometry when the camera centers coincide (no epipolar
    geometry exists).
    """
    r_rel = view_k.rot @ view_l.rot.T
    t_rel = view_k.t - r_rel @ view_l.t
    scale = max(1.0, float(np.linalg.norm(view_l.t)), float(np.linalg.norm(view_k.t)))
    if np.linalg.norm(t_rel) <= 1e-12 * scale:
        raise DegenerateGeometry(
            f"views {view_l.image_id!r} and {view_k.image_id!r} have coincident centers")
    essential = _skew(t_rel) @ r_rel
    f_mat = (np.linalg.inv(view_k.calibration_matrix).T @ essential
             @ np.linalg.inv(view_l.calibration_matrix))
    return f_mat / np.linalg.norm(f_mat)


def epipolar_distance(fundamental: np.ndarray, point_l, point_k) -> float:
    """Pixel distance of ``point_k`` from the epipolar line of ``point_l``."""
    xl = np.append(np.asarray(point_l, dtype=float).reshape(2), 1.0)
    xk = np.append(np.asarray(point_k, dtype=float).reshape(2), 1.0)
    line = fundamental @ xl
    norm = math.hypot(line[0], line[1])
    if norm <= 0.0:
        return math.inf
    return abs(float(line @ xk)) / norm


def center_sigma(e: EllipseObservation) -> float:
    """RMS center standard deviation from the ellipse covariance (0 if none)."""
    if e.cov is None:
        return 0.0
    return math.sqrt(max(0.5 * float(e.cov[2, 2] + e.cov[3, 3]), 0.0))


def default_epipolar_tol(e_l: EllipseObservation, e_k: EllipseObservation) -> float:
    """max(3 px, 2 * center sigma) over the two candidate ellipses."""
    return max(DEFAULT_EPIPOLAR_TOL,
               2.0 * max(center_sigma(e_l), center_sigma(e_k)))


def epipolar_candidates(e_l: EllipseObservation, view_l: CameraView,
                        candidates_k: Sequence[EllipseObservation],
                        view_k: CameraView,
                        tol: Optional[float] = None,
                        fundamental: Optional[np.ndarray] = None,
                        ) -> list[tuple[EllipseObservation, float]]:
    """Candidates in view k whose corrected center lies near the epipolar line
    of e_l's corrected center; returns (candidate, distance) pairs."""
    if fundamental is None:
        fundamental = fundamental_from_views(view_l, view_k)
    center_l = projected_sphere_center(e_l, view_l.f, view_l.px, view_l.py)
    kept = []
    for e_k in candidates_k:
        center_k = projected_sphere_center(e_k, view_k.f, view_k.px, view_k.py)
        d = epipolar_distance(fundamental, center_l, center_k)
        limit = tol if tol is not None else default_epipolar_tol(e_l, e_k)
        if d <= limit:
            kept.append((e_k, d))
    return kept


def reprojection_distance(observed: EllipseObservation,
                          predicted: EllipseObservation) -> float:
    """Euclidean distance over (x_ce, y_ce, a_e, b_e) in pixels.

    The axis angle is excluded: it is numerically meaningless for the
    near-circular silhouettes of on-axis spheres, and the four retained
    parameters share pixel units.
    """
    if observed.image_id and predicted.image_id and observed.image_id != predicted.image_id:
        raise ValueError(
            f"cannot compare ellipses across images {observed.image_id!r} "
            f"and {predicted.image_id!r}")
    return math.sqrt((observed.x_ce - predicted.x_ce) ** 2
                     + (observed.y_ce - predicted.y_ce) ** 2
                     + (observed.a_e - predicted.a_e) ** 2
                     + (observed.b_e - predicted.b_e) ** 2)


def match_ellipses(view_l: CameraView, ellipses_l: Sequence[EllipseObservation],
                   view_k: CameraView, ellipses_k: Sequence[EllipseObservation],
                   tol: Optional[float] = None) -> MatchResult:
    """One-to-one matching of gate-filtered ellipses between two views.

    Every epipolar-admissible pairing is verified by reconstructing the
    hypothesized sphere and reprojecting it into both images; pairings whose
    geometry degenerates are discarded.  The epipolar test is applied
    symmetrically (both images) so the result does not depend on which view
    is called l.
    """
    f_lk = fundamental_from_views(view_l, view_k)
    corr_l = {e.ellipse_id: projected_sphere_center(e, view_l.f, view_l.px, view_l.py)
              for e in ellipses_l}
    corr_k = {e.ellipse_id: projected_sphere_center(e, view_k.f, view_k.px, view_k.py)
              for e in ellipses_k}
    candidates = []
    for e_l in sorted(ellipses_l, key=lambda e: e.ellipse_id):
        for e_k in sorted(ellipses_k, key=lambda e: e.ellipse_id):
            d_fwd = epipolar_distance(f_lk, corr_l[e_l.ellipse_id], corr_k[e_k.ellipse_id])
            d_bwd = epipolar_distance(f_lk.T, corr_k[e_k.ellipse_id], corr_l[e_l.ellipse_id])
            epi = max(d_fwd, d_bwd)
            limit = tol if tol is not None else default_epipolar_tol(e_l, e_k)
            if epi > limit:
                continue
            try:
                hypothesis = reconstruct_sphere([(view_l, e_l), (view_k, e_k)])
                pred_l = project_sphere_into_view(hypothesis.sphere, view_l)
                pred_k = project_sphere_into_view(hypothesis.sphere, view_k)
            except (DegenerateGeometry, DegenerateProjection):
                continue
            total = (reprojection_distance(e_l, pred_l)
                     + reprojection_distance(e_k, pred_k))
            candidates.append(MatchCandidate(
                ellipse_l=e_l.ellipse_id, ellipse_k=e_k.ellipse_id,
                epipolar_distance=epi, reprojection_distance=total,
                sphere=hypothesis))
    candidates.sort(key=lambda c: (c.reprojection_distance, c.ellipse_l, c.ellipse_k))
    used_l: set = set()
    used_k: set = set()
    matches = []
    for cand in candidates:
        if cand.ellipse_l in used_l or cand.ellipse_k in used_k:
            continue
        matches.append(cand)
        used_l.add(cand.ellipse_l)
        used_k.add(cand.ellipse_k)
    unmatched_l = sorted(e.ellipse_id for e in ellipses_l if e.ellipse_id not in used_l)
    unmatched_k = sorted(e.ellipse_id for e in ellipses_k if e.ellipse_id not in used_k)
    return MatchResult(matches=matches, unmatched_l=unmatched_l, unmatched_k=unmatched_k)
