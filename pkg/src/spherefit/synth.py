"""Synthetic scenes and the Monte-Carlo accuracy/runtime protocol.

Scenes mirror a tabletop calibration setup: a handful of spheres resting on
a board, observed by a ring/arc/hemisphere of identical pinhole cameras, with
board-level tie points providing the network geometry.  Observations are the
exact closed-form silhouette ellipses, optionally perturbed with Gaussian
parameter noise; clutter ellipses deliberately violate the sphere-silhouette
identity by an axis inflation factor.

The view sweep draws p = min(50, C(n, k)) unique k-view subsets per requested
k, runs gate -> pairwise matching (all view pairs in the subset, merged into
one-ellipse-per-view tracks) -> multi-view reconstruction on each subset, and
aggregates percentage parameter errors and per-trial wall time.  The
highest-scoring pair of the full network is evaluated as a distinguished
extra data point.
"""

from __future__ import annotations

import itertools
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigInfeasible, DegenerateGeometry, DegenerateProjection
from .gate import classify_spherical
from .match import MatchCandidate, match_ellipses
from .netselect import ImageNetwork, TiePoint, best_pair
from .projection import (
    CameraView,
    EllipseObservation,
    Sphere,
    fold_axis_angle,
    project_sphere_into_view,
    world_to_camera,
)
from .reconstruct import SphereModel, reconstruct_sphere

_DEFAULT_SPHERES = [
    ("ball-0", (-0.35, -0.35, 0.100), 0.100),
    ("ball-1", (0.00, -0.35, 0.060), 0.060),
    ("ball-2", (0.35, -0.35, 0.080), 0.080),
    ("ball-3", (-0.35, 0.00, 0.090), 0.090),
    ("ball-4", (0.00, 0.00, 0.070), 0.070),
    ("ball-5", (0.35, 0.00, 0.085), 0.085),
    ("ball-6", (-0.35, 0.35, 0.075), 0.075),
    ("ball-7", (0.00, 0.35, 0.095), 0.095),
    ("ball-8", (0.35, 0.35, 0.065), 0.065),
]


def _rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child stream of a master seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass
class SceneConfig:
    """Recipe for a synthetic camera network observing spheres.

    ``spheres`` is a list of (sphere_id, center_xyz, radius); the default is
    a 3x3 grid of tabletop balls.  ``placement`` is one of ring / arc /
    hemisphere.  The master seed fully determines tie points, clutter, and
    any later noise.
    """

    n_cameras: int = 30
    placement: str = "arc"
    camera_distance: float = 2.0
    camera_height: float = 1.0
    arc_span_deg: float = 120.0
    look_at: tuple = (0.0, 0.0, 0.0)
    f: float = 3000.0
    px: float = 1920.0
    py: float = 1080.0
    width: float = 3840.0
    height: float = 2160.0
    spheres: list = field(default_factory=lambda: [list(s) for s in _DEFAULT_SPHERES])
    n_tie_points: int = 40
    tie_point_extent: float = 0.6
    clutter_per_image: int = 0
    clutter_inflation: float = 1.2
    sigma_px: float = 0.5
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "n_cameras": self.n_cameras,
            "placement": self.placement,
            "camera_distance": self.camera_distance,
            "camera_height": self.camera_height,
            "arc_span_deg": self.arc_span_deg,
            "look_at": list(self.look_at),
            "f": self.f, "px": self.px, "py": self.py,
            "width": self.width, "height": self.height,
            "spheres": [[sid, list(center), radius] for sid, center, radius in self.spheres],
            "n_tie_points": self.n_tie_points,
            "tie_point_extent": self.tie_point_extent,
            "clutter_per_image": self.clutter_per_image,
            "clutter_inflation": self.clutter_inflation,
            "sigma_px": self.sigma_px,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        cfg = cls()
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown scene config key {key!r}")
            setattr(cfg, key, value)
        cfg.spheres = [(sid, tuple(center), float(radius))
                       for sid, center, radius in cfg.spheres]
        cfg.look_at = tuple(cfg.look_at)
        return cfg


@dataclass
class SyntheticScene:
    """A generated scene: views, ground truth, observations, tie points."""

    config: SceneConfig
    views: list[CameraView]
    spheres: list[tuple[str, Sphere]]
    observations: dict  # image_id -> list[EllipseObservation], clutter included
    tie_points: list[TiePoint]
    clutter_ids: set = field(default_factory=set)

    @property
    def network(self) -> ImageNetwork:
        return ImageNetwork(views=list(self.views), tie_points=list(self.tie_points))

    def view(self, image_id: str) -> CameraView:
        for v in self.views:
            if v.image_id == image_id:
                return v
        raise KeyError(image_id)


def _look_at_rotation(camera_center: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera rotation with the principal axis toward ``target``."""
    z_axis = target - camera_center
    norm = np.linalg.norm(z_axis)
    if norm <= 0.0:
        raise ValueError("camera center coincides with the look-at target")
    z_axis = z_axis / norm
    up = np.array([0.0, 0.0, 1.0])
    x_axis = np.cross(z_axis, up)
    if np.linalg.norm(x_axis) < 1e-9:
        up = np.array([0.0, 1.0, 0.0])  # camera looks straight up/down
        x_axis = np.cross(z_axis, up)
    x_axis = x_axis / np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    return np.vstack([x_axis, y_axis, z_axis])


def _camera_centers(config: SceneConfig) -> list[np.ndarray]:
    n = config.n_cameras
    d = config.camera_distance
    h = config.camera_height
    centers = []
    if config.placement == "ring":
        for i in range(n):
            phi = 2.0 * math.pi * i / n
            centers.append(np.array([d * math.cos(phi), d * math.sin(phi), h]))
    elif config.placement == "arc":
        span = math.radians(config.arc_span_deg)
        for i in range(n):
            phi = -span / 2.0 + span * (i / max(n - 1, 1))
            centers.append(np.array([d * math.cos(phi), d * math.sin(phi), h]))
    elif config.placement == "hemisphere":
        # Deterministic spiral over elevations 20..70 degrees.
        for i in range(n):
            frac = i / max(n - 1, 1)
            elev = math.radians(20.0 + 50.0 * frac)
            phi = 2.0 * math.pi * 1.618 * i
            radius = config.camera_distance
            centers.append(np.array([radius * math.cos(elev) * math.cos(phi),
                                     radius * math.cos(elev) * math.sin(phi),
                                     radius * math.sin(elev)]))
    else:
        raise ValueError(f"unknown placement {config.placement!r}")
    return centers


def _in_frame(pixel: np.ndarray, config: SceneConfig) -> bool:
    return 0.0 <= pixel[0] <= config.width and 0.0 <= pixel[1] <= config.height


def generate_scene(config: SceneConfig, seed: Optional[int] = None) -> SyntheticScene:
    """Build the exact scene: poses, tie points, silhouettes, clutter.

    Deterministic in (config, seed); ``seed`` defaults to ``config.seed``.
    Raises ConfigInfeasible when any sphere fails the depth-clears-radius
    requirement in any camera.
    """
    master = config.seed if seed is None else seed
    rng = _rng(master, 0)
    target = np.asarray(config.look_at, dtype=float)

    views = []
    for i, center in enumerate(_camera_centers(config)):
        rot = _look_at_rotation(center, target)
        views.append(CameraView(image_id=f"img-{i:02d}", f=config.f,
                                px=config.px, py=config.py,
                                rot=rot, t=-rot @ center))

    spheres = [(sid, Sphere(np.asarray(c, dtype=float), float(r), frame="world"))
               for sid, c, r in config.spheres]

    observations: dict = {v.image_id: [] for v in views}
    for view in views:
        for sid, sphere in spheres:
            cam = world_to_camera(sphere.center, view)
            if cam[2] <= sphere.radius * (1.0 + 1e-9):
                raise ConfigInfeasible(
                    f"sphere {sid!r} does not clear camera {view.image_id!r} "
                    f"(depth {cam[2]:.4g}, radius {sphere.radius:.4g})")
            observations[view.image_id].append(
                project_sphere_into_view(sphere, view, ellipse_id=sid))

    # Board-level tie points, kept only if at least two cameras image them.
    tie_points = []
    extent = config.tie_point_extent
    for _ in range(config.n_tie_points):
        xyz = np.array([rng.uniform(-extent, extent),
                        rng.uniform(-extent, extent), 0.0])
        seen = set()
        for view in views:
            cam = world_to_camera(xyz, view)
            if cam[2] <= 0.0:
                continue
            pixel = np.array([view.px + view.f * cam[0] / cam[2],
                              view.py + view.f * cam[1] / cam[2]])
            if _in_frame(pixel, config):
                seen.add(view.image_id)
        if len(seen) >= 2:
            tie_points.append(TiePoint(xyz=xyz, visible_in=frozenset(seen)))

    # Clutter: ellipses built to satisfy the silhouette identity, then
    # inflated along the major axis so the gate must reject them.
    clutter_ids = set()
    for idx, view in enumerate(views):
        for c in range(config.clutter_per_image):
            cx = rng.uniform(0.2 * config.width, 0.8 * config.width)
            cy = rng.uniform(0.2 * config.height, 0.8 * config.height)
            b = rng.uniform(60.0, 150.0)
            offset2 = (cx - view.px) ** 2 + (cy - view.py) ** 2
            a_spherical = b * math.sqrt(offset2 / (view.f ** 2 + b ** 2) + 1.0)
            a = a_spherical * config.clutter_inflation
            theta = fold_axis_angle(rng.uniform(-math.pi / 2, math.pi / 2))
            eid = f"clutter-{idx:02d}-{c:02d}"
            clutter_ids.add(eid)
            observations[view.image_id].append(EllipseObservation(
                image_id=view.image_id, ellipse_id=eid,
                x_ce=cx, y_ce=cy, a_e=max(a, b), b_e=min(a, b), theta=theta))

    return SyntheticScene(config=config, views=views, spheres=spheres,
                          observations=observations, tie_points=tie_points,
                          clutter_ids=clutter_ids)


def perturb_observations(scene: SyntheticScene, sigma, seed: int) -> SyntheticScene:
    """Add zero-mean Gaussian noise to (a_e, b_e, x_ce, y_ce) of every ellipse.

    ``sigma`` is a scalar or per-parameter 4-sequence in pixels.  Each noisy
    observation carries the true diagonal covariance; the axis angle is left
    untouched, and axes are swapped back if noise inverts their ordering.
    With all-zero sigma the scene is returned unchanged.
    """
    sig = np.asarray(sigma, dtype=float) * np.ones(4)
    if np.any(sig < 0.0):
        raise ValueError("noise sigma must be nonnegative")
    if not np.any(sig > 0.0):
        return scene
    rng = _rng(seed, 1)
    cov = np.diag(sig ** 2)
    noisy: dict = {}
    for image_id in sorted(scene.observations):
        out = []
        for e in scene.observations[image_id]:
            da, db, dx, dy = rng.normal(0.0, sig)
            a = e.a_e + da
            b = e.b_e + db
            if b > a:
                a, b = b, a
            b = max(b, 1e-6)  # keep the observation valid under extreme draws
            a = max(a, b)
            out.append(EllipseObservation(
                image_id=e.image_id, ellipse_id=e.ellipse_id,
                x_ce=e.x_ce + dx, y_ce=e.y_ce + dy, a_e=a, b_e=b,
                theta=e.theta, cov=cov.copy()))
        noisy[image_id] = out
    return SyntheticScene(config=scene.config, views=scene.views,
                          spheres=scene.spheres, observations=noisy,
                          tie_points=scene.tie_points,
                          clutter_ids=set(scene.clutter_ids))


def p_rmse(estimated, truth: Sphere) -> tuple[float, float]:
    """Percentage parameter errors (center, radius) against ground truth.

    Center error is 100 * ||C_est - C_true|| / R_true and radius error
    100 * |R_est - R_true| / R_true, both normalized by the true radius so
    spheres of different sizes are comparable.
    """
    sphere = estimated.sphere if isinstance(estimated, SphereModel) else estimated
    if sphere.frame != truth.frame:
        raise ValueError(f"frame mismatch: {sphere.frame!r} vs {truth.frame!r}")
    center_pct = 100.0 * float(np.linalg.norm(sphere.center - truth.center)) / truth.radius
    radius_pct = 100.0 * abs(sphere.radius - truth.radius) / truth.radius
    return center_pct, radius_pct


def p_rmse_combined(estimated, truth: Sphere) -> float:
    """Single-number variant: RMS over the four parameter errors, as a
    percentage of the true radius."""
    sphere = estimated.sphere if isinstance(estimated, SphereModel) else estimated
    if sphere.frame != truth.frame:
        raise ValueError(f"frame mismatch: {sphere.frame!r} vs {truth.frame!r}")
    delta = np.append(sphere.center - truth.center, sphere.radius - truth.radius)
    return 100.0 * math.sqrt(float(np.mean(delta ** 2))) / truth.radius


@dataclass
class TrialStats:
    """Aggregate accuracy/runtime of p subsets of k views."""

    k: int
    p: int
    center_mean: float
    center_min: float
    center_max: float
    radius_mean: float
    radius_min: float
    radius_max: float
    mean_ms: float
    failures: int
    selection: str = "random"


def _merge_tracks(pair_matches: list[tuple[str, str, MatchCandidate]]) -> list[dict]:
    """Greedy union of pairwise matches into one-ellipse-per-view tracks.

    Matches are processed in ascending reprojection distance; a union is
    skipped when it would put two different ellipses of the same view into
    one track.  Returns dicts mapping image_id -> ellipse_id.
    """
    ordered = sorted(pair_matches,
                     key=lambda m: (m[2].reprojection_distance, m[0], m[1],
                                    m[2].ellipse_l, m[2].ellipse_k))
    parent: dict = {}

    def find(node):
        while parent[node] != node:
            parent[node] = parent[parent[node]]
            node = parent[node]
        return node

    members: dict = {}
    for vid_l, vid_k, cand in ordered:
        node_l = (vid_l, cand.ellipse_l)
        node_k = (vid_k, cand.ellipse_k)
        for node in (node_l, node_k):
            if node not in parent:
                parent[node] = node
                members[node] = {node[0]: node[1]}
        root_l, root_k = find(node_l), find(node_k)
        if root_l == root_k:
            continue
        views_l, views_k = members[root_l], members[root_k]
        overlap = set(views_l) & set(views_k)
        if any(views_l[v] != views_k[v] for v in overlap):
            continue  # conflicting assignment; keep tracks separate
        parent[root_k] = root_l
        views_l.update(views_k)
        del members[root_k]
    return [members[find(node)] for node in sorted(members)]


def reconstruct_subset(views: Sequence[CameraView], observations: dict,
                       k_sigma: float = 2.0, tol: Optional[float] = None,
                       ) -> list[tuple[dict, SphereModel]]:
    """Full pipeline on one view subset: gate, all-pairs matching, tracks,
    multi-view reconstruction.  Returns (track, model) pairs."""
    view_map = {v.image_id: v for v in views}
    gated = {}
    for vid in sorted(view_map):
        view = view_map[vid]
        gated[vid] = [e for e in observations.get(vid, [])
                      if classify_spherical(e, view.f, view.px, view.py, k=k_sigma).accepted]
    pair_matches = []
    for vid_l, vid_k in itertools.combinations(sorted(view_map), 2):
        result = match_ellipses(view_map[vid_l], gated[vid_l],
                                view_map[vid_k], gated[vid_k], tol=tol)
        for cand in result.matches:
            pair_matches.append((vid_l, vid_k, cand))
    models = []
    ellipse_map = {(vid, e.ellipse_id): e
                   for vid in view_map for e in gated[vid]}
    for track in _merge_tracks(pair_matches):
        if len(track) < 2:
            continue
        matched = [(view_map[vid], ellipse_map[(vid, eid)])
                   for vid, eid in sorted(track.items())]
        try:
            models.append((track, reconstruct_sphere(matched)))
        except (DegenerateGeometry, DegenerateProjection):
            continue
    return models


def _associate(models: list[tuple[dict, SphereModel]],
               truth: dict) -> dict:
    """Assign each track to the ground-truth sphere named by the plurality of
    its member ellipse ids; keep the strongest track per sphere."""
    chosen: dict = {}
    for track, model in models:
        counts = Counter(track.values())
        top = max(counts.values())
        sid = min(eid for eid, c in counts.items() if c == top)
        if sid not in truth:
            continue
        score = (len(track), -model.triangulation_residual)
        if sid not in chosen or score > chosen[sid][0]:
            chosen[sid] = (score, model)
    return {sid: model for sid, (_, model) in chosen.items()}


def _draw_subsets(ids: Sequence[str], k: int, p: int,
                  rng: np.random.Generator) -> list[tuple[str, ...]]:
    total = math.comb(len(ids), k)
    if total <= p:
        return [tuple(c) for c in itertools.combinations(sorted(ids), k)]
    ids = sorted(ids)
    seen = set()
    subsets = []
    while len(subsets) < p:
        pick = tuple(sorted(rng.choice(len(ids), size=k, replace=False).tolist()))
        if pick in seen:
            continue
        seen.add(pick)
        subsets.append(tuple(ids[i] for i in pick))
    return subsets


def _run_trials(scene: SyntheticScene, subsets, k: int, p: int, selection: str,
                k_sigma: float, tol: Optional[float], timing: bool) -> TrialStats:
    truth = dict(scene.spheres)
    centers, radii, times = [], [], []
    failures = 0
    for subset in subsets:
        views = [scene.view(vid) for vid in subset]
        start = time.perf_counter() if timing else 0.0
        try:
            models = reconstruct_subset(views, scene.observations,
                                        k_sigma=k_sigma, tol=tol)
        except (DegenerateGeometry, DegenerateProjection):
            failures += 1
            continue
        elapsed = time.perf_counter() - start if timing else 0.0
        assoc = _associate(models, truth)
        if not assoc:
            # The gate is allowed to drop ~5% of true silhouettes per view, so
            # a subset may reconstruct fewer spheres than exist; only a trial
            # that produces nothing (or degenerates) counts as failed.
            failures += 1
            continue
        errors = [p_rmse(model, truth[sid]) for sid, model in sorted(assoc.items())]
        centers.append(float(np.mean([c for c, _ in errors])))
        radii.append(float(np.mean([r for _, r in errors])))
        times.append(elapsed)
    if centers:
        stats = (float(np.mean(centers)), float(np.min(centers)), float(np.max(centers)),
                 float(np.mean(radii)), float(np.min(radii)), float(np.max(radii)))
        mean_ms = 1000.0 * float(np.mean(times)) if timing else 0.0
    else:
        stats = (math.nan,) * 6
        mean_ms = math.nan if timing else 0.0
    return TrialStats(k=k, p=p, center_mean=stats[0], center_min=stats[1],
                      center_max=stats[2], radius_mean=stats[3],
                      radius_min=stats[4], radius_max=stats[5],
                      mean_ms=mean_ms, failures=failures, selection=selection)


def monte_carlo_views(scene: SyntheticScene, k_values: Sequence[int], seed: int,
                      k_sigma: float = 2.0, tol: Optional[float] = None,
                      timing: bool = True,
                      include_best_pair: bool = True) -> list[TrialStats]:
    """Accuracy/runtime sweep over random k-view subsets.

    For each k, p = min(50, C(n, k)) unique subsets are drawn with a stream
    derived from (seed, k); failed trials (degeneracy, or fewer tracks than
    ground-truth spheres) are counted and excluded from the statistics.  When
    ``include_best_pair`` is set, the highest-scoring pair of the full
    network is appended as a distinguished single-trial entry.
    """
    ids = [v.image_id for v in scene.views]
    n = len(ids)
    results = []
    for k in sorted(set(int(k) for k in k_values)):
        if k < 2 or k > n:
            raise ValueError(f"subset size {k} outside [2, {n}]")
        p = min(50, math.comb(n, k))
        subsets = _draw_subsets(ids, k, p, _rng(seed, 2, k))
        results.append(_run_trials(scene, subsets, k, p, "random",
                                   k_sigma, tol, timing))
    if include_best_pair:
        pair = best_pair(scene.network)
        results.append(_run_trials(scene, [(pair.i, pair.j)], 2, 1, "best_pair",
                                   k_sigma, tol, timing))
    return results
