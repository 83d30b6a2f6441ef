"""Closed-form mapping between spheres and their projected image ellipses.

A sphere in front of a pinhole camera projects to an ellipse.  For a sphere
with camera-frame center (X, Y, Z) and radius R the silhouette ellipse is

    a_e     = f * R * sqrt(X^2 + Y^2 + Z^2 - R^2) / (Z^2 - R^2)
    b_e     = f * R / sqrt(Z^2 - R^2)
    center  = (px + f*Z*X / (Z^2 - R^2),  py + f*Z*Y / (Z^2 - R^2))
    theta   = atan2(Y, X), folded into [-pi/2, pi/2)

Because the ellipse center is displaced outward from the true image of the
sphere center (the eccentricity effect), the inverse map comes in two parts:
``projected_sphere_center`` recovers the true image of the center from the
ellipse parameters alone, and ``center_from_single_view`` recovers the
camera-frame 3D center up to an unknown radius.

Conventions used throughout the package:

* world -> camera transform is ``x_cam = rot @ x_world + t``;
* all image quantities are in pixels, the focal length included;
* the camera is unit-aspect and zero-skew (K has only f, px, py).

All functions are pure; there is no shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateProjection

# Relative margin by which the sphere depth must exceed the radius before the
# silhouette formulas are considered well-conditioned.
DEPTH_MARGIN = 1e-9

_ROT_TOL = 1e-9


def fold_axis_angle(theta: float) -> float:
    """Fold an axis orientation into [-pi/2, pi/2); axes are pi-periodic."""
    return (theta + math.pi / 2.0) % math.pi - math.pi / 2.0


def _as_matrix(value, shape, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


def min_symmetric_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``m``."""
    sym = 0.5 * (m + m.T)
    return float(np.linalg.eigvalsh(sym)[0])


def is_psd(m: np.ndarray) -> bool:
    """Symmetric PSD test: symmetric to round-off and no eigenvalue of the
    symmetric part below -1e-9 * trace."""
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-9 * (1.0 + float(np.abs(m).max(initial=0.0)))):
        return False
    return min_symmetric_eigenvalue(m) >= -1e-9 * float(np.trace(m))


@dataclass
class CameraView:
    """One calibrated image: interior orientation plus world-to-camera pose.

    ``rot`` maps world coordinates into the camera frame and ``t`` is the
    world origin expressed in camera coordinates, i.e.
    ``x_cam = rot @ x_world + t``.  ``iop_cov`` is the optional 3x3
    covariance of (px, py, f) in pixels^2.
    """

    image_id: str
    f: float
    px: float
    py: float
    rot: np.ndarray
    t: np.ndarray
    iop_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        self.f = float(self.f)
        self.px = float(self.px)
        self.py = float(self.py)
        self.rot = _as_matrix(self.rot, (3, 3), "rot")
        self.t = np.asarray(self.t, dtype=float).reshape(3)
        if not self.f > 0.0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        err = float(np.linalg.norm(self.rot.T @ self.rot - np.eye(3)))
        if err >= _ROT_TOL:
            raise ValueError(f"rot is not orthonormal (||R^T R - I|| = {err:.3e})")
        if np.linalg.det(self.rot) < 0.0:
            raise ValueError("rot must be a proper rotation (det +1)")
        if self.iop_cov is not None:
            self.iop_cov = _as_matrix(self.iop_cov, (3, 3), "iop_cov")
            if not is_psd(self.iop_cov):
                raise ValueError("iop_cov must be symmetric positive semi-definite")

    @property
    def calibration_matrix(self) -> np.ndarray:
        """3x3 pinhole calibration matrix (unit aspect, zero skew)."""
        return np.array([[self.f, 0.0, self.px],
                         [0.0, self.f, self.py],
                         [0.0, 0.0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rot.T @ self.t


@dataclass
class EllipseObservation:
    """A detected ellipse: center, semi-axes, axis angle, optional covariance.

    ``cov`` is the 4x4 covariance of (a_e, b_e, x_ce, y_ce) in pixels^2.
    ``theta`` is normalized into [-pi/2, pi/2) on construction.
    """

    image_id: str
    ellipse_id: str
    x_ce: float
    y_ce: float
    a_e: float
    b_e: float
    theta: float
    cov: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x_ce = float(self.x_ce)
        self.y_ce = float(self.y_ce)
        self.a_e = float(self.a_e)
        self.b_e = float(self.b_e)
        if not self.b_e > 0.0:
            raise ValueError(f"semi-minor length must be positive, got {self.b_e}")
        if self.a_e < self.b_e:
            raise ValueError(
                f"semi-major length {self.a_e} is smaller than semi-minor {self.b_e}")
        self.theta = fold_axis_angle(float(self.theta))
        if self.cov is not None:
            self.cov = _as_matrix(self.cov, (4, 4), "cov")
            if not is_psd(self.cov):
                raise ValueError("cov must be symmetric positive semi-definite")


@dataclass
class Sphere:
    """A sphere with a coordinate-frame tag: "world" or "camera:<image_id>"."""

    center: np.ndarray
    radius: float
    frame: str = "world"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        self.radius = float(self.radius)
        if not self.radius > 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")


def build_projective_matrix(view: CameraView) -> np.ndarray:
    """3x4 projective matrix K @ [rot | t]."""
    return view.calibration_matrix @ np.hstack([view.rot, view.t[:, None]])


def world_to_camera(point, view: CameraView) -> np.ndarray:
    """Rigid transform of a world point into the camera frame."""
    return view.rot @ np.asarray(point, dtype=float).reshape(3) + view.t


def camera_to_world(point, view: CameraView) -> np.ndarray:
    """Inverse rigid transform of ``world_to_camera``."""
    return view.rot.T @ (np.asarray(point, dtype=float).reshape(3) - view.t)


def project_point(point_world, view: CameraView) -> np.ndarray:
    """Pinhole projection of a world point; raises if it is not in front."""
    cam = world_to_camera(point_world, view)
    if cam[2] <= 0.0:
        raise DegenerateProjection(
            f"point has nonpositive depth {cam[2]:.3e} in view {view.image_id!r}")
    return np.array([view.px + view.f * cam[0] / cam[2],
                     view.py + view.f * cam[1] / cam[2]])


def project_sphere(sphere: Sphere, f: float, px: float, py: float,
                   image_id: str = "", ellipse_id: str = "") -> EllipseObservation:
    """Silhouette ellipse of a camera-frame sphere (noise-free, no covariance).

    Raises DegenerateProjection unless the depth clears the radius by a
    relative margin of ``DEPTH_MARGIN``; otherwise the Z^2 - R^2 denominators
    are ill-conditioned.
    """
    x, y, z = sphere.center
    r = sphere.radius
    if z <= r * (1.0 + DEPTH_MARGIN):
        raise DegenerateProjection(
            f"sphere depth {z:.6g} does not clear radius {r:.6g}")
    d2 = z * z - r * r
    u = x * x + y * y
    b_e = f * r / math.sqrt(d2)
    # a_e written as b_e * sqrt(u/d2 + 1) so a_e >= b_e holds exactly in
    # floating point; algebraically identical to f*R*sqrt(u + d2)/d2.
    a_e = b_e * math.sqrt(u / d2 + 1.0)
    x_ce = px + f * z * x / d2
    y_ce = py + f * z * y / d2
    theta = fold_axis_angle(math.atan2(y, x)) if u > 0.0 else 0.0
    return EllipseObservation(image_id=image_id, ellipse_id=ellipse_id,
                              x_ce=x_ce, y_ce=y_ce, a_e=a_e, b_e=b_e, theta=theta)


def project_sphere_into_view(sphere: Sphere, view: CameraView,
                             ellipse_id: str = "") -> EllipseObservation:
    """Transform a world-frame sphere into a view and project it."""
    cam = world_to_camera(sphere.center, view)
    cam_sphere = Sphere(cam, sphere.radius, frame=f"camera:{view.image_id}")
    return project_sphere(cam_sphere, view.f, view.px, view.py,
                          image_id=view.image_id, ellipse_id=ellipse_id)


def projected_sphere_center(e: EllipseObservation, f: float, px: float,
                            py: float) -> np.ndarray:
    """True image of the sphere center, from the ellipse parameters alone.

    This is NOT the ellipse center: the perspective silhouette of a sphere is
    displaced outward from the image of its center, and the displacement is a
    closed-form function of the semi-minor length and the focal length.
    """
    b2 = e.b_e * e.b_e
    f2 = f * f
    w = f2 + b2
    return np.array([(f2 * e.x_ce + b2 * px) / w,
                     (f2 * e.y_ce + b2 * py) / w])


def center_from_single_view(e: EllipseObservation, f: float, px: float,
                            py: float, radius: float) -> Sphere:
    """Camera-frame sphere center from one ellipse, given the radius.

    The recovered center scales linearly with the supplied radius, so a
    single view fixes the center only up to that scale factor.
    """
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    s = math.hypot(f, e.b_e)  # sqrt(f^2 + b^2)
    z = radius * s / e.b_e
    scale = f * radius / (e.b_e * s)
    x = scale * (e.x_ce - px)
    y = scale * (e.y_ce - py)
    frame = f"camera:{e.image_id}" if e.image_id else "camera"
    return Sphere(np.array([x, y, z]), radius, frame=frame)


def radius_from_depth(z_c: float, b_e: float, f: float) -> float:
    """Sphere radius from its camera-frame depth and the semi-minor length."""
    if not z_c > 0.0:
        raise ValueError(f"depth must be positive, got {z_c}")
    if not b_e > 0.0:
        raise ValueError(f"semi-minor length must be positive, got {b_e}")
    if not f > 0.0:
        raise ValueError(f"focal length must be positive, got {f}")
    return z_c * b_e / math.hypot(b_e, f)
