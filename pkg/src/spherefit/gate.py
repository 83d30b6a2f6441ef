"""Statistical test deciding whether an ellipse is the projection of a sphere.

Sphere silhouettes satisfy an exact identity between the axis ratio, the
offset of the ellipse center from the principal point, the semi-minor length
and the focal length:

    a_e = b_e * sqrt( ((x_ce-px)^2 + (y_ce-py)^2) / (f^2 + b_e^2) + 1 )

The gate statistic is the normalized defect

    tau = 1 - (b_e/a_e) * sqrt( ((x_ce-px)^2 + (y_ce-py)^2) / (f^2+b_e^2) + 1 )

which is exactly zero for noise-free sphere silhouettes.  With measurement
noise, first-order variance propagation through the closed-form Jacobian
turns the identity into the acceptance test |tau| <= k * sigma_tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidCovariance
from .projection import EllipseObservation, is_psd

#: Conservative per-parameter detector noise assumed when an ellipse carries
#: no covariance (pixels, applied to a_e, b_e, x_ce and y_ce alike).
DEFAULT_SIGMA_PX = 0.5

#: Threshold multiplier giving ~95% acceptance under the normality assumption.
DEFAULT_K = 2.0


@dataclass
class GateReport:
    """Outcome of the spherical-ellipse test for one ellipse."""

    tau: float
    sigma_tau: float
    k: float
    accepted: bool


def default_ellipse_cov(sigma_px: float = DEFAULT_SIGMA_PX) -> np.ndarray:
    """Diagonal 4x4 covariance of (a_e, b_e, x_ce, y_ce) at a common sigma."""
    return np.eye(4) * float(sigma_px) ** 2


def exact_iop_cov() -> np.ndarray:
    """3x3 covariance of (px, py, f) for exactly known interior orientation."""
    return np.zeros((3, 3))


def tau(e: EllipseObservation, f: float, px: float, py: float) -> float:
    """Spherical-ellipse defect; zero exactly for true sphere silhouettes."""
    dx = e.x_ce - px
    dy = e.y_ce - py
    return 1.0 - (e.b_e / e.a_e) * math.sqrt(
        (dx * dx + dy * dy) / (f * f + e.b_e * e.b_e) + 1.0)


def tau_jacobian(e: EllipseObservation, f: float, px: float, py: float) -> np.ndarray:
    """Closed-form gradient of ``tau`` wrt (a_e, b_e, x_ce, y_ce, px, py, f).

    Validated against central finite differences in the test suite; the
    derivation uses m = 1 - tau = (b_e/a_e) * sqrt(u/v + 1) with
    u = (x_ce-px)^2 + (y_ce-py)^2 and v = f^2 + b_e^2.
    """
    a = e.a_e
    b = e.b_e
    dx = e.x_ce - px
    dy = e.y_ce - py
    v = f * f + b * b
    m = 1.0 - tau(e, f, px, py)  # = (b/a) * sqrt(u/v + 1) > 0
    common = 1.0 / (a * a * m * v)
    d_a = m / a
    d_b = -m * f * f / (b * v) - b ** 3 * common
    d_x = -b * b * dx * common
    d_y = -b * b * dy * common
    d_f = f * (a * a * m * m - b * b) * common
    return np.array([d_a, d_b, d_x, d_y, -d_x, -d_y, d_f])


def tau_variance(jacobian: np.ndarray, ellipse_cov: np.ndarray,
                 iop_cov: np.ndarray) -> float:
    """First-order variance of tau: J Sigma J^T with a block-diagonal Sigma.

    Variable order is (a_e, b_e, x_ce, y_ce | px, py, f); the ellipse and
    interior-orientation blocks are uncorrelated because they come from
    independent estimation processes.
    """
    jacobian = np.asarray(jacobian, dtype=float).reshape(7)
    ellipse_cov = np.asarray(ellipse_cov, dtype=float)
    iop_cov = np.asarray(iop_cov, dtype=float)
    if ellipse_cov.shape != (4, 4):
        raise InvalidCovariance(f"ellipse covariance must be 4x4, got {ellipse_cov.shape}")
    if iop_cov.shape != (3, 3):
        raise InvalidCovariance(f"IOP covariance must be 3x3, got {iop_cov.shape}")
    for name, cov in (("ellipse", ellipse_cov), ("IOP", iop_cov)):
        if not is_psd(cov):
            raise InvalidCovariance(f"{name} covariance is not symmetric PSD")
    sigma = np.zeros((7, 7))
    sigma[:4, :4] = ellipse_cov
    sigma[4:, 4:] = iop_cov
    return max(float(jacobian @ sigma @ jacobian), 0.0)


def classify_spherical(e: EllipseObservation, f: float, px: float, py: float,
                       ellipse_cov: Optional[np.ndarray] = None,
                       iop_cov: Optional[np.ndarray] = None,
                       k: float = DEFAULT_K) -> GateReport:
    """Accept or reject an ellipse as a sphere silhouette at |tau| <= k*sigma.

    Covariance fallbacks: an explicit ``ellipse_cov`` wins, else the
    observation's own covariance, else the conservative pixel-level default;
    missing ``iop_cov`` means exactly known interior orientation.
    """
    if not k > 0.0:
        raise ValueError(f"threshold multiplier must be positive, got {k}")
    if ellipse_cov is None:
        ellipse_cov = e.cov if e.cov is not None else default_ellipse_cov()
    if iop_cov is None:
        iop_cov = exact_iop_cov()
    t = tau(e, f, px, py)
    var = tau_variance(tau_jacobian(e, f, px, py), ellipse_cov, iop_cov)
    sigma_tau = math.sqrt(var)
    return GateReport(tau=t, sigma_tau=sigma_tau, k=float(k),
                      accepted=abs(t) <= k * sigma_tau)
