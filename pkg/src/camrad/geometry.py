"""Coordinate systems and the bilateral camera-radar ground projection.

Conventions, fixed for the whole package:

  * Camera frame: x right, y down, z forward along the optical axis.
    The radar shares the orientation; ``t_cr`` translates camera
    coordinates into the radar origin.
  * Radar points are (range r in meters, azimuth theta in radians),
    theta measured from boresight, positive toward +x (camera right).
  * Ground plane g = (phi, gamma, h): pitch phi positive when the
    camera looks down toward the ground, roll gamma signed so that
    y_c = h - r*sin(phi) - x_c*tan(gamma), camera height h in meters.

The ground model keeps the small-angle range term r*sin(phi) instead of
an exact plane intersection.  That choice makes the pixel-to-radar
direction below the exact algebraic inverse of the radar-to-pixel one,
so round trips close to machine precision everywhere both directions
are defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ProjectionDomainError

# Guard applied to every projective denominator, in its natural units.
EPS_DENOM = 1e-6


@dataclass(frozen=True)
class GroundPlane:
    """Ground-plane estimate relative to the camera.

    phi, gamma are radians; h is the camera height in meters.
    """

    phi: float
    gamma: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.phi) and abs(self.phi) < math.pi / 4):
            raise ValueError(f"pitch out of range: {self.phi!r}")
        if not (math.isfinite(self.gamma) and abs(self.gamma) < math.pi / 4):
            raise ValueError(f"roll out of range: {self.gamma!r}")
        if not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"camera height must be positive: {self.h!r}")


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the camera-to-radar translation."""

    fx: float
    fy: float
    cx: float
    cy: float
    t_cr: tuple[float, float, float] = (0.0, 0.0, 0.0)
    image_width: int = 1440
    image_height: int = 1080

    def __post_init__(self):
        object.__setattr__(self, "t_cr", tuple(float(t) for t in self.t_cr))
        if len(self.t_cr) != 3 or not all(math.isfinite(t) for t in self.t_cr):
            raise ValueError(f"t_cr must be a finite 3-vector: {self.t_cr!r}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.image_width):
            raise ValueError(f"cx out of image: {self.cx!r}")
        if not (0 <= self.cy < self.image_height):
            raise ValueError(f"cy out of image: {self.cy!r}")


@dataclass(frozen=True)
class RadarPoint:
    """BEV polar point: range in meters, azimuth in radians.

    The type admits the full forward half-plane |theta| <= pi/2.
    """

    r: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"range must be positive: {self.r!r}")
        if not (math.isfinite(self.theta) and abs(self.theta) <= math.pi / 2):
            raise ValueError(f"azimuth outside half-plane: {self.theta!r}")


@dataclass(frozen=True)
class PixelPoint:
    """Image point in pixels.  Not clamped to the sensor extent."""

    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError(f"pixel must be finite: ({self.u!r}, {self.v!r})")


@dataclass(frozen=True)
class CamPoint3:
    """Camera-frame 3D point (x right, y down, z forward), meters."""

    xc: float
    yc: float
    zc: float


def r2c_cam_point(p: RadarPoint, g: GroundPlane, cam: CameraModel) -> CamPoint3:
    """Lift a radar point onto the ground model in camera coordinates.

    x_c = r*sin(theta) + t_x,  z_c = r*cos(theta) + t_z,
    y_c = h - r*sin(phi) - x_c*tan(gamma).

    Raises ProjectionDomainError when z_c is not safely positive.
    """
    tx, _, tz = cam.t_cr
    xc = p.r * math.sin(p.theta) + tx
    zc = p.r * math.cos(p.theta) + tz
    if zc <= EPS_DENOM:
        raise ProjectionDomainError(
            f"point projects behind the camera (z_c={zc:.3g} m)")
    yc = g.h - p.r * math.sin(g.phi) - xc * math.tan(g.gamma)
    return CamPoint3(xc, yc, zc)


def project_r2c(p: RadarPoint, g: GroundPlane, cam: CameraModel) -> PixelPoint:
    """Project a radar range-azimuth point to a pixel.

    u = fx*x_c/z_c + cx,  v = fy*y_c/z_c + cy with the ground-model
    y_c.  The result is not clamped to the image; callers decide how to
    treat off-sensor pixels.
    """
    c = r2c_cam_point(p, g, cam)
    return PixelPoint(cam.fx * c.xc / c.zc + cam.cx,
                      cam.fy * c.yc / c.zc + cam.cy)


def pixel_height(p: RadarPoint, phys_height: float, g: GroundPlane,
                 cam: CameraModel) -> float:
    """Projected pixel length of a vertical extent standing at p.

    A physical height H raised from the ground contact spans
    fy*H/z_c pixels; the top shares the foot's u.
    """
    c = r2c_cam_point(p, g, cam)
    return cam.fy * phys_height / c.zc


def c2r_cam_point(p: PixelPoint, g: GroundPlane, cam: CameraModel) -> CamPoint3:
    """Intersect a pixel ray with the ground model, camera coordinates.

    With normalized coordinates xh = (u-cx)/fx, yh = (v-cy)/fy the
    translation-free solution is z_c = h / (sqrt(1+xh^2)*sin(phi)
    + xh*tan(gamma) + yh).  A nonzero t_cr makes the range term in the
    ground model camera-off-center; the closed form below solves the
    resulting quadratic exactly and degenerates to the simple ratio at
    t_x = t_z = 0.  Validity is still bounded by the same denominator:
    below it the ray never meets the ground model.
    """
    tx, _, tz = cam.t_cr
    xh = (p.u - cam.cx) / cam.fx
    yh = (p.v - cam.cy) / cam.fy
    s = math.sin(g.phi)
    tg = math.tan(g.gamma)
    hyp = math.sqrt(1.0 + xh * xh)

    denom = hyp * s + xh * tg + yh
    if denom <= EPS_DENOM:
        raise ProjectionDomainError(
            f"pixel at or above the horizon (denominator={denom:.3g})")

    a = yh + xh * tg
    b = xh * tx + tz
    c2 = tx * tx + tz * tz
    disc = ((1.0 + xh * xh) * g.h * g.h - 2.0 * g.h * a * b + a * a * c2
            - (s * (tx - xh * tz)) ** 2)
    if disc < 0.0:
        raise ProjectionDomainError("pixel ray misses the ground model")
    den = g.h * a - s * s * b + s * math.sqrt(disc)
    if den <= EPS_DENOM * g.h:
        raise ProjectionDomainError(
            f"pixel at or above the horizon (denominator={den / g.h:.3g})")

    zc = (g.h * g.h - s * s * c2) / den
    if zc <= EPS_DENOM:
        raise ProjectionDomainError(f"no forward intersection (z_c={zc:.3g})")
    return CamPoint3(xh * zc, yh * zc, zc)


def project_c2r(p: PixelPoint, g: GroundPlane, cam: CameraModel) -> RadarPoint:
    """Back-project a pixel to radar range-azimuth through the ground model.

    r = sqrt((x_c-t_x)^2 + (z_c-t_z)^2),  theta = atan2(x_c-t_x, z_c-t_z).
    Exact inverse of project_r2c wherever both are defined.
    """
    c = c2r_cam_point(p, g, cam)
    tx, _, tz = cam.t_cr
    dx = c.xc - tx
    dz = c.zc - tz
    r = math.hypot(dx, dz)
    if r <= EPS_DENOM:
        raise ProjectionDomainError("pixel maps onto the radar origin")
    theta = math.atan2(dx, dz)
    if abs(theta) > math.pi / 2:
        raise ProjectionDomainError(
            f"pixel maps behind the radar half-plane (theta={theta:.3g})")
    return RadarPoint(r, theta)


def horizon_v(u: float, g: GroundPlane, cam: CameraModel) -> float:
    """Image row where the back-projection denominator vanishes at column u.

    project_c2r is valid strictly below this row (larger v).  The
    boundary does not move with t_cr: translation only rescales the
    intersection distance, not the direction at which it diverges.
    """
    xh = (u - cam.cx) / cam.fx
    yh = -(math.sqrt(1.0 + xh * xh) * math.sin(g.phi)
           + xh * math.tan(g.gamma))
    return cam.cy + cam.fy * yh


def bev_xy(p: RadarPoint) -> tuple[float, float]:
    """Cartesian BEV embedding (x lateral-right, z forward), meters."""
    return p.r * math.sin(p.theta), p.r * math.cos(p.theta)


def bev_distance(a: RadarPoint, b: RadarPoint) -> float:
    """Euclidean distance between two radar points in BEV meters."""
    ax, az = bev_xy(a)
    bx, bz = bev_xy(b)
    return math.hypot(ax - bx, az - bz)
