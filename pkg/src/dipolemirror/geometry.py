"""Parabolic-mirror geometry: angle maps and dipole-weighted solid angle.

Conventions
-----------
The mirror is the paraboloid z = r^2/(4f) - f with its focus at the origin,
illuminated by a collimated beam travelling parallel to the axis. Polar
angles theta are measured at the focus from the vertex direction, so
theta = 0 points at the vertex and the rim of a deep mirror sits beyond
90 degrees. With the dimensionless entrance-plane radius rho = r/f the
mirror maps

    theta(rho) = 2*arctan(rho/2),        rho(theta) = 2*tan(theta/2).

A ray parallel to the axis is deflected by pi - theta on reflection, and
deflection = pi - 2*alpha for a mirror, so the local angle of incidence is
alpha = theta/2: normal incidence at the vertex, 67.2 degrees at the rim of
the default aperture. Radially polarized input is p-polarized at every
point of the surface.

The radiation pattern of a linear dipole on the axis weights the covered
solid angle as D(theta) = sin^2(theta); the full-sphere weighted solid
angle is 8*pi/3.

All angles are radians unless a name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Full-sphere dipole-weighted solid angle, 2*pi * integral of sin^3.
OMEGA_MAX = 8.0 * math.pi / 3.0

__all__ = [
    "OMEGA_MAX",
    "ApertureSpec",
    "AngleInterval",
    "theta_from_rho",
    "rho_from_theta",
    "incidence_angle",
    "weighted_solid_angle",
    "weighted_fraction",
]


@dataclass(frozen=True)
class ApertureSpec:
    """Physical aperture of the mirror.

    Parameters
    ----------
    focal_length_mm : float
        Focal length f of the paraboloid.
    outer_radius_mm : float
        Radius of the entrance aperture (mirror rim).
    bore_radius_mm : float
        Radius of the on-axis bore through the vertex; 0 for none.
    """

    focal_length_mm: float = 2.1
    outer_radius_mm: float = 10.0
    bore_radius_mm: float = 0.75

    def __post_init__(self):
        if self.focal_length_mm <= 0:
            raise DomainError(f"focal length must be positive, got {self.focal_length_mm}")
        if not 0 <= self.bore_radius_mm < self.outer_radius_mm:
            raise DomainError(
                "need 0 <= bore radius < outer radius, got "
                f"{self.bore_radius_mm} and {self.outer_radius_mm}"
            )

    @property
    def rho_max(self) -> float:
        """Outer aperture radius in units of f."""
        return self.outer_radius_mm / self.focal_length_mm

    @property
    def rho_bore(self) -> float:
        """Bore radius in units of f."""
        return self.bore_radius_mm / self.focal_length_mm

    @property
    def theta_max(self) -> float:
        """Polar angle of the rim as seen from the focus."""
        return theta_from_rho(self.rho_max)

    @property
    def theta_bore(self) -> float:
        """Polar angle subtended by the bore."""
        return theta_from_rho(self.rho_bore)

    def angle_interval(self, include_bore: bool = False) -> "AngleInterval":
        """Angular interval covered by the mirror.

        With ``include_bore`` the interval starts at the vertex even though
        the bore removes those angles; useful for quantifying the bore's
        effect on the collected solid angle.
        """
        lo = 0.0 if include_bore else self.theta_bore
        return AngleInterval(lo, self.theta_max)


@dataclass(frozen=True)
class AngleInterval:
    """Polar-angle interval [theta_min, theta_max], measured from the vertex."""

    theta_min: float
    theta_max: float

    def __post_init__(self):
        if not 0.0 <= self.theta_min < self.theta_max <= math.pi:
            raise DomainError(
                f"need 0 <= theta_min < theta_max <= pi, got "
                f"[{self.theta_min}, {self.theta_max}]"
            )


def theta_from_rho(rho):
    """Polar angle at the focus for entrance-plane radius rho = r/f.

    Works on scalars and arrays. Strictly increasing; rho=0 is the vertex
    direction and rho -> infinity approaches pi.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError("rho must be non-negative")
    out = 2.0 * np.arctan(rho / 2.0)
    return float(out) if out.ndim == 0 else out


def rho_from_theta(theta):
    """Inverse of :func:`theta_from_rho` on [0, pi)."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta >= math.pi):
        raise DomainError("theta must lie in [0, pi)")
    out = 2.0 * np.tan(theta / 2.0)
    return float(out) if out.ndim == 0 else out


def incidence_angle(theta):
    """Angle of incidence on the mirror surface for focal polar angle theta.

    alpha = theta/2 follows from the ray deflection pi - theta and
    deflection = pi - 2*alpha. Normal incidence at the vertex (theta=0),
    grazing in the limit theta -> pi. Monotone increasing.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta > math.pi):
        raise DomainError("theta must lie in [0, pi]")
    out = theta / 2.0
    return float(out) if out.ndim == 0 else out


def _sin3_antiderivative(theta):
    # integral of sin^3 = -cos + cos^3/3
    c = np.cos(theta)
    return -c + c**3 / 3.0


def weighted_solid_angle(interval: AngleInterval) -> float:
    """Dipole-weighted solid angle over an angular interval.

    Omega = 2*pi * integral of sin^3(theta) d(theta) over the interval,
    evaluated in closed form. Azimuthally complete coverage is assumed.
    The full sphere gives OMEGA_MAX = 8*pi/3.
    """
    val = _sin3_antiderivative(interval.theta_max) - _sin3_antiderivative(interval.theta_min)
    return 2.0 * math.pi * float(val)


def weighted_fraction(interval: AngleInterval) -> float:
    """Weighted solid angle as a fraction of the full-sphere value."""
    return weighted_solid_angle(interval) / OMEGA_MAX
