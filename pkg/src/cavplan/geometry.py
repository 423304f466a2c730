"""Inter-vehicle collision geometry.

One vehicle of a pair is wrapped in an ellipse (semi-axes a, b aligned with
its heading), the other in two circles of radius r centered ahead of and
behind its reference point.  Overlap is tested in a normalized frame: rotate
the circle center into the ellipse-aligned frame, scale the axes by
1/(a+r) and 1/(b+r), and compare the norm of the result against 1.  The
linearized safety margin and its Jacobians with respect to both vehicles'
states feed the convexified planning constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePair
from .vehicle import VehicleGeometry, VehicleState

FRONT = "front"
REAR = "rear"

#: below this normalized distance a pair is treated as degenerate
DEGENERATE_TOL = 1e-9


@dataclass(frozen=True)
class PairTransform:
    """Normalized-frame transform of one circle center against one ellipse.

    ``p_bar = S @ R @ (p_circle - p_ellipse)`` is dimensionless; its norm is
    1 exactly when the circle center sits on the enlarged ellipse boundary.
    """

    S: np.ndarray
    R: np.ndarray
    p_bar: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.hypot(self.p_bar[0], self.p_bar[1]))


@dataclass(frozen=True)
class CollisionJacobians:
    """Rows d||p_bar||/dz for the ellipse vehicle and the circle vehicle."""

    J_ellipse: np.ndarray
    J_circle: np.ndarray


def circle_distance(geom: VehicleGeometry, which: str) -> float:
    """Signed center offset of the requested bounding circle along the heading."""
    if which == FRONT:
        return geom.d_front
    if which == REAR:
        return geom.d_rear
    raise ValueError(f"which_circle must be 'front' or 'rear', got {which!r}")


def circle_centers(z: VehicleState, geom: VehicleGeometry) -> tuple[np.ndarray, np.ndarray]:
    """(front, rear) bounding-circle centers; the rear offset is signed."""
    direction = np.array([math.cos(z.theta), math.sin(z.theta)])
    p = z.position
    return p + geom.d_front * direction, p + geom.d_rear * direction


def rotation_to_ellipse_frame(theta: float) -> np.ndarray:
    """Rotation mapping global coordinates into the frame aligned with the ellipse axes."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def pair_transform(
    circle_center: np.ndarray,
    z_ellipse: VehicleState,
    geom_circle: VehicleGeometry,
    geom_ellipse: VehicleGeometry,
) -> PairTransform:
    """Normalized relative position of a circle center w.r.t. an enlarged ellipse."""
    r = geom_circle.circle_radius
    S = np.diag([1.0 / (geom_ellipse.ellipse_a + r), 1.0 / (geom_ellipse.ellipse_b + r)])
    R = rotation_to_ellipse_frame(z_ellipse.theta)
    p_bar = S @ (R @ (np.asarray(circle_center, dtype=float) - z_ellipse.position))
    return PairTransform(S=S, R=R, p_bar=p_bar)


def _circle_center_jacobian(z: VehicleState, d_signed: float) -> np.ndarray:
    """d(circle center)/dz for the circle vehicle; 2x4, velocity column zero."""
    return np.array(
        [
            [1.0, 0.0, -d_signed * math.sin(z.theta), 0.0],
            [0.0, 1.0, d_signed * math.cos(z.theta), 0.0],
        ]
    )


def collision_jacobians(
    z_circle: VehicleState,
    z_ellipse: VehicleState,
    which_circle: str,
    geom_circle: VehicleGeometry,
    geom_ellipse: VehicleGeometry,
) -> CollisionJacobians:
    """Jacobian rows of the normalized distance ||p_bar|| w.r.t. both states.

    Raises:
        DegeneratePair: when the circle center coincides with the ellipse
            center and the unit direction is undefined.
    """
    d_signed = circle_distance(geom_circle, which_circle)
    direction = np.array([math.cos(z_circle.theta), math.sin(z_circle.theta)])
    p_ic = z_circle.position + d_signed * direction

    tf = pair_transform(p_ic, z_ellipse, geom_circle, geom_ellipse)
    n = tf.norm
    if n <= DEGENERATE_TOL:
        raise DegeneratePair("circle center coincides with ellipse center")
    k = tf.p_bar / n

    st, ct = math.sin(z_ellipse.theta), math.cos(z_ellipse.theta)
    xj, yj = z_ellipse.x, z_ellipse.y
    xic, yic = p_ic
    # d(R p_ic)/dz_ellipse: only the heading column is nonzero.
    d_rot_pic = np.array(
        [
            [0.0, 0.0, -st * xic + ct * yic, 0.0],
            [0.0, 0.0, -ct * xic - st * yic, 0.0],
        ]
    )
    # d(R p_ellipse)/dz_ellipse: translation block plus the heading column.
    d_rot_pj = np.array(
        [
            [ct, st, -st * xj + ct * yj, 0.0],
            [-st, ct, -ct * xj - st * yj, 0.0],
        ]
    )
    J_ellipse = k @ tf.S @ (d_rot_pic - d_rot_pj)
    J_circle = k @ tf.S @ tf.R @ _circle_center_jacobian(z_circle, d_signed)
    return CollisionJacobians(J_ellipse=J_ellipse, J_circle=J_circle)


def linearized_safety(
    z_circle: VehicleState,
    z_ellipse: VehicleState,
    dz_circle: np.ndarray,
    dz_ellipse: np.ndarray,
    which_circle: str,
    d_safe: float,
    geom_circle: VehicleGeometry,
    geom_ellipse: VehicleGeometry,
) -> float:
    """First-order safety margin ||p_bar|| + J_e dz_e + J_c dz_c - d_safe."""
    d_signed = circle_distance(geom_circle, which_circle)
    direction = np.array([math.cos(z_circle.theta), math.sin(z_circle.theta)])
    p_ic = z_circle.position + d_signed * direction
    n = pair_transform(p_ic, z_ellipse, geom_circle, geom_ellipse).norm
    jac = collision_jacobians(z_circle, z_ellipse, which_circle, geom_circle, geom_ellipse)
    return (
        n
        + float(jac.J_ellipse @ np.asarray(dz_ellipse, dtype=float))
        + float(jac.J_circle @ np.asarray(dz_circle, dtype=float))
        - d_safe
    )


def ordering_clearance(
    z_circle: VehicleState,
    z_ellipse: VehicleState,
    geom_circle: VehicleGeometry,
    geom_ellipse: VehicleGeometry,
) -> float:
    """Smaller of the two normalized circle-center distances of one ordering.

    A value >= 1 certifies that the circle hull of one vehicle misses the
    enlarged ellipse of the other, hence that the bodies cannot overlap.
    """
    return min(
        pair_transform(center, z_ellipse, geom_circle, geom_ellipse).norm
        for center in circle_centers(z_circle, geom_circle)
    )


def exact_pair_clear(
    z_i: VehicleState,
    z_j: VehicleState,
    geom_i: VehicleGeometry,
    geom_j: VehicleGeometry,
    margin: float = 1.0,
) -> bool:
    """Exact overlap test of a pair under the double-circle/ellipse hulls.

    Either hull ordering certifies separation on its own (each body lies
    inside both of its hull representations), so the pair only counts as
    colliding when both orderings fail the margin.
    """
    return (
        ordering_clearance(z_i, z_j, geom_i, geom_j) >= margin
        or ordering_clearance(z_j, z_i, geom_j, geom_i) >= margin
    )
