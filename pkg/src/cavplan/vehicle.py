"""Kinematic bicycle model: discrete dynamics, physical limits, analytic linearization.

State is z = [x, y, theta, v] (rear-axle position, heading from +x, speed);
input is u = [a, delta] (acceleration, front-wheel steering angle).  One step
of length dt advances the pose along a circular-arc approximation whose
validity requires |v * dt * sin(delta)| <= wheelbase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v], dtype=float)

    @staticmethod
    def from_array(z) -> "VehicleState":
        return VehicleState(float(z[0]), float(z[1]), float(z[2]), float(z[3]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class ControlInput:
    a: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.delta], dtype=float)

    @staticmethod
    def from_array(u) -> "ControlInput":
        return ControlInput(float(u[0]), float(u[1]))


@dataclass(frozen=True)
class VehicleGeometry:
    """Physical footprint: wheelbase, body box, and the double-circle/ellipse hull.

    ``d_rear`` is signed; the default -0.28 m places the rear bounding circle
    0.28 m behind the rear-axle reference point.
    """

    wheelbase: float = 2.4
    length: float = 3.8
    width: float = 1.7
    d_front: float = 2.68
    d_rear: float = -0.28
    ellipse_a: float = 3.0
    ellipse_b: float = 1.1
    circle_radius: float = 2.55

    def __post_init__(self):
        if not (self.ellipse_a > self.ellipse_b > 0.0):
            raise ValueError("ellipse semi-axes must satisfy a > b > 0")
        if self.circle_radius <= 0.0 or self.wheelbase <= 0.0:
            raise ValueError("circle_radius and wheelbase must be positive")


@dataclass(frozen=True)
class VehicleLimits:
    """Box bounds on the constrained variables (v, delta, a)."""

    a_min: float = -5.0
    a_max: float = 3.0
    delta_max: float = 0.6
    v_min: float = 0.0
    v_max: float = 25.0


@dataclass(frozen=True)
class LinearizedDynamics:
    """First-order model dz' = A dz + B du around a (state, input) working point."""

    A: np.ndarray
    B: np.ndarray


def _arc_terms(v: float, delta: float, dt: float, wheelbase: float):
    """Return (f, g, root) of the arc step; raises DomainError outside validity."""
    g = v * dt * math.sin(delta)
    if abs(g) > wheelbase:
        raise DomainError(
            f"|v*dt*sin(delta)| = {abs(g):.6g} exceeds wheelbase {wheelbase:.6g}"
        )
    root = math.sqrt(wheelbase * wheelbase - g * g)
    f = wheelbase + v * dt * math.cos(delta) - root
    return f, g, root


def step_dynamics(
    z: VehicleState, u: ControlInput, dt: float, geom: VehicleGeometry
) -> VehicleState:
    """Advance the bicycle model one step of length dt.

    Raises:
        DomainError: if the steering/velocity combination leaves the model's
            validity region (arcsin argument outside [-1, 1]).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    f, g, _ = _arc_terms(z.v, u.delta, dt, geom.wheelbase)
    return VehicleState(
        x=z.x + f * math.cos(z.theta),
        y=z.y + f * math.sin(z.theta),
        theta=z.theta + math.asin(g / geom.wheelbase),
        v=z.v + dt * u.a,
    )


def linearize_dynamics(
    z: VehicleState, u: ControlInput, dt: float, geom: VehicleGeometry
) -> LinearizedDynamics:
    """Analytic Jacobians A = df/dz (4x4), B = df/du (4x2) of step_dynamics."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    b = geom.wheelbase
    _, g, root = _arc_terms(z.v, u.delta, dt, b)
    sd, cd = math.sin(u.delta), math.cos(u.delta)
    st, ct = math.sin(z.theta), math.cos(z.theta)

    # d/dv and d/ddelta of the arc-length term f and of asin(g/b).
    dg_dv = dt * sd
    dg_dd = z.v * dt * cd
    df_dv = dt * cd + g * dg_dv / root
    df_dd = -z.v * dt * sd + g * dg_dd / root
    f = b + z.v * dt * cd - root

    A = np.array(
        [
            [1.0, 0.0, -f * st, df_dv * ct],
            [0.0, 1.0, f * ct, df_dv * st],
            [0.0, 0.0, 1.0, dg_dv / root],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [0.0, df_dd * ct],
            [0.0, df_dd * st],
            [0.0, dg_dd / root],
            [dt, 0.0],
        ]
    )
    return LinearizedDynamics(A=A, B=B)


def rollout(
    z0: VehicleState, controls: np.ndarray, dt: float, geom: VehicleGeometry
) -> np.ndarray:
    """Integrate a (T, 2) control sequence from z0; returns (T+1, 4) states."""
    controls = np.asarray(controls, dtype=float)
    states = np.empty((len(controls) + 1, 4))
    cur = z0
    states[0] = cur.as_array()
    for t, (a, delta) in enumerate(controls):
        cur = step_dynamics(cur, ControlInput(float(a), float(delta)), dt, geom)
        states[t + 1] = cur.as_array()
    return states
