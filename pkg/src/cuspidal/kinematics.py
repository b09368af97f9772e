"""Forward kinematics, cross-section map and Jacobian determinant.

All array functions broadcast over joint-angle arrays, so the same code
serves single configurations and full torus grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import JointConfig, ManipulatorModel


@dataclass(frozen=True)
class WorkspacePoint:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class CrossSectionPoint:
    rho: float
    z: float


def _trig(model: ManipulatorModel):
    p = model.params
    return (math.cos(p.alpha1), math.sin(p.alpha1),
            math.cos(p.alpha2), math.sin(p.alpha2))


def forward_array(model: ManipulatorModel, t1, t2, t3):
    """Vectorized forward map; returns (x, y, z) arrays."""
    p = model.params
    ca1, sa1, ca2, sa2 = _trig(model)
    c1, s1 = np.cos(t1), np.sin(t1)
    c2, s2 = np.cos(t2), np.sin(t2)
    c3, s3 = np.cos(t3), np.sin(t3)
    x3 = p.a2 + p.a3 * c3
    y3 = ca2 * p.a3 * s3 - p.d3 * sa2
    z3 = sa2 * p.a3 * s3 + p.d3 * ca2
    u = s2 * x3 + c2 * y3
    x2 = c2 * x3 - s2 * y3 + p.a1
    y2 = ca1 * u - sa1 * z3 - sa1 * p.d2
    z2 = sa1 * u + ca1 * z3 + ca1 * p.d2
    return c1 * x2 - s1 * y2, s1 * x2 + c1 * y2, z2


def planar_array(model: ManipulatorModel, t2, t3):
    """Point at theta1 = 0, i.e. (x2, y2, z); rho = hypot(x2, y2)."""
    return forward_array(model, 0.0, t2, t3)


def jacobian_array(model: ManipulatorModel, t1, t2, t3) -> np.ndarray:
    """Analytic Jacobian d(x,y,z)/d(theta1,theta2,theta3).

    Returns an array of shape broadcast(t).shape + (3, 3).
    """
    p = model.params
    ca1, sa1, ca2, sa2 = _trig(model)
    t1, t2, t3 = np.broadcast_arrays(np.asarray(t1, float), np.asarray(t2, float),
                                     np.asarray(t3, float))
    c1, s1 = np.cos(t1), np.sin(t1)
    c2, s2 = np.cos(t2), np.sin(t2)
    c3, s3 = np.cos(t3), np.sin(t3)
    x3 = p.a2 + p.a3 * c3
    y3 = ca2 * p.a3 * s3 - p.d3 * sa2
    z3 = sa2 * p.a3 * s3 + p.d3 * ca2
    u = s2 * x3 + c2 * y3
    x2 = c2 * x3 - s2 * y3 + p.a1
    y2 = ca1 * u - sa1 * z3 - sa1 * p.d2
    z2 = sa1 * u + ca1 * z3 + ca1 * p.d2

    # d/dtheta3 through the last link
    dx3 = -p.a3 * s3
    dy3 = ca2 * p.a3 * c3
    dz3 = sa2 * p.a3 * c3
    du3 = s2 * dx3 + c2 * dy3
    dx2_3 = c2 * dx3 - s2 * dy3
    dy2_3 = ca1 * du3 - sa1 * dz3
    dz2_3 = sa1 * du3 + ca1 * dz3

    # d/dtheta2 rotates (x3, y3) about the second axis
    dx2_2 = -s2 * x3 - c2 * y3
    du2 = c2 * x3 - s2 * y3
    dy2_2 = ca1 * du2
    dz2_2 = sa1 * du2

    J = np.empty(t1.shape + (3, 3))
    J[..., 0, 0] = -(s1 * x2 + c1 * y2)
    J[..., 1, 0] = c1 * x2 - s1 * y2
    J[..., 2, 0] = 0.0
    J[..., 0, 1] = c1 * dx2_2 - s1 * dy2_2
    J[..., 1, 1] = s1 * dx2_2 + c1 * dy2_2
    J[..., 2, 1] = dz2_2
    J[..., 0, 2] = c1 * dx2_3 - s1 * dy2_3
    J[..., 1, 2] = s1 * dx2_3 + c1 * dy2_3
    J[..., 2, 2] = dz2_3
    return J


def forward(model: ManipulatorModel, q: JointConfig) -> WorkspacePoint:
    x, y, z = forward_array(model, q.theta1, q.theta2, q.theta3)
    return WorkspacePoint(float(x), float(y), float(z))


def cross_section(p: WorkspacePoint) -> CrossSectionPoint:
    return CrossSectionPoint(math.hypot(p.x, p.y), p.z)


def cross_section_array(model: ManipulatorModel, t2, t3):
    """(rho, z) images of (theta2, theta3) samples."""
    x, y, z = planar_array(model, t2, t3)
    return np.hypot(x, y), z


def jacobian(model: ManipulatorModel, q: JointConfig) -> np.ndarray:
    return jacobian_array(model, q.theta1, q.theta2, q.theta3)


def det_jacobian(model: ManipulatorModel, t2, t3) -> np.ndarray:
    """Numeric det(J) at theta1 = 0 (it does not depend on theta1)."""
    J = jacobian_array(model, 0.0, t2, t3)
    return np.linalg.det(J)


def det_closed_form(model: ManipulatorModel, t2, t3):
    """Factored determinant for orthogonal chains with d3 = 0.

    (a2 + c3 a3) * (c2 (s2' a2 - c3 d2) + s2' a1) with s2' = sigma2 * s3,
    sigma2 = sign(sin alpha2).  The numeric determinant equals
    -sigma1 * sigma2 * a3 times this value.
    """
    s = model.sigma2
    c2 = np.cos(t2)
    c3, s3 = np.cos(t3), s * np.sin(t3)
    return (model.a2 + c3 * model.a3) * (c2 * (s3 * model.a2 - c3 * model.d2) + s3 * model.a1)


def closed_form_ratio(model: ManipulatorModel) -> float:
    return -model.sigma1 * model.sigma2 * model.a3


def det_jacobian_reduced(model: ManipulatorModel, t2, t3):
    if model.closed_form:
        return det_closed_form(model, t2, t3)
    return det_jacobian(model, t2, t3)
