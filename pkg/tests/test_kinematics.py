import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cuspidal.kinematics import (WorkspacePoint, closed_form_ratio, cross_section,
                                 cross_section_array, det_closed_form, det_jacobian,
                                 det_jacobian_reduced, forward, forward_array, jacobian)
from cuspidal.model import DHParams, ILLUSTRATIVE, JointConfig, validate_params

angle = st.floats(-math.pi, math.pi)
lengths = st.floats(0.1, 4.0)
twist = st.sampled_from([-math.pi / 2, math.pi / 2])


@st.composite
def models(draw, orthogonal=True, d3_zero=True):
    a = [draw(lengths) for _ in range(3)]
    d2 = draw(st.floats(-3, 3))
    d3 = 0.0 if d3_zero else draw(st.floats(-2, 2))
    if orthogonal:
        al1, al2 = draw(twist), draw(twist)
    else:
        al1, al2 = draw(st.floats(-3, 3)), draw(st.floats(-3, 3))
    return validate_params(DHParams(a[0], a[1], a[2], d2, d3, al1, al2))


def test_home_position(illustrative):
    p = forward(illustrative, JointConfig(0.0, 0.0, 0.0))
    assert (p.x, p.y, p.z) == pytest.approx((4.5, 1.0, 0.0), abs=1e-12)


def test_fk_reaches_ik_target_under_rounding(illustrative):
    p = forward(illustrative, JointConfig(-0.9, -0.7, 2.5))
    assert math.dist((p.x, p.y, p.z), (2.5, 0.0, 0.5)) < 0.2


def test_cross_section():
    c = cross_section(WorkspacePoint(2.5, 0.0, 0.5))
    assert (c.rho, c.z) == pytest.approx((2.5, 0.5))


@given(models(orthogonal=False, d3_zero=False), angle, angle, angle, angle)
def test_det_independent_of_theta1(m, t1, t2, t3, _):
    J = jacobian(m, JointConfig(t1, t2, t3))
    J0 = jacobian(m, JointConfig(0.0, t2, t3))
    assert abs(np.linalg.det(J) - np.linalg.det(J0)) < 1e-9 * max(1.0, m.scale ** 2)


@given(models(), angle, angle)
def test_closed_form_proportional(m, t2, t3):
    red = float(det_jacobian_reduced(m, t2, t3))
    if abs(red) > 1e-6:
        assert float(det_jacobian(m, t2, t3)) / red == pytest.approx(closed_form_ratio(m),
                                                                     rel=1e-8)


def test_ratio_is_a3_for_reference_twists(illustrative):
    assert closed_form_ratio(illustrative) == illustrative.a3


@given(models(orthogonal=False, d3_zero=False), angle, angle, angle,
       st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2))
def test_forward_periodic(m, t1, t2, t3, k1, k2, k3):
    p = np.array(forward_array(m, t1, t2, t3))
    q = np.array(forward_array(m, t1 + 2 * math.pi * k1, t2 + 2 * math.pi * k2,
                               t3 + 2 * math.pi * k3))
    assert np.allclose(p, q, atol=1e-9 * m.scale)


@given(models(orthogonal=False, d3_zero=False), angle, angle, angle)
def test_jacobian_matches_finite_differences(m, t1, t2, t3):
    J = jacobian(m, JointConfig(t1, t2, t3))
    h = 1e-6
    q = np.array([t1, t2, t3])
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (np.array(forward_array(m, *(q + e))) - np.array(forward_array(m, *(q - e)))) / (2 * h)
        assert np.allclose(J[:, k], fd, atol=1e-6 * m.scale)


@given(models(), angle, angle)
def test_cross_section_matches_forward(m, t2, t3):
    rho, z = cross_section_array(m, t2, t3)
    p = forward(m, JointConfig(0.3, t2, t3))
    assert rho == pytest.approx(math.hypot(p.x, p.y), abs=1e-12 * m.scale)
    assert z == pytest.approx(p.z, abs=1e-12 * m.scale)


@given(angle)
def test_closed_form_vanishes_on_horizontal_lines(t2):
    m = validate_params(ILLUSTRATIVE.replace(a3=3.0))
    t3 = math.acos(-m.a2 / m.a3)
    for s in (1, -1):
        assert abs(float(det_closed_form(m, t2, s * t3))) < 1e-12
        assert abs(float(det_jacobian(m, t2, s * t3))) < 1e-9
