import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from cuspidal.ik import (NotOrthogonal, ZeroA1, count_ik, count_ik_array, ik_count_raster,
                         quartic_coefficients, IKQuery, solve_ik)
from cuspidal.kinematics import WorkspacePoint, det_jacobian, forward
from cuspidal.model import DHParams, ILLUSTRATIVE, JointConfig, orthogonal_params, validate_params

angle = st.floats(-math.pi, math.pi)


@st.composite
def orthogonal_models(draw):
    a1, a2, a3 = (draw(st.floats(0.2, 3.0)) for _ in range(3))
    d2 = draw(st.floats(-2, 2))
    d3 = draw(st.sampled_from([0.0, 0.0, 0.5, -0.8]))
    s1, s2 = draw(st.sampled_from([-1, 1])), draw(st.sampled_from([-1, 1]))
    return validate_params(DHParams(a1, a2, a3, d2, d3, s1 * math.pi / 2, s2 * math.pi / 2))


def _joint_dist(a: JointConfig, b: JointConfig) -> float:
    return max(abs(math.remainder(x - y, 2 * math.pi)) for x, y in zip(a.as_tuple(), b.as_tuple()))


def test_reference_point_has_four(illustrative):
    sols = solve_ik(illustrative, WorkspacePoint(2.5, 0.0, 0.5))
    assert len(sols) == 4
    assert all(s.multiplicity == 1 for s in sols)
    assert all(s.residual < 1e-8 * illustrative.scale for s in sols)


@given(orthogonal_models(), angle, angle, angle)
def test_round_trip(m, t1, t2, t3):
    q = JointConfig(t1, t2, t3)
    # stay away from the singular set and from the axis
    assume(abs(float(det_jacobian(m, t2, t3))) > 1e-3 * m.scale ** 2)
    p = forward(m, q)
    assume(math.hypot(p.x, p.y) > 1e-3 * m.scale)
    sols = solve_ik(m, p)
    assert min(_joint_dist(s.config, q) for s in sols) < 1e-9


@given(orthogonal_models(), st.floats(0, 5), st.floats(-5, 5))
def test_z_symmetry(m, rho, z):
    assert count_ik(m, WorkspacePoint(rho, 0, z))[0] == count_ik(m, WorkspacePoint(rho, 0, -z))[0]


@given(orthogonal_models(), st.floats(0.01, 5), st.floats(-5, 5), angle)
def test_rotation_about_axis(m, rho, z, phi):
    a = count_ik(m, WorkspacePoint(rho, 0.0, z))
    b = count_ik(m, WorkspacePoint(rho * math.cos(phi), rho * math.sin(phi), z))
    assert a == b


@given(orthogonal_models(), st.floats(0, 5), st.floats(-5, 5))
def test_multiplicity_bound(m, rho, z):
    n, mult = count_ik(m, WorkspacePoint(rho, 0, z))
    assert sum(mult) <= 4 and n == len(mult)


def test_array_count_matches_scalar(illustrative):
    rng = np.random.default_rng(3)
    rho = rng.uniform(0, 5, 200)
    z = rng.uniform(-4, 4, 200)
    arr = count_ik_array(illustrative, rho, z)
    scal = [sum(count_ik(illustrative, WorkspacePoint(r, 0, zz))[1]) for r, zz in zip(rho, z)]
    assert np.mean(arr == np.array(scal)) > 0.99


def test_count_raster_shape(illustrative):
    r = ik_count_raster(illustrative, cells=128)
    assert r.counts.shape == (128, 64)
    assert set(np.unique(r.counts)) <= {0, 2, 4}
    i, j = r.locate(2.5, 0.5)
    assert r.counts[i, j] == 4


def test_quartic_is_degree_four(illustrative):
    c = quartic_coefficients(illustrative, IKQuery.from_point(WorkspacePoint(2.5, 0, 0.5)))
    assert len(c) == 5


def test_non_orthogonal_rejected():
    m = validate_params(ILLUSTRATIVE.replace(alpha1=0.4))
    with pytest.raises(NotOrthogonal):
        solve_ik(m, WorkspacePoint(1, 0, 0))


def test_zero_a1_rejected():
    m = validate_params(orthogonal_params(0.0, 2.0, 1.5, 1.0))
    with pytest.raises(ZeroA1):
        solve_ik(m, WorkspacePoint(1, 0, 0))


def test_theta3_pi_is_found(illustrative):
    q = JointConfig(0.4, 0.7, math.pi)
    sols = solve_ik(illustrative, forward(illustrative, q))
    assert min(_joint_dist(s.config, q) for s in sols) < 1e-8


def test_unreachable_point_has_none(illustrative):
    assert solve_ik(illustrative, WorkspacePoint(10.0, 0.0, 0.0)) == []
