import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuspidal import feasibility as fe
from cuspidal import singular as sg
from cuspidal.ik import ik_count_raster, solve_ik
from cuspidal.kinematics import WorkspacePoint, cross_section_array
from cuspidal.model import JointConfig

N = 512


@pytest.fixture(scope="module")
def ram(illustrative):
    return fe.reduced_aspects(illustrative, N)


@pytest.fixture(scope="module")
def domains(illustrative, ram):
    return fe.uniqueness_domains(illustrative, N, ram)


def test_structure(illustrative, ram, domains):
    assert [len(ram.of_aspect(a)) for a in range(2)] == [3, 3]
    assert len(domains) == 4
    assert len(fe.feasible_regions(illustrative, N, domains)) == 4
    assert sorted({r.ik_count for r in ram.items}) == [2, 4]


def test_characteristic_points_map_onto_boundary(illustrative, ram):
    an = sg.analyze(illustrative, N)
    pts = np.concatenate([b for b in (np.column_stack([bc.rho, bc.z]) for bc in an.boundaries)])
    step = max(float(np.max(np.hypot(np.diff(bc.rho), np.diff(bc.z)))) for bc in an.boundaries)
    eps = sg.eps_sing(illustrative)
    for a, cs in ram.surfaces.points.items():
        assert len(cs) > 0
        for t2, t3 in cs[:: max(1, len(cs) // 60)]:
            rho, z = cross_section_array(illustrative, t2, t3)
            assert np.min(np.hypot(pts[:, 0] - rho, pts[:, 1] - z)) < 2 * step
            assert abs(float(sg.full_det(illustrative, t2, t3))) > eps


def test_uniqueness_on_samples(illustrative, domains):
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 150:
        rho, z = rng.uniform(0.05, 4.6), rng.uniform(-4.0, 4.0)
        sols = solve_ik(illustrative, WorkspacePoint(rho, 0.0, z))
        if not sols:
            continue
        checked += 1
        for d in domains:
            inside = [s for s in sols if d.contains(s.config.theta2, s.config.theta3)]
            assert len(inside) <= 1


def test_image_property(illustrative, domains):
    raster = ik_count_raster(illustrative)
    regions = fe.feasible_regions(illustrative, N, domains)
    rng = np.random.default_rng(11)
    for reg, d in zip(regions, domains):
        iz, ir = np.nonzero(reg.cells)
        pick = rng.choice(len(iz), 25, replace=False)
        hits = 0
        for k in pick:
            sols = solve_ik(illustrative, WorkspacePoint(raster.rho[ir[k]], 0.0, raster.z[iz[k]]))
            hits += any(d.contains(s.config.theta2, s.config.theta3) for s in sols)
        # cells straddling the region edge may image only just outside
        assert hits >= 23


def test_noncuspidal_structure(noncuspidal):
    assert fe.characteristic_surfaces(noncuspidal, N).empty
    ram = fe.reduced_aspects(noncuspidal, N)
    doms = fe.uniqueness_domains(noncuspidal, N, ram)
    an = sg.analyze(noncuspidal, N)
    assert len(doms) == an.aspects.count
    for d in doms:
        assert np.array_equal(d.mask, an.aspects.labels == d.aspect)


def test_noncuspidal_never_changes_posture(noncuspidal):
    rng = np.random.default_rng(5)
    for _ in range(40):
        rho, z = rng.uniform(0.5, 3.2), rng.uniform(-2.0, 2.0)
        sols = solve_ik(noncuspidal, WorkspacePoint(rho, 0.0, z))
        for i in range(len(sols)):
            for j in range(i + 1, len(sols)):
                with pytest.raises((fe.DifferentAspects, fe.SingularPath)):
                    fe.connect_configs(noncuspidal, sols[i].config, sols[j].config, n=N)


def test_reference_posture_change(illustrative):
    p = WorkspacePoint(2.5, 0.0, 0.5)
    pc = fe.plan_posture_change(illustrative, p, 1, 3, n=N)
    assert pc.min_abs_det > 1.0
    assert pc.enclosed_cusps
    cert = pc.certificate()
    assert cert["samples"] == 1000
    with pytest.raises(fe.DifferentAspects):
        fe.plan_posture_change(illustrative, p, 0, 3, n=N)
    with pytest.raises(fe.SingularPath):
        fe.plan_posture_change(illustrative, p, 0, 2, n=N)
    with pytest.raises(IndexError):
        fe.plan_posture_change(illustrative, p, 0, 7, n=N)


@settings(max_examples=25)
@given(st.floats(0.3, 4.3), st.floats(-3.5, 3.5), st.integers(0, 3), st.integers(0, 3))
def test_posture_change_loops_enclose_cusp(illustrative, rho, z, i, j):
    sols = solve_ik(illustrative, WorkspacePoint(rho, 0.0, z))
    if i >= len(sols) or j >= len(sols) or i == j:
        return
    try:
        pc = fe.connect_configs(illustrative, sols[i].config, sols[j].config, n=N)
    except (fe.DifferentAspects, fe.SingularPath):
        return
    assert pc.enclosed_cusps


def test_point_in_polygon():
    xs = np.array([0.0, 1.0, 1.0, 0.0])
    ys = np.array([0.0, 0.0, 1.0, 1.0])
    assert fe.point_in_polygon(0.5, 0.5, xs, ys)
    assert not fe.point_in_polygon(1.5, 0.5, xs, ys)


def test_joint_line_takes_short_way():
    a = JointConfig(0.0, 3.0, -3.0)
    b = JointConfig(0.0, -3.0, 3.0)
    path = fe.joint_line(a, b, 11)
    assert np.max(np.abs(np.diff(path[:, 1]))) < 0.1


def test_path_inside_outer_region_is_feasible(illustrative):
    # a short vertical segment in the two-solution band near the outer rim
    res = fe.check_path_feasibility(illustrative, [(4.2, -0.3), (4.2, 0.3)], 0)
    assert res.feasible and len(res.configs) >= 2


def test_path_leaving_workspace_fails(illustrative):
    res = fe.check_path_feasibility(illustrative, [(4.2, 0.0), (6.0, 0.0)], 0)
    assert not res.feasible and res.failed_at == 0


def test_start_must_be_reachable(illustrative):
    with pytest.raises(fe.StartUnreachable):
        fe.check_path_feasibility(illustrative, [(9.0, 0.0), (9.5, 0.0)], 0)


def test_level_set_mesh(illustrative):
    mesh = fe.level_set_surface(illustrative, 0, N)
    assert mesh.faces.max() < len(mesh.vertices)
    obj = mesh.to_obj()
    assert obj.count("\nv ") == len(mesh.vertices)
    assert obj.count("\nf ") == len(mesh.faces)
