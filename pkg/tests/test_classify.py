import math

import pytest
from hypothesis import given, strategies as st

from cuspidal import classify as cl
from cuspidal import singular as sg
from cuspidal.model import DHParams, ILLUSTRATIVE, orthogonal_params, validate_params

N = 512

# one (a2, a3) per workspace topology at a1 = d2 = 1, chosen deep inside each cell
REPRESENTATIVES = {
    1: (0.845, 0.174), 2: (3.18, 0.522), 3: (3.106, 1.839), 4: (0.547, 0.597),
    5: (0.795, 1.267), 6: (1.317, 2.509), 7: (2.087, 3.429), 8: (0.274, 1.193),
    9: (0.398, 3.155),
}


def _model(a2, a3, a1=1.0, d2=1.0):
    return validate_params(orthogonal_params(a1, a2, a3, d2))


def test_surface_values_reference_line():
    sv = cl.surface_values(1.0, 2.0, 1.0)
    assert sv.C1 == pytest.approx(0.20081, abs=1e-4)
    assert sv.C2 == pytest.approx(2.10819, abs=1e-4)
    assert sv.C3 == pytest.approx(2.82843, abs=1e-4)
    assert sv.C4 is None
    assert sv.E2 == 2.0


def test_surface_values_need_positive_links():
    with pytest.raises(cl.Undefined):
        cl.surface_values(1.0, 0.0, 1.0)


def test_c3_c4_exclusive():
    assert cl.surface_values(1, 0.5, 1).C3 is None
    assert cl.surface_values(1, 0.5, 1).C4 is not None


@pytest.mark.parametrize("wt", sorted(REPRESENTATIVES))
def test_closed_topology_of_representatives(wt):
    assert cl.closed_form_topology(_model(*REPRESENTATIVES[wt])) == wt


@pytest.mark.parametrize("wt", [1, 3, 5, 7, 9])
def test_numeric_matches_closed(wt):
    rep = cl.classify(_model(*REPRESENTATIVES[wt]), N, "both")
    assert rep.discrepancy is None
    assert rep.topology == wt
    assert (rep.cusp_count, rep.node_count) == cl.TOPOLOGIES[wt][:2]


def test_topology_table_lookup():
    assert cl.topology_from_counts(0, 0, True) == 1
    assert cl.topology_from_counts(0, 0, False) == 8
    assert cl.topology_from_counts(4, 2, True) == 2
    assert cl.topology_from_counts(4, 2, False) == 4
    with pytest.raises(cl.UnknownTopology):
        cl.topology_from_counts(6, 0, False)


def test_illustrative_report(illustrative):
    rep = cl.classify(illustrative, N)
    assert rep.cuspidal and rep.cusp_count == 4 and rep.node_count == 0
    assert rep.domain == 2 and rep.topology == 3
    assert rep.four_iks and rep.generic
    assert rep.discrepancy is None
    assert rep.to_dict()["c1_variant"] == cl.C1_DEFAULT


def test_condition_shortcut_skips_tracing():
    m = validate_params(orthogonal_params(0.0, 2.0, 1.5, 1.0))
    sg.count_cusps.cache_clear()
    rep = cl.classify(m, N)
    assert not rep.cuspidal and rep.method == "closed_form" and rep.conditions == [3]
    assert sg.count_cusps.cache_info().currsize == 0


def test_closed_method_rejects_d3():
    m = validate_params(orthogonal_params(1.0, 2.0, 1.5, 1.0, 0.4))
    with pytest.raises(cl.NotClassifiable):
        cl.classify(m, N, "closed")
    rep = cl.classify(m, N, "both")
    assert rep.method == "numeric" and rep.topology is None


@given(st.floats(0.3, 3.5), st.floats(0.1, 3.5))
def test_cuspidal_predicate_matches_cusp_count(a2, a3):
    m = _model(a2, a3)
    assert cl.closed_form_cuspidal(m) == (cl.closed_form_cusps(m) > 0)


@pytest.mark.parametrize("a2, a3", [(2.0, 1.5), (0.5, 0.8), (0.5, 2.0), (3.0, 0.1), (2.5, 3.5)])
def test_cuspidal_iff_cusps(a2, a3):
    m = _model(a2, a3)
    rep = cl.classify(m, N, "numeric")
    assert rep.cuspidal == (sg.count_cusps(m, N) > 0)
    assert rep.cuspidal == cl.closed_form_cuspidal(m)


@pytest.mark.parametrize("lam", [0.1, 10.0])
def test_report_scale_invariant(illustrative, lam):
    a = cl.classify(illustrative, N).to_dict()
    b = cl.classify(validate_params(illustrative.params.scaled(lam)), N).to_dict()
    assert a == b


def test_calibration_picks_matching_variant():
    # boundaries synthesised from one reading: calibration must recover it
    lines = {}
    for a2 in (0.5, 2.0, 3.0):
        sv = cl.surface_values(1.0, a2, 1.0, "half_outer")
        lines[a2] = [cl.Boundary(a, 0, 0) for a in cl._closed_boundaries(sv, 0.05, 4.0)]
    cal = cl.calibrate_c1(lines)
    assert cal.variant == "half_outer"
    assert sum(cal.matches.values()) == 1


def test_oracle_finds_c2_on_short_range():
    found = cl.bifurcation_oracle(1.0, 1.0, 2.0, (2.0, 2.2), step=0.05, tol=1e-4, n=N)
    assert len(found) == 1
    assert found[0].a3 == pytest.approx(cl.surface_values(1, 2, 1).C2, abs=1e-3)
    assert (found[0].below, found[0].above) == (4, 2)


@pytest.mark.parametrize("p", [
    DHParams(1.0, 2.0, 1.5, 1.0, 0.3, 0.0, 1.1),
    DHParams(1.0, 2.0, 1.5, 1.0, 0.3, 0.9, math.pi),
    orthogonal_params(1.0, 0.0, 1.5, 1.0, 0.5),
    DHParams(1.0, 2.0, 1.5, 0.0, 0.0, -math.pi / 2, 0.8),
])
def test_conditions_noncuspidal_numerically(p):
    m = validate_params(p)
    assert m.satisfied_conditions
    rep = cl.classify(m, N, "numeric")
    assert rep.cusp_count == 0 and not rep.cuspidal


def test_void_flags(illustrative):
    assert cl.has_void(_model(*REPRESENTATIVES[1]))
    assert not cl.has_void(_model(*REPRESENTATIVES[8]))
    assert not cl.has_void(illustrative)


def test_domains():
    assert cl.classify_domain(_model(2.0, 1.5)) == 2
    assert cl.classify_domain(_model(2.0, 3.5)) == 4
    assert cl.classify_domain(_model(*REPRESENTATIVES[5])) == 3
    assert cl.classify_domain(_model(*REPRESENTATIVES[1])) == 1
    assert cl.classify_domain(_model(*REPRESENTATIVES[8])) == 5
