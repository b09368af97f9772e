import math

import pytest
from hypothesis import given, strategies as st

from cuspidal.model import (DHParams, ILLUSTRATIVE, InvalidParams, JointConfig, NotScalable,
                            angle_diff, geometric_class, normalize, orthogonal_params,
                            validate_params, wrap_angle)

lengths = st.floats(0.05, 5.0)
signed = st.floats(-3.0, 3.0)
twists = st.sampled_from([-math.pi / 2, math.pi / 2, 0.0, math.pi, 0.4, -1.1])


@st.composite
def params(draw, zero_some=True):
    vals = dict(a1=draw(lengths), a2=draw(lengths), a3=draw(lengths), d2=draw(signed),
                d3=draw(signed), alpha1=draw(twists), alpha2=draw(twists))
    if zero_some:
        for k in ("a1", "a2", "d2", "d3"):
            if draw(st.booleans()):
                vals[k] = 0.0
    return DHParams(**vals)


def test_illustrative_is_orthogonal_and_unconditioned():
    m = validate_params(ILLUSTRATIVE)
    assert m.orthogonal and m.closed_form
    assert m.satisfied_conditions == frozenset()
    assert m.sigma1 == -1.0 and m.sigma2 == 1.0


@pytest.mark.parametrize("changes, cond", [
    (dict(alpha1=0.0), 1), (dict(alpha2=math.pi), 2), (dict(a1=0.0), 3), (dict(a2=0.0), 4),
    (dict(d2=0.0, d3=0.0, alpha2=0.7), 5), (dict(d2=0.0), 6),
])
def test_each_condition_detected(changes, cond):
    assert cond in geometric_class(ILLUSTRATIVE.replace(**changes))


@pytest.mark.parametrize("bad", [
    dict(a1=-1.0), dict(a3=float("nan")), dict(d2=float("inf")), dict(a1=0.0, a2=0.0, a3=0.0),
])
def test_invalid_params_rejected(bad):
    with pytest.raises(InvalidParams):
        validate_params(ILLUSTRATIVE.replace(**bad))


def test_typed_quarter_turn_snaps():
    m = validate_params(ILLUSTRATIVE.replace(alpha1=-1.5707963, alpha2=1.5707963))
    assert m.orthogonal
    assert m.params.alpha1 == -math.pi / 2
    # a genuine small offset is kept
    assert not validate_params(ILLUSTRATIVE.replace(alpha1=-1.57)).orthogonal


def test_dict_roundtrip():
    assert DHParams.from_dict(ILLUSTRATIVE.to_dict()) == ILLUSTRATIVE


def test_normalize_needs_a1():
    with pytest.raises(NotScalable):
        normalize(validate_params(orthogonal_params(0.0, 2.0, 1.5, 1.0)))


@given(params(), st.sampled_from([0.1, 0.37, 10.0, 123.0]))
def test_geometric_class_scale_invariant(p, lam):
    assert geometric_class(p) == geometric_class(p.scaled(lam))


@given(params(zero_some=False))
def test_normalize_idempotent(p):
    once = normalize(validate_params(p))
    twice = normalize(once)
    for k in ("a1", "a2", "a3", "d2", "d3", "alpha1", "alpha2"):
        assert getattr(twice.params, k) == pytest.approx(getattr(once.params, k), abs=1e-12)
    assert once.params.a1 == pytest.approx(1.0)
    assert twice.unit_scale == pytest.approx(once.unit_scale)


@given(st.floats(-100, 100))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi <= w < math.pi
    assert abs(math.sin(w) - math.sin(a)) < 1e-9 and abs(math.cos(w) - math.cos(a)) < 1e-9


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_angle_diff_is_shortest(a, b):
    d = angle_diff(a, b)
    assert abs(d) <= math.pi + 1e-12
    assert abs(wrap_angle(b + d) - wrap_angle(a)) < 1e-9 or \
        abs(abs(wrap_angle(b + d) - wrap_angle(a)) - 2 * math.pi) < 1e-9


def test_joint_config_tuple():
    assert JointConfig(0.1, 0.2, 0.3).as_tuple() == (0.1, 0.2, 0.3)
