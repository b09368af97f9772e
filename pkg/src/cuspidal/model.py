"""Manipulator description: DH parameters, validation and geometric predicates.

The frame convention fixes d1 = 0 and all joint offsets to zero, so a 3R
chain is described by seven numbers (a1, a2, a3, d2, d3, alpha1, alpha2).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

EPS_GEOM = 1e-9
EPS_ANGLE = 1e-9
# twists typed with ~8 significant digits (1.5707963) snap to the exact quarter turn
SNAP_ANGLE = 1e-6

TWO_PI = 2.0 * math.pi

_FIELDS = ("a1", "a2", "a3", "d2", "d3", "alpha1", "alpha2")


class InvalidParams(ValueError):
    pass


class NotScalable(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Map an angle to [-pi, pi)."""
    if -math.pi <= a < math.pi:
        return a
    w = math.fmod(a + math.pi, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    w -= math.pi
    # fmod can land exactly on +pi after the shift
    return -math.pi if w >= math.pi else w


def _wrap_alpha(a: float) -> float:
    # twist angles live in (-pi, pi]
    if not -math.pi < a <= math.pi:
        a = -wrap_angle(-a)
    k = round(a / (math.pi / 2))
    if abs(a - k * math.pi / 2) < SNAP_ANGLE:
        a = math.pi if k == -2 else k * math.pi / 2
    return a


@dataclass(frozen=True)
class DHParams:
    a1: float
    a2: float
    a3: float
    d2: float
    d3: float
    alpha1: float
    alpha2: float

    @property
    def lengths(self) -> tuple[float, float, float, float, float]:
        return (self.a1, self.a2, self.a3, self.d2, self.d3)

    @property
    def scale(self) -> float:
        """Characteristic size a1 + a2 + a3 + |d2| + |d3|."""
        return self.a1 + self.a2 + self.a3 + abs(self.d2) + abs(self.d3)

    def scaled(self, factor: float) -> "DHParams":
        return dataclasses.replace(
            self,
            a1=self.a1 * factor,
            a2=self.a2 * factor,
            a3=self.a3 * factor,
            d2=self.d2 * factor,
            d3=self.d3 * factor,
        )

    def replace(self, **changes: float) -> "DHParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in _FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "DHParams":
        missing = [k for k in _FIELDS if k not in data]
        if missing:
            raise InvalidParams(f"missing keys: {', '.join(missing)}")
        try:
            return cls(**{k: float(data[k]) for k in _FIELDS})
        except (TypeError, ValueError) as exc:
            raise InvalidParams(str(exc)) from exc


ILLUSTRATIVE = DHParams(a1=1.0, a2=2.0, a3=1.5, d2=1.0, d3=0.0,
                        alpha1=-math.pi / 2, alpha2=math.pi / 2)


def orthogonal_params(a1: float, a2: float, a3: float, d2: float,
                      d3: float = 0.0) -> DHParams:
    """Orthogonal chain with the same twist signs as ``ILLUSTRATIVE``."""
    return DHParams(a1, a2, a3, d2, d3, -math.pi / 2, math.pi / 2)


def _length_tol(params: DHParams) -> float:
    ref = max(abs(v) for v in params.lengths)
    return EPS_GEOM * max(ref, 1e-300)


def geometric_class(params: DHParams) -> frozenset[int]:
    """Ids (1..6) of the noncuspidal geometric conditions that hold.

    1: sin(alpha1) = 0          2: sin(alpha2) = 0
    3: a1 = 0                   4: a2 = 0
    5: cos(alpha1) = 0, d2 = d3 = 0
    6: cos(alpha1) = cos(alpha2) = 0, d2 = 0
    """
    tol = _length_tol(params)
    zero = lambda v: abs(v) <= tol  # noqa: E731
    ca1 = abs(math.cos(params.alpha1)) < EPS_ANGLE
    ca2 = abs(math.cos(params.alpha2)) < EPS_ANGLE
    out = set()
    if abs(math.sin(params.alpha1)) < EPS_ANGLE:
        out.add(1)
    if abs(math.sin(params.alpha2)) < EPS_ANGLE:
        out.add(2)
    if zero(params.a1):
        out.add(3)
    if zero(params.a2):
        out.add(4)
    if ca1 and zero(params.d2) and zero(params.d3):
        out.add(5)
    if ca1 and ca2 and zero(params.d2):
        out.add(6)
    return frozenset(out)


@dataclass(frozen=True)
class ManipulatorModel:
    params: DHParams
    orthogonal: bool
    satisfied_conditions: frozenset[int] = field(default_factory=frozenset)
    unit_scale: float = 1.0

    # shorthands used all over the numeric code
    @property
    def a1(self) -> float:
        return self.params.a1

    @property
    def a2(self) -> float:
        return self.params.a2

    @property
    def a3(self) -> float:
        return self.params.a3

    @property
    def d2(self) -> float:
        return self.params.d2

    @property
    def d3(self) -> float:
        return self.params.d3

    @property
    def scale(self) -> float:
        return self.params.scale

    @property
    def sigma1(self) -> float:
        """Sign of sin(alpha1); meaningful for orthogonal models."""
        return 1.0 if math.sin(self.params.alpha1) >= 0 else -1.0

    @property
    def sigma2(self) -> float:
        return 1.0 if math.sin(self.params.alpha2) >= 0 else -1.0

    @property
    def d3_zero(self) -> bool:
        return abs(self.d3) <= _length_tol(self.params)

    @property
    def closed_form(self) -> bool:
        """True for the orthogonal, d3 = 0 family with closed-form classification."""
        return self.orthogonal and self.d3_zero

    def with_params(self, **changes: float) -> "ManipulatorModel":
        return validate_params(self.params.replace(**changes))


def validate_params(raw: DHParams) -> ManipulatorModel:
    values = [getattr(raw, k) for k in _FIELDS]
    for name, v in zip(_FIELDS, values):
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise InvalidParams(f"{name} must be finite, got {v!r}")
    for name in ("a1", "a2", "a3"):
        if getattr(raw, name) < 0:
            raise InvalidParams(f"{name} must be >= 0")
    if not any(v > 0 for v in (raw.a1, raw.a2, raw.a3)):
        raise InvalidParams("at least one of a1, a2, a3 must be positive")
    params = dataclasses.replace(
        raw,
        alpha1=_wrap_alpha(float(raw.alpha1)),
        alpha2=_wrap_alpha(float(raw.alpha2)),
    )
    orthogonal = (abs(math.cos(params.alpha1)) < EPS_ANGLE
                  and abs(math.cos(params.alpha2)) < EPS_ANGLE)
    return ManipulatorModel(
        params=params,
        orthogonal=orthogonal,
        satisfied_conditions=geometric_class(params),
        unit_scale=1.0,
    )


def normalize(model: ManipulatorModel) -> ManipulatorModel:
    """Rescale lengths so that a1 = 1; ``unit_scale`` keeps the factor."""
    a1 = model.params.a1
    if a1 <= 0:
        raise NotScalable("a1 = 0: cannot normalize by a1")
    out = validate_params(model.params.scaled(1.0 / a1))
    return dataclasses.replace(out, unit_scale=model.unit_scale * a1)


@dataclass(frozen=True)
class JointConfig:
    theta1: float
    theta2: float
    theta3: float

    def __post_init__(self) -> None:
        for name in ("theta1", "theta2", "theta3"):
            object.__setattr__(self, name, wrap_angle(float(getattr(self, name))))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.theta1, self.theta2, self.theta3)


def angle_diff(a: float, b: float) -> float:
    """Signed shortest difference a - b on the circle."""
    return wrap_angle(a - b)
