"""Cusp-count classification of orthogonal 3R chains with d3 = 0.

Closed-form critical values of a3 split the (a2, a3) plane into cusp domains
(C-surfaces) and node-count cells (E-surfaces).  A numeric oracle recounts
cusps along a3 scan lines and is always the final word.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import singular
from .ik import ik_count_raster
from .model import ManipulatorModel, normalize, orthogonal_params, validate_params


class NotClassifiable(ValueError):
    pass


class UnknownTopology(ValueError):
    def __init__(self, cusps: int, nodes: int, void: bool):
        super().__init__(f"no topology with {cusps} cusps, {nodes} nodes, void={void}")
        self.counts = (cusps, nodes, void)


class Undefined(ValueError):
    pass


# candidate readings of the C1 formula; S = a2^2 + d2^2, D = a2^2 - d2^2
def _c1_half_outer(a1, S, D, AB):
    return 0.5 * (S - (S * S - a1 * a1 * D) / AB)


def _c1_half_first(a1, S, D, AB):
    return 0.5 * S - (S * S - a1 * a1 * D) / AB


def _c1_squared_outer(a1, S, D, AB):
    return 0.5 * (S - (S * S - D * D) / AB)


def _c1_squared_first(a1, S, D, AB):
    return 0.5 * S - (S * S - D * D) / AB


C1_VARIANTS = {
    "half_outer": _c1_half_outer,
    "half_first": _c1_half_first,
    "squared_outer": _c1_squared_outer,
    "squared_first": _c1_squared_first,
}
# selected by calibrate_c1 against the oracle; see tests
C1_DEFAULT = "half_outer"


@dataclass(frozen=True)
class SurfaceValues:
    a1: float
    a2: float
    d2: float
    A: float
    B: float
    C1: Optional[float]
    C2: float
    C3: Optional[float]
    C4: Optional[float]
    E1: float
    E2: float
    E3: float
    c1_variant: str = C1_DEFAULT

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def c1_value(a1: float, a2: float, d2: float, variant: str = C1_DEFAULT) -> Optional[float]:
    """C1 under one reading of the formula; None if the radicand is negative."""
    A = math.hypot(a2 + a1, d2)
    B = math.hypot(a2 - a1, d2)
    S = a2 * a2 + d2 * d2
    D = a2 * a2 - d2 * d2
    rad = C1_VARIANTS[variant](a1, S, D, A * B)
    if rad < 0:
        return None
    return math.sqrt(rad)


def surface_values(a1: float, a2: float, d2: float,
                   variant: str = C1_DEFAULT) -> SurfaceValues:
    if not (a1 > 0 and a2 > 0) or not all(map(math.isfinite, (a1, a2, d2))):
        raise Undefined("surface values need a1 > 0, a2 > 0 and finite inputs")
    A = math.hypot(a2 + a1, d2)
    B = math.hypot(a2 - a1, d2)
    c3 = a2 / (a2 - a1) * B if a2 > a1 else None
    c4 = a2 / (a1 - a2) * B if a2 < a1 else None
    return SurfaceValues(
        a1, a2, d2, A, B,
        C1=c1_value(a1, a2, d2, variant),
        C2=a2 / (a1 + a2) * A,
        C3=c3, C4=c4,
        E1=0.5 * (A - B), E2=a2, E3=0.5 * (A + B),
        c1_variant=variant,
    )


# ------------------------------------------------------------------ oracle

@dataclass(frozen=True)
class Boundary:
    a3: float
    below: int
    above: int


def _scan_count(args) -> int:
    a1, d2, a2, a3, n = args
    return singular.count_cusps(validate_params(orthogonal_params(a1, a2, a3, d2)), n)


def bifurcation_oracle(a1: float, d2: float, a2: float, a3_range: tuple[float, float],
                       step: float = 0.025, tol: float = 1e-4, n: int = singular.DEFAULT_N,
                       workers: int = 1) -> list[Boundary]:
    """Critical a3 values where the numeric cusp count changes along a scan line.

    Coarse sampling every ``step`` then bisection down to ``tol``.  Changes
    narrower than ``step`` can be missed.
    """
    lo, hi = a3_range
    k = max(1, int(math.ceil((hi - lo) / step)))
    a3s = np.linspace(lo, hi, k + 1)
    jobs = [(a1, d2, a2, float(a), n) for a in a3s]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            counts = list(ex.map(_scan_count, jobs))
    else:
        counts = [_scan_count(j) for j in jobs]
    out = []
    for i in range(k):
        if counts[i] == counts[i + 1]:
            continue
        a, b = float(a3s[i]), float(a3s[i + 1])
        ca, cb = below, above = counts[i], counts[i + 1]
        while b - a > tol:
            mid = 0.5 * (a + b)
            cm = _scan_count((a1, d2, a2, mid, n))
            if cm == ca:
                a = mid
            elif cm == cb:
                b = mid
            else:
                # a third count inside the bracket: keep the lower change
                b, cb = mid, cm
        out.append(Boundary(0.5 * (a + b), below, above))
    return out


def _closed_boundaries(sv: SurfaceValues, lo: float, hi: float) -> list[float]:
    vals = [sv.C1, sv.C2, sv.C3, sv.C4]
    return sorted(v for v in vals if v is not None and lo < v < hi)


@dataclass(frozen=True)
class Calibration:
    variant: Optional[str]
    matches: dict
    lines: dict
    tol: float


def calibrate_c1(lines: dict[float, list[Boundary]], a1: float = 1.0, d2: float = 1.0,
                 a3_range: tuple[float, float] = (0.05, 4.0), tol: float = 1e-3) -> Calibration:
    """Pick the C1 reading whose closed-form boundaries match every scan line.

    ``lines`` maps a2 to the oracle output on that line.
    """
    matches = {}
    for name in C1_VARIANTS:
        ok = True
        for a2, found in lines.items():
            sv = surface_values(a1, a2, d2, name)
            pred = _closed_boundaries(sv, *a3_range)
            got = [b.a3 for b in found]
            if len(pred) != len(got) or any(abs(p - g) > tol for p, g in zip(pred, got)):
                ok = False
                break
        matches[name] = ok
    winners = [k for k, v in matches.items() if v]
    return Calibration(winners[0] if len(winners) == 1 else None, matches,
                       {a2: [b.a3 for b in f] for a2, f in lines.items()}, tol)


# ------------------------------------------------------------------ closed form

def _closed_prereq(model: ManipulatorModel) -> None:
    if not model.closed_form:
        raise NotClassifiable("closed forms need an orthogonal chain with d3 = 0")
    tol = 1e-9 * model.scale
    for name in ("a1", "a2", "a3", "d2"):
        if abs(getattr(model, name)) <= tol:
            raise NotClassifiable(f"closed forms assume {name} != 0")


def _sv(model: ManipulatorModel) -> SurfaceValues:
    return surface_values(model.a1, model.a2, abs(model.d2))


def closed_form_cusps(model: ManipulatorModel) -> int:
    _closed_prereq(model)
    sv = _sv(model)
    a3 = model.a3
    c1 = sv.C1 if sv.C1 is not None else 0.0
    if a3 < c1:
        return 0
    if a3 < sv.C2:
        return 4
    if sv.C3 is not None:
        return 2 if a3 < sv.C3 else 4
    if sv.C4 is not None:
        return 2 if a3 < sv.C4 else 0
    return 2


def closed_form_topology(model: ManipulatorModel) -> int:
    """Workspace topology from the ordering of a3 against the C and E values.

    The rules follow the d2 = 1 section of the (a2, a3) plane.
    """
    sv = _sv(model)
    a3 = model.a3
    cusps = closed_form_cusps(model)
    c1 = sv.C1 if sv.C1 is not None else 0.0
    if cusps == 0:
        if a3 < c1:
            return 1
        return 8 if a3 < sv.E3 else 9
    if cusps == 2:
        return 5 if a3 < sv.E3 else 6
    if sv.C3 is not None and a3 >= sv.C3:
        return 7
    if a3 < sv.E1:
        return 2
    return 3 if a3 < sv.E2 else 4


def closed_form_cuspidal(model: ManipulatorModel) -> bool:
    """Cuspidal iff a3 >= C1 and (a2 > a1 or a3 < C4)."""
    _closed_prereq(model)
    sv = _sv(model)
    c1 = sv.C1 if sv.C1 is not None else 0.0
    if model.a3 < c1:
        return False
    if model.a2 > model.a1:
        return True
    return sv.C4 is not None and model.a3 < sv.C4


# ------------------------------------------------------------------ numeric

TOPOLOGIES = {
    1: (0, 0, True), 2: (4, 2, True), 3: (4, 0, None), 4: (4, 2, False),
    5: (2, 1, None), 6: (2, 3, None), 7: (4, 4, None), 8: (0, 0, False), 9: (0, 2, None),
}


def topology_from_counts(cusps: int, nodes: int, void: bool) -> int:
    for wt, (c, k, v) in TOPOLOGIES.items():
        if c == cusps and k == nodes and (v is None or v == void):
            return wt
    raise UnknownTopology(cusps, nodes, void)


def _void_from_counts(counts: np.ndarray) -> bool:
    lab, num = ndimage.label(counts == 0)
    if num == 0:
        return False
    # components reaching the outer frame are outside the workspace; those
    # on the Z axis are axial gaps rather than cavities
    open_ = set(lab[0]) | set(lab[-1]) | set(lab[:, -1]) | set(lab[:, 0])
    return any(k not in open_ for k in range(1, num + 1))


def has_void(model: ManipulatorModel) -> bool:
    return _void_from_counts(ik_count_raster(model).counts)


def has_four_iks(model: ManipulatorModel, check: bool = True) -> bool:
    """a3 >= C1; with ``check`` the answer is confirmed on an IK-count raster."""
    if model.closed_form and model.a1 > 0 and model.a2 > 0:
        sv = _sv(model)
        closed = sv.C1 is None or model.a3 >= sv.C1
        if not check:
            return closed
    return bool((ik_count_raster(model).counts >= 4).any())


def is_quadratic(model: ManipulatorModel) -> bool:
    return bool(model.satisfied_conditions)


def classify_domain(model: ManipulatorModel, cusps: Optional[int] = None,
                    void: Optional[bool] = None) -> int:
    _closed_prereq(model)
    if cusps is None:
        cusps = singular.count_cusps(model)
    if cusps == 2:
        return 3
    if cusps == 4:
        # the two 4-cusp domains sit below C2 and above C3
        return 2 if model.a3 < _sv(model).C2 else 4
    if void is None:
        void = has_void(model)
    return 1 if void else 5


def classify_topology(model: ManipulatorModel, n: int = singular.DEFAULT_N) -> int:
    _closed_prereq(model)
    a = singular.analyze(model, n)
    return topology_from_counts(len(a.cusps), len(a.nodes), has_void(model))


# ------------------------------------------------------------------ report

@dataclass
class ClassificationReport:
    cusp_count: Optional[int]
    node_count: Optional[int]
    domain: Optional[int]
    topology: Optional[int]
    cuspidal: bool
    four_iks: Optional[bool]
    has_void: Optional[bool]
    generic: Optional[bool]
    method: str
    conditions: list[int] = field(default_factory=list)
    c1_variant: Optional[str] = None
    discrepancy: Optional[str] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _numeric_part(model: ManipulatorModel, n: int) -> dict:
    a = singular.analyze(model, n)
    out = {"cusp_count": len(a.cusps), "node_count": len(a.nodes)}
    gen, _witness, _g = singular.genericity_check(model, n)
    out["generic"] = bool(gen)
    if model.orthogonal and model.a1 > 0:
        counts = ik_count_raster(model).counts
        out["four_iks"] = bool((counts >= 4).any())
        out["has_void"] = _void_from_counts(counts)
    else:
        out["four_iks"] = None
        out["has_void"] = None
    return out


def _closed_part(model: ManipulatorModel) -> dict:
    sv = _sv(model)
    topo = closed_form_topology(model)
    cusps, nodes, void = TOPOLOGIES[topo]
    cu = closed_form_cusps(model)
    dom = {0: 1 if model.a3 < (sv.C1 or 0.0) else 5, 2: 3}.get(cu)
    if dom is None:
        dom = 2 if model.a3 < sv.C2 else 4
    return {
        "cusp_count": cu, "node_count": nodes, "domain": dom, "topology": topo,
        "four_iks": sv.C1 is None or model.a3 >= sv.C1,
        "has_void": topo in (1, 2),
        "cuspidal": closed_form_cuspidal(model),
    }


def is_cuspidal(model: ManipulatorModel, n: int = singular.DEFAULT_N,
                method: str = "both") -> ClassificationReport:
    return classify(model, n, method)


def classify(model: ManipulatorModel, n: int = singular.DEFAULT_N,
             method: str = "both") -> ClassificationReport:
    """Full report.  Numeric counts win whenever both paths run."""
    if method not in ("closed", "numeric", "both"):
        raise ValueError(f"unknown method {method!r}")
    if model.a1 > 0:
        model = normalize(model)
    conds = sorted(model.satisfied_conditions)
    if conds and method != "numeric":
        # any of the six geometric conditions rules out cusps without tracing
        return ClassificationReport(0, None, None, None, False, None, None, None,
                                    "closed_form", conds)
    closed_ok = True
    try:
        _closed_prereq(model)
    except NotClassifiable:
        closed_ok = False
    if method == "closed" and not closed_ok:
        raise NotClassifiable("closed forms unavailable for this model; use numeric")

    if method == "closed":
        c = _closed_part(model)
        return ClassificationReport(c["cusp_count"], c["node_count"], c["domain"], c["topology"],
                                    c["cuspidal"], c["four_iks"], c["has_void"], None,
                                    "closed_form", conds, C1_DEFAULT)

    num = _numeric_part(model, n)
    report = ClassificationReport(
        num["cusp_count"], num["node_count"], None, None, num["cusp_count"] > 0,
        num["four_iks"], num["has_void"], num["generic"],
        "numeric", conds,
    )
    if closed_ok:
        try:
            report.topology = topology_from_counts(report.cusp_count, report.node_count,
                                                   bool(report.has_void))
        except UnknownTopology as exc:
            report.discrepancy = str(exc)
        report.domain = classify_domain(model, report.cusp_count, report.has_void)
    if method == "both" and closed_ok:
        report.method = "both"
        report.c1_variant = C1_DEFAULT
        c = _closed_part(model)
        diffs = [k for k in ("cusp_count", "node_count", "domain", "topology",
                             "four_iks", "has_void", "cuspidal")
                 if c[k] != getattr(report, k)]
        if diffs:
            note = "closed form disagrees on " + ", ".join(
                f"{k} ({c[k]} vs numeric {getattr(report, k)})" for k in diffs)
            report.discrepancy = note if report.discrepancy is None else \
                report.discrepancy + "; " + note
    return report
