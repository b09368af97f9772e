"""Singularity curves on the (theta2, theta3) torus and their workspace images.

Pipeline: sample the determinant on a periodic grid, extract the zero set with
marching squares, map each curve to the (rho, z) half-plane, then look for
cusps (tangent reversals of the image) and nodes (transversal crossings of
the image curves).  Aspects are the connected sign components of the grid.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import ik as ikmod
from .kinematics import det_closed_form, jacobian_array, planar_array
from .model import ManipulatorModel, wrap_angle

log = logging.getLogger(__name__)

DEFAULT_N = 1024
TWO_PI = 2.0 * math.pi
TOL_CUSP = 1e-8
MIN_SHARPNESS = 1e-5


class ResolutionTooLow(ValueError):
    pass


def eps_sing(model: ManipulatorModel) -> float:
    return 1e-9 * model.scale ** 3


def eps_gen(model: ManipulatorModel) -> float:
    return 1e-3 * model.scale ** 2


# ---------------------------------------------------------------- contour fn

class ContourFunction:
    """Smooth scalar whose zero set is (part of) the singular set.

    For orthogonal chains with d3 = 0 this is the second factor of the
    closed-form determinant (the first factor only vanishes on horizontal
    lines, which are added analytically).  Otherwise it is det(J) / scale,
    so both variants carry units of length^2.
    """

    def __init__(self, model: ManipulatorModel):
        self.model = model
        self.closed = model.closed_form

    def value(self, t2, t3):
        m = self.model
        if self.closed:
            s = m.sigma2
            c2 = np.cos(t2)
            c3, s3 = np.cos(t3), s * np.sin(t3)
            return c2 * (s3 * m.a2 - c3 * m.d2) + s3 * m.a1
        return det3(jacobian_array(m, 0.0, t2, t3)) / m.scale

    def grad(self, t2, t3):
        m = self.model
        if self.closed:
            s = m.sigma2
            c2, s2 = np.cos(t2), np.sin(t2)
            c3, s3 = np.cos(t3), np.sin(t3)
            g2 = -s2 * (s * s3 * m.a2 - c3 * m.d2)
            g3 = c2 * (s * c3 * m.a2 + s3 * m.d2) + s * c3 * m.a1
            return g2, g3
        h = 1e-6
        g2 = (self.value(t2 + h, t3) - self.value(t2 - h, t3)) / (2 * h)
        g3 = (self.value(t2, t3 + h) - self.value(t2, t3 - h)) / (2 * h)
        return g2, g3


def det3(J: np.ndarray) -> np.ndarray:
    return (J[..., 0, 0] * (J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1])
            - J[..., 0, 1] * (J[..., 1, 0] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 0])
            + J[..., 0, 2] * (J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0]))


def full_det(model: ManipulatorModel, t2, t3):
    """Reduced determinant (closed form when available), length^2 units."""
    if model.closed_form:
        return det_closed_form(model, t2, t3)
    return det3(jacobian_array(model, 0.0, t2, t3)) / model.scale


def full_det_grad(model: ManipulatorModel, t2, t3, h: float = 1e-6):
    g2 = (full_det(model, t2 + h, t3) - full_det(model, t2 - h, t3)) / (2 * h)
    g3 = (full_det(model, t2, t3 + h) - full_det(model, t2, t3 - h)) / (2 * h)
    return g2, g3


# ---------------------------------------------------------------- data types

@dataclass
class TorusGrid:
    n: int
    theta: np.ndarray
    values: np.ndarray  # indexed [i3, i2]

    @property
    def step(self) -> float:
        return TWO_PI / self.n


@dataclass
class SingularCurve:
    theta2: np.ndarray
    theta3: np.ndarray
    branch_id: int
    kind: str = "contour"  # or "line" for c3 = -a2/a3

    def __len__(self) -> int:
        return len(self.theta2)

    def unwrapped(self) -> tuple[np.ndarray, np.ndarray]:
        return np.unwrap(self.theta2), np.unwrap(self.theta3)

    def arclength(self) -> np.ndarray:
        """Cumulative joint-space arc length at each vertex (closed curve)."""
        d2 = np.diff(np.unwrap(np.append(self.theta2, self.theta2[0])))
        d3 = np.diff(np.unwrap(np.append(self.theta3, self.theta3[0])))
        seg = np.hypot(d2, d3)
        return np.concatenate([[0.0], np.cumsum(seg)])


@dataclass
class CuspPoint:
    rho: float
    z: float
    theta2: float
    theta3: float
    t: float
    residuals: tuple[float, float, float]
    branch_id: int
    index: int  # vertex index on the source curve


@dataclass
class NodePoint:
    rho: float
    z: float
    source_a: tuple[int, float]  # (branch id, arc parameter)
    source_b: tuple[int, float]
    theta_a: tuple[float, float]
    theta_b: tuple[float, float]
    angle: float  # crossing angle in radians


@dataclass
class BoundaryCurve:
    source: SingularCurve
    rho: np.ndarray
    z: np.ndarray
    cusp_indices: list[int] = field(default_factory=list)
    isolated: bool = False
    arc_labels: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def branch_id(self) -> int:
        return self.source.branch_id


@dataclass
class AspectMap:
    labels: np.ndarray  # [i3, i2], -1 on exactly singular samples
    count: int
    signs: dict[int, int]
    theta: np.ndarray
    # sign pattern of the determinant factors inside each aspect
    signature: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def aspect_of(self, t2, t3) -> np.ndarray:
        """Label of the nearest grid sample (fast, vectorized)."""
        n = len(self.theta)
        step = TWO_PI / n
        i2 = np.rint((np.asarray(t2) + math.pi) / step).astype(int) % n
        i3 = np.rint((np.asarray(t3) + math.pi) / step).astype(int) % n
        return self.labels[i3, i2]

    def locate(self, model: ManipulatorModel, t2: float, t3: float, radius: int = 3) -> int:
        """Aspect of an exact configuration, robust next to singular curves.

        The nearest sample is accepted only if its factor signs match those
        at (t2, t3); otherwise nearby samples are searched.  Returns -1 on
        the singular set.
        """
        sig = _signature(model, t2, t3)
        if 0 in sig:
            return -1
        n = len(self.theta)
        step = TWO_PI / n
        c2 = int(np.rint((t2 + math.pi) / step))
        c3 = int(np.rint((t3 + math.pi) / step))
        best, bd = -1, math.inf
        for d3 in range(-radius, radius + 1):
            for d2 in range(-radius, radius + 1):
                a = int(self.labels[(c3 + d3) % n, (c2 + d2) % n])
                if a >= 0 and self.signature.get(a) == sig and d2 * d2 + d3 * d3 < bd:
                    best, bd = a, d2 * d2 + d3 * d3
        return best


def _signature(model: ManipulatorModel, t2, t3) -> tuple[int, ...]:
    if model.closed_form:
        f1 = model.a2 + model.a3 * math.cos(t3)
        f2 = float(ContourFunction(model).value(t2, t3))
        return (int(np.sign(f1)), int(np.sign(f2)))
    return (int(np.sign(float(full_det(model, t2, t3)))),)


@dataclass
class CuspSearch:
    cusps: list[CuspPoint]
    nonconvergent: list[tuple[int, int]]  # (branch id, vertex index)


# ---------------------------------------------------------------- tracing

def theta_grid(n: int) -> np.ndarray:
    return -math.pi + TWO_PI * np.arange(n) / n


def torus_grid(model: ManipulatorModel, n: int = DEFAULT_N) -> TorusGrid:
    if n < 64:
        raise ResolutionTooLow(f"N = {n} < 64")
    th = theta_grid(n)
    T2, T3 = np.meshgrid(th, th)  # rows: theta3, columns: theta2
    return TorusGrid(n, th, ContourFunction(model).value(T2, T3))


def _bisect_edges(f, t2a, t3a, t2b, t3b, iters: int = 60):
    """Refine sign changes along straight edges; returns the zero positions."""
    fa = f(t2a, t3a)
    lo = np.zeros_like(t2a)
    hi = np.ones_like(t2a)
    sa = fa >= 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(t2a + mid * (t2b - t2a), t3a + mid * (t3b - t3a))
        same = (fm >= 0) == sa
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    u = 0.5 * (lo + hi)
    return t2a + u * (t2b - t2a), t3a + u * (t3b - t3a)


def _march(grid: TorusGrid, func: ContourFunction) -> list[tuple[np.ndarray, np.ndarray]]:
    n = grid.n
    th = grid.theta
    h = grid.step
    pos = grid.values >= 0
    # horizontal edge (i, j): (i, j) -> (i, j+1); vertical (i, j): (i, j) -> (i+1, j)
    hcross = pos != np.roll(pos, -1, axis=1)
    vcross = pos != np.roll(pos, -1, axis=0)
    hi_, hj = np.nonzero(hcross)
    vi, vj = np.nonzero(vcross)
    if len(hi_) + len(vi) == 0:
        return []
    t2h, t3h = _bisect_edges(func.value, th[hj], th[hi_], th[hj] + h, th[hi_])
    t2v, t3v = _bisect_edges(func.value, th[vj], th[vi], th[vj], th[vi] + h)
    nh = n * n
    pos_of = {}
    pts2 = np.concatenate([t2h, t2v])
    pts3 = np.concatenate([t3h, t3v])
    ids = np.concatenate([hi_ * n + hj, nh + vi * n + vj])
    for k, e in enumerate(ids.tolist()):
        pos_of[e] = k

    def hid(i, j):
        return (i % n) * n + (j % n)

    def vid(i, j):
        return nh + (i % n) * n + (j % n)

    # cells touched by any crossing
    cells = set()
    for i, j in zip(hi_.tolist(), hj.tolist()):
        cells.add((i, j))
        cells.add(((i - 1) % n, j))
    for i, j in zip(vi.tolist(), vj.tolist()):
        cells.add((i, j))
        cells.add((i, (j - 1) % n))

    nbr: dict[int, list[int]] = {}

    def link(a, b):
        nbr.setdefault(pos_of[a], []).append(pos_of[b])
        nbr.setdefault(pos_of[b], []).append(pos_of[a])

    for i, j in sorted(cells):
        B, T, L, R = hid(i, j), hid(i + 1, j), vid(i, j), vid(i, j + 1)
        present = [e for e in (B, T, L, R) if e in pos_of]
        if len(present) == 2:
            link(present[0], present[1])
        elif len(present) == 4:
            center = func.value(th[j] + h / 2, th[i] + h / 2)
            s00 = pos[i, j]
            if (center >= 0) == s00:
                link(B, R)
                link(L, T)
            else:
                link(B, L)
                link(T, R)
    seen = np.zeros(len(ids), bool)
    loops = []
    for start in range(len(ids)):
        if seen[start] or start not in nbr:
            continue
        order = [start]
        seen[start] = True
        prev, cur = None, start
        while True:
            nxt = [k for k in nbr[cur] if k != prev]
            if not nxt:
                break
            k = nxt[0]
            if k == start:
                break
            if seen[k]:
                break
            seen[k] = True
            order.append(k)
            prev, cur = cur, k
        idx = np.array(order)
        loops.append((_wrap(pts2[idx]), _wrap(pts3[idx])))
    return loops


def _wrap(a: np.ndarray) -> np.ndarray:
    return (a + math.pi) % TWO_PI - math.pi


def _horizontal_lines(model: ManipulatorModel, n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    if not model.closed_form or model.a3 <= 0:
        return []
    r = -model.a2 / model.a3
    if r < -1.0 or r > 1.0:
        return []
    base = math.acos(r)
    th = theta_grid(n)
    levels = sorted({wrap_angle(base), wrap_angle(-base)})
    return [(th.copy(), np.full(n, lv)) for lv in levels]


def trace_singular_curves(model: ManipulatorModel, n: int = DEFAULT_N) -> list[SingularCurve]:
    return list(_analysis(model, n).curves)


def _trace(model: ManipulatorModel, n: int) -> tuple[TorusGrid, list[SingularCurve]]:
    grid = torus_grid(model, n)
    func = ContourFunction(model)
    loops = _march(grid, func)
    # deterministic order: by first vertex position
    loops.sort(key=lambda c: (round(float(np.min(c[1])), 9), round(float(c[0][np.argmin(c[1])]), 9)))
    curves = []
    for k, (t2, t3) in enumerate(loops):
        if len(t2) < 8:
            raise ResolutionTooLow(f"curve {k} has only {len(t2)} vertices at N={n}")
        curves.append(SingularCurve(t2, t3, k, "contour"))
    for t2, t3 in _horizontal_lines(model, n):
        curves.append(SingularCurve(t2, t3, len(curves), "line"))
    return grid, curves


# ---------------------------------------------------------------- aspects

def _label_torus(mask: np.ndarray) -> tuple[np.ndarray, int]:
    lab, num = ndimage.label(mask)
    parent = list(range(num + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for a, b in zip(lab[0, :], lab[-1, :]):
        if a and b:
            union(a, b)
    for a, b in zip(lab[:, 0], lab[:, -1]):
        if a and b:
            union(a, b)
    roots = sorted({find(k) for k in range(1, num + 1)})
    remap = np.zeros(num + 1, int)
    for k in range(1, num + 1):
        remap[k] = roots.index(find(k)) + 1
    return remap[lab], len(roots)


def label_torus(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Connected components (4-neighbour) of a boolean mask on a torus.

    Labels run from 1; background is 0.
    """
    return _label_torus(mask)


def compute_aspects(model: ManipulatorModel, n: int = DEFAULT_N) -> AspectMap:
    return _analysis(model, n).aspects


def _aspects(model: ManipulatorModel, n: int) -> AspectMap:
    th = theta_grid(n)
    T2, T3 = np.meshgrid(th, th)
    d = full_det(model, T2, T3)
    if model.closed_form:
        # aspects keep the sign of each factor; labelling the factor-sign
        # classes separately stops leaks through line/curve crossings
        f1 = model.a2 + model.a3 * np.cos(T3)
        f2 = ContourFunction(model).value(T2, T3)
        classes = [(f1 > 0) & (f2 > 0), (f1 > 0) & (f2 < 0),
                   (f1 < 0) & (f2 > 0), (f1 < 0) & (f2 < 0)]
        sigs = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    else:
        classes = [d > 0, d < 0]
        sigs = [(1,), (-1,)]
    labels = -np.ones((n, n), int)
    signs = {}
    sigmap = {}
    count = 0
    for mask, sig in zip(classes, sigs):
        if not mask.any():
            continue
        lab, num = _label_torus(mask)
        for k in range(1, num + 1):
            sel = lab == k
            labels[sel] = count
            signs[count] = int(np.sign(d[sel][0]))
            sigmap[count] = sig
            count += 1
    # number aspects by their first cell in row-major order
    firsts = {a: int(np.argmax(labels.ravel() == a)) for a in range(count)}
    order = sorted(range(count), key=firsts.__getitem__)
    remap = np.arange(count)
    for new, old in enumerate(order):
        remap[old] = new
    out = np.where(labels >= 0, remap[np.maximum(labels, 0)], -1)
    return AspectMap(out, count, {int(remap[k]): v for k, v in signs.items()}, th,
                     {int(remap[k]): v for k, v in sigmap.items()})


# ---------------------------------------------------------------- images

def map_boundary(model: ManipulatorModel, curve: SingularCurve) -> BoundaryCurve:
    x, y, z = planar_array(model, curve.theta2, curve.theta3)
    rho = np.hypot(x, y)
    extent = float(np.ptp(rho) + np.ptp(z))
    isolated = extent < 1e-9 * model.scale
    return BoundaryCurve(curve, rho, np.asarray(z, float), isolated=isolated)


def image_velocity(model: ManipulatorModel, func: ContourFunction, t2, t3, kind="contour"):
    """d(rho, z)/ds along the singular curve, with s oriented by grad F."""
    t2 = np.asarray(t2, float)
    t3 = np.asarray(t3, float)
    if kind == "line":
        tau2, tau3 = np.ones_like(t2), np.zeros_like(t3)
    else:
        g2, g3 = func.grad(t2, t3)
        tau2, tau3 = -g3, g2
    J = jacobian_array(model, 0.0, t2, t3)
    x, y, z = planar_array(model, t2, t3)
    rho = np.hypot(x, y)
    rs = np.where(rho > 0, rho, 1.0)
    drho2 = (x * J[..., 0, 1] + y * J[..., 1, 1]) / rs
    drho3 = (x * J[..., 0, 2] + y * J[..., 1, 2]) / rs
    vr = drho2 * tau2 + drho3 * tau3
    vz = J[..., 2, 1] * tau2 + J[..., 2, 2] * tau3
    return vr, vz


def _project_to_curve(func: ContourFunction, t2: float, t3: float, iters: int = 8):
    for _ in range(iters):
        f = float(func.value(t2, t3))
        g2, g3 = func.grad(t2, t3)
        g2, g3 = float(g2), float(g3)
        gg = g2 * g2 + g3 * g3
        if gg == 0:
            break
        t2 -= f * g2 / gg
        t3 -= f * g3 / gg
        if abs(f) < 1e-15:
            break
    return t2, t3


def _polish_cusp_joint(model, func, t2, t3, c0, max_step: float):
    """Newton on (F, v . c0) = 0 in joint space."""

    def G(a, b):
        vr, vz = image_velocity(model, func, a, b)
        return np.array([float(func.value(a, b)), float(vr * c0[0] + vz * c0[1])])

    x = np.array([t2, t3], float)
    x0 = x.copy()
    for _ in range(40):
        g = G(*x)
        h = 1e-7
        Jm = np.column_stack([(G(x[0] + h, x[1]) - G(x[0] - h, x[1])) / (2 * h),
                              (G(x[0], x[1] + h) - G(x[0], x[1] - h)) / (2 * h)])
        try:
            dx = np.linalg.solve(Jm, -g)
        except np.linalg.LinAlgError:
            return None
        nrm = float(np.linalg.norm(dx))
        if nrm > 0.05:
            dx *= 0.05 / nrm
        x += dx
        if np.linalg.norm(x - x0) > max_step:
            return None
        if nrm < 1e-13:
            break
    g = G(*x)
    if abs(g[0]) > 1e-10 * model.scale ** 2:
        return None
    return float(x[0]), float(x[1])


def cusp_sharpness(model: ManipulatorModel, func: ContourFunction, t2: float, t3: float,
                   h: float = 2e-3) -> float:
    """Part of d3p/ds3 normal to d2p/ds2, over scale, for the image p(s).

    Where the image velocity vanishes, a true cusp has a third derivative off
    the direction of the second; an image that retraces itself does not.
    """
    def walk(s):
        a, b = t2, t3
        n = max(1, int(round(abs(s) / h)))
        ds = s / n
        for _ in range(n):
            g2, g3 = func.grad(a, b)
            g = math.hypot(float(g2), float(g3))
            if g == 0:
                break
            a, b = _project_to_curve(func, a - ds * float(g3) / g, b + ds * float(g2) / g)
        return np.array(_rz(model, a, b))

    p = {k: walk(k * h) for k in (-2, -1, 0, 1, 2)}
    acc = (p[1] - 2 * p[0] + p[-1]) / h ** 2
    jerk = (p[2] - 2 * p[1] + 2 * p[-1] - p[-2]) / (2 * h ** 3)
    na = float(np.linalg.norm(acc))
    if na == 0:
        return 0.0
    return abs(float(acc[0] * jerk[1] - acc[1] * jerk[0])) / na / model.scale


def _quartic(model: ManipulatorModel, R, Z, inverted: bool):
    P, dR, dZ = ikmod.quartic_partials(model, R, Z)
    if inverted:
        # w = 1/t: w^4 P(1/w) has the reversed coefficients
        return P[::-1], dR[::-1], dZ[::-1]
    return P, dR, dZ


def triple_root_residuals(model: ManipulatorModel, t: float, R: float, Z: float,
                          inverted: bool = False):
    """(|P|, |P'|, |P''|) at t, relative to the coefficient norm of P.

    With ``inverted`` the polynomial is taken in w = 1/t, which keeps roots
    near theta3 = pi finite.
    """
    c = _quartic(model, R, Z, inverted)[0]
    pv = np.polynomial.polynomial.polyval
    pd = np.polynomial.polynomial.polyder
    nrm = float(np.linalg.norm(c))
    return tuple(abs(float(pv(t, pd(c, k) if k else c))) / nrm for k in range(3))


def _polish_triple(model: ManipulatorModel, t: float, R: float, Z: float,
                   inverted: bool = False):
    """Damped Newton on P = P' = P'' = 0 over (t, R, Z)."""
    pv = np.polynomial.polynomial.polyval
    pd = np.polynomial.polynomial.polyder
    x = np.array([t, R, Z], float)
    for _ in range(50):
        P, dR, dZ = _quartic(model, x[1], x[2], inverted)
        F = np.array([pv(x[0], pd(P, k) if k else P) for k in range(3)])
        Jm = np.empty((3, 3))
        for k in range(3):
            Jm[k, 0] = pv(x[0], pd(P, k + 1))
            Jm[k, 1] = pv(x[0], pd(dR, k) if k else dR)
            Jm[k, 2] = pv(x[0], pd(dZ, k) if k else dZ)
        try:
            dx = np.linalg.solve(Jm, -F)
        except np.linalg.LinAlgError:
            break
        lim = 0.1 * (1 + np.abs(x))
        scale = min(1.0, float(np.min(lim / np.maximum(np.abs(dx), 1e-300))))
        x += scale * dx
        x[1:] = np.maximum(x[1:], 0.0)
        if np.all(np.abs(dx) <= 1e-15 * (1 + np.abs(x))):
            break
    return x


def cusp_certificate(model: ManipulatorModel, t2: float, t3: float, z_sign: float = 1.0):
    """Polish a cusp seed on the triple-root system (P, dP/dt, d2P/dt2); returns (t, rho, z, residuals).

    Returns None when Newton leaves the neighbourhood of the seed.
    """
    x, y, z = planar_array(model, t2, t3)
    rho = math.hypot(float(x), float(y))
    z = float(z)
    half = t3 / 2.0
    inverted = abs(math.cos(half)) < abs(math.sin(half))
    w = math.cos(half) / math.sin(half) if inverted else math.tan(half)
    ww, R, Z = _polish_triple(model, w, rho * rho, z * z, inverted)
    if abs(ww - w) > 1e-3 * (1 + abs(w)):
        return None
    res = triple_root_residuals(model, ww, R, Z, inverted)
    if inverted:
        t = 1.0 / ww if ww != 0 else math.inf
    else:
        t = float(ww)
    return t, math.sqrt(R), math.copysign(math.sqrt(Z), z if z != 0 else z_sign), res


def _find_cusps(model: ManipulatorModel, curves, boundaries, n: int) -> CuspSearch:
    func = ContourFunction(model)
    step = TWO_PI / n
    cusps: list[CuspPoint] = []
    bad: list[tuple[int, int]] = []
    can_certify = model.orthogonal and model.a1 > 0
    for curve, bc in zip(curves, boundaries):
        if bc.isolated or curve.kind == "line":
            continue
        vr, vz = image_velocity(model, func, curve.theta2, curve.theta3)
        m = len(curve)
        nxt = np.roll(np.arange(m), -1)
        dots = vr * vr[nxt] + vz * vz[nxt]
        cand = np.flatnonzero(dots < 0)
        seglen = np.hypot(bc.rho[nxt] - bc.rho, bc.z[nxt] - bc.z)
        for k in cand.tolist():
            k2 = int(nxt[k])
            t2a, t3a = curve.theta2[k], curve.theta3[k]
            d2 = wrap_angle(curve.theta2[k2] - t2a)
            d3 = wrap_angle(curve.theta3[k2] - t3a)
            # axis reflection: rho has a kink, not a cusp
            if min(bc.rho[k], bc.rho[k2]) < 2.0 * seglen[k] + 1e-9 * model.scale:
                near_axis = _axis_contact(model, func, t2a + 0.5 * d2, t3a + 0.5 * d3)
                if near_axis:
                    continue
            c0 = np.array([vr[k] - vr[k2], vz[k] - vz[k2]])
            c0 /= max(np.linalg.norm(c0), 1e-300)
            seed = _project_to_curve(func, t2a + 0.5 * d2, t3a + 0.5 * d3)
            sol = _polish_cusp_joint(model, func, seed[0], seed[1], c0, 4 * step)
            if sol is None:
                bad.append((curve.branch_id, k))
                continue
            t2c, t3c = sol
            x, y, z = planar_array(model, t2c, t3c)
            rho = math.hypot(float(x), float(y))
            z = float(z)
            if rho < 1e-7 * model.scale:
                continue
            # retraced images also stop and turn back; a cusp keeps its shape
            # as the stencil shrinks while a retrace flattens out
            s_coarse = cusp_sharpness(model, func, t2c, t3c, step / 4)
            s_fine = cusp_sharpness(model, func, t2c, t3c, step / 8)
            if s_fine < MIN_SHARPNESS or abs(s_fine / s_coarse - 1.0) > 0.05:
                continue
            t = math.tan(t3c / 2.0)
            res = (0.0, 0.0, 0.0)
            if can_certify:
                cert = cusp_certificate(model, t2c, t3c)
                if cert is None or max(cert[3]) >= TOL_CUSP:
                    bad.append((curve.branch_id, k))
                    continue
                t, rho, z, res = cert
            dup = False
            for c in cusps:
                if abs(c.rho - rho) + abs(c.z - z) < 1e-6 * model.scale:
                    dup = True
                    break
            if dup:
                continue
            cusps.append(CuspPoint(rho, z, wrap_angle(t2c), wrap_angle(t3c), t, res,
                                   curve.branch_id, k))
            bc.cusp_indices.append(k)
    for bc in boundaries:
        bc.cusp_indices.sort()
        bc.arc_labels = _arc_labels(bc)
    cusps.sort(key=lambda c: (round(c.z, 9), round(c.rho, 9)))
    return CuspSearch(cusps, bad)


def _axis_contact(model, func, t2, t3) -> bool:
    """True if the curve passes through a point imaged on the Z axis nearby."""
    a, b = _project_to_curve(func, t2, t3)
    best = math.inf
    for _ in range(30):
        x, y, _z = planar_array(model, a, b)
        r = math.hypot(float(x), float(y))
        best = min(best, r)
        if r < 1e-9 * model.scale:
            return True
        # step along the curve towards smaller rho
        g2, g3 = func.grad(a, b)
        tau = np.array([-float(g3), float(g2)])
        tau /= max(np.linalg.norm(tau), 1e-300)
        h = 1e-6
        ra = math.hypot(*[float(v) for v in planar_array(model, a + h * tau[0], b + h * tau[1])[:2]])
        rb = math.hypot(*[float(v) for v in planar_array(model, a - h * tau[0], b - h * tau[1])[:2]])
        slope = (ra - rb) / (2 * h)
        if slope == 0:
            break
        ds = -r / slope
        ds = max(-0.02, min(0.02, ds))
        a, b = _project_to_curve(func, a + ds * tau[0], b + ds * tau[1])
    return best < 1e-6 * model.scale


def _arc_labels(bc: BoundaryCurve) -> list[tuple[int, int, str]]:
    idx = bc.cusp_indices
    if not idx:
        return [(0, len(bc.rho) - 1, f"B{bc.branch_id}.1")]
    out = []
    for a in range(len(idx)):
        out.append((idx[a], idx[(a + 1) % len(idx)], f"B{bc.branch_id}.{a + 1}"))
    return out


# ---------------------------------------------------------------- nodes

def _segments(boundaries, n: int):
    P0, P1, cid, s0, s1, tot, src = [], [], [], [], [], [], []
    for bc in boundaries:
        if bc.isolated:
            continue
        m = len(bc.rho)
        nxt = np.roll(np.arange(m), -1)
        s = bc.source.arclength()
        P0.append(np.column_stack([bc.rho, bc.z]))
        P1.append(np.column_stack([bc.rho[nxt], bc.z[nxt]]))
        cid.append(np.full(m, bc.branch_id))
        s0.append(s[:-1])
        s1.append(s[1:])
        tot.append(np.full(m, s[-1]))
        src.append(np.arange(m))
    if not P0:
        return None
    return (np.concatenate(P0), np.concatenate(P1), np.concatenate(cid),
            np.concatenate(s0), np.concatenate(s1), np.concatenate(tot), np.concatenate(src))


def _candidate_pairs(P0, P1, cell):
    lo = np.floor(np.minimum(P0, P1) / cell).astype(np.int64)
    hi = np.floor(np.maximum(P0, P1) / cell).astype(np.int64)
    buckets: dict[tuple[int, int], list[int]] = {}
    for k in range(len(P0)):
        for a in range(lo[k, 0], hi[k, 0] + 1):
            for b in range(lo[k, 1], hi[k, 1] + 1):
                buckets.setdefault((a, b), []).append(k)
    pairs = set()
    for items in buckets.values():
        if len(items) < 2:
            continue
        arr = np.array(items)
        ii, jj = np.triu_indices(len(arr), 1)
        for a, b in zip(arr[ii].tolist(), arr[jj].tolist()):
            pairs.add((a, b) if a < b else (b, a))
    if not pairs:
        return np.zeros((0, 2), int)
    return np.array(sorted(pairs))


def _intersect(p, p2, q, q2):
    r = p2 - p
    s = q2 - q
    den = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]
    qp = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / den
        v = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / den
    ok = (den != 0) & (u >= 0) & (u < 1) & (v >= 0) & (v < 1)
    return ok, u, v, den


def _find_nodes(model: ManipulatorModel, curves, boundaries, n: int) -> list[NodePoint]:
    segs = _segments(boundaries, n)
    if segs is None:
        return []
    P0, P1, cid, s0, s1, tot, src = segs
    lens = np.hypot(*(P1 - P0).T)
    cell = max(4.0 * float(np.median(lens)), 1e-12)
    pairs = _candidate_pairs(P0, P1, cell)
    if len(pairs) == 0:
        return []
    a, b = pairs[:, 0], pairs[:, 1]
    ok, u, v, den = _intersect(P0[a], P1[a], P0[b], P1[b])
    # exclude pieces that are close along the same source curve
    same = cid[a] == cid[b]
    ds = np.abs(s0[a] - s0[b])
    ds = np.minimum(ds, tot[a] - ds)
    near = same & (ds <= 10 * TWO_PI / n)
    ok &= ~near
    func = ContourFunction(model)
    by_id = {c.branch_id: c for c in curves}
    nodes: list[NodePoint] = []
    for k in np.flatnonzero(ok).tolist():
        ia, ib = int(a[k]), int(b[k])
        pa = P0[ia] + u[k] * (P1[ia] - P0[ia])
        ta = _interp_theta(by_id[int(cid[ia])], int(src[ia]), float(u[k]))
        tb = _interp_theta(by_id[int(cid[ib])], int(src[ib]), float(v[k]))
        refined = _refine_node(model, func, by_id[int(cid[ia])], int(src[ia]),
                               by_id[int(cid[ib])], int(src[ib]))
        if refined is not None:
            pa, ta, tb = refined
        ra = P1[ia] - P0[ia]
        rb = P1[ib] - P0[ib]
        cosang = abs(float(np.dot(ra, rb))) / max(float(np.linalg.norm(ra) * np.linalg.norm(rb)), 1e-300)
        ang = math.acos(min(1.0, cosang))
        dup = any(abs(nd.rho - pa[0]) + abs(nd.z - pa[1]) < 1e-6 * model.scale for nd in nodes)
        if dup:
            continue
        sa = float(s0[ia] + u[k] * (s1[ia] - s0[ia]))
        sb = float(s0[ib] + v[k] * (s1[ib] - s0[ib]))
        nodes.append(NodePoint(float(pa[0]), float(pa[1]), (int(cid[ia]), sa), (int(cid[ib]), sb),
                               ta, tb, ang))
    nodes.sort(key=lambda nd: (round(nd.z, 9), round(nd.rho, 9)))
    return nodes


def _interp_theta(curve: SingularCurve, k: int, u: float) -> tuple[float, float]:
    k2 = (k + 1) % len(curve)
    t2 = curve.theta2[k] + u * wrap_angle(curve.theta2[k2] - curve.theta2[k])
    t3 = curve.theta3[k] + u * wrap_angle(curve.theta3[k2] - curve.theta3[k])
    return wrap_angle(float(t2)), wrap_angle(float(t3))


def _refine_node(model, func, ca: SingularCurve, ka: int, cb: SingularCurve, kb: int):
    """Bisect both source segments a few times, re-projecting onto F = 0."""

    def sub(curve, k, lo, hi, parts=8):
        a = _interp_theta(curve, k, lo)
        pts = []
        for j in range(parts + 1):
            uu = lo + (hi - lo) * j / parts
            t2, t3 = _interp_theta(curve, k, uu)
            if curve.kind != "line":
                t2, t3 = _project_to_curve(func, t2, t3, 4)
            pts.append((t2, t3))
        del a
        return pts

    la, ha, lb, hb = 0.0, 1.0, 0.0, 1.0
    best = None
    for _ in range(3):
        A = sub(ca, ka, la, ha)
        B = sub(cb, kb, lb, hb)
        IA = np.array([[float(v) for v in _rz(model, *p)] for p in A])
        IB = np.array([[float(v) for v in _rz(model, *p)] for p in B])
        found = None
        for i in range(len(IA) - 1):
            ok, u, v, _ = _intersect(IA[i], IA[i + 1], IB[:-1], IB[1:])
            hits = np.flatnonzero(ok)
            if len(hits):
                j = int(hits[0])
                found = (i, j, float(u[j]), float(v[j]))
                break
        if found is None:
            return best
        i, j, u, v = found
        w = (ha - la) / (len(IA) - 1)
        la, ha = la + i * w, la + (i + 1) * w
        w = (hb - lb) / (len(IB) - 1)
        lb, hb = lb + j * w, lb + (j + 1) * w
        pt = IA[i] + u * (IA[i + 1] - IA[i])
        ta = (A[i][0] + u * wrap_angle(A[i + 1][0] - A[i][0]), A[i][1] + u * wrap_angle(A[i + 1][1] - A[i][1]))
        tb = (B[j][0] + v * wrap_angle(B[j + 1][0] - B[j][0]), B[j][1] + v * wrap_angle(B[j + 1][1] - B[j][1]))
        best = (pt, (wrap_angle(ta[0]), wrap_angle(ta[1])), (wrap_angle(tb[0]), wrap_angle(tb[1])))
    return best


def _rz(model, t2, t3):
    x, y, z = planar_array(model, t2, t3)
    return math.hypot(float(x), float(y)), float(z)


# ---------------------------------------------------------------- genericity

def genericity_check(model: ManipulatorModel, n: int = DEFAULT_N):
    """(generic, witness): witness is the (theta2, theta3) of minimal gradient."""
    an = _analysis(model, n)
    best = (math.inf, None)
    for c in an.curves:
        g2, g3 = full_det_grad(model, c.theta2, c.theta3)
        g = np.hypot(g2, g3)
        k = int(np.argmin(g))
        if g[k] < best[0]:
            best = (float(g[k]), (float(c.theta2[k]), float(c.theta3[k])))
    if best[1] is None:
        return True, None, math.inf
    return best[0] > eps_gen(model), best[1], best[0]


# ---------------------------------------------------------------- facade

@dataclass
class SingularAnalysis:
    model: ManipulatorModel
    n: int
    grid: TorusGrid
    curves: list[SingularCurve]
    boundaries: list[BoundaryCurve]
    aspects: AspectMap
    cusp_search: CuspSearch
    nodes: list[NodePoint]

    @property
    def cusps(self) -> list[CuspPoint]:
        return self.cusp_search.cusps

    @property
    def isolated_points(self) -> list[tuple[float, float]]:
        return [(float(b.rho[0]), float(b.z[0])) for b in self.boundaries if b.isolated]


@functools.lru_cache(maxsize=12)
def _analysis(model: ManipulatorModel, n: int) -> SingularAnalysis:
    grid, curves = _trace(model, n)
    boundaries = [map_boundary(model, c) for c in curves]
    aspects = _aspects(model, n)
    cs = _find_cusps(model, curves, boundaries, n)
    nodes = _find_nodes(model, curves, boundaries, n)
    return SingularAnalysis(model, n, grid, curves, boundaries, aspects, cs, nodes)


def analyze(model: ManipulatorModel, n: int = DEFAULT_N) -> SingularAnalysis:
    """Full singularity analysis; results are cached per (model, n)."""
    return _analysis(model, n)


def find_cusps(model: ManipulatorModel, n: int = DEFAULT_N) -> list[CuspPoint]:
    return list(_analysis(model, n).cusps)


def find_nodes(model: ManipulatorModel, n: int = DEFAULT_N) -> list[NodePoint]:
    return list(_analysis(model, n).nodes)


@functools.lru_cache(maxsize=256)
def count_cusps(model: ManipulatorModel, n: int = DEFAULT_N) -> int:
    """Cusp count without aspects or nodes; the cheap path for parameter scans."""
    _, curves = _trace(model, n)
    boundaries = [map_boundary(model, c) for c in curves]
    return len(_find_cusps(model, curves, boundaries, n).cusps)
