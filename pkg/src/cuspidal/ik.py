"""Inverse kinematics of orthogonal 3R chains through a quartic in tan(theta3/2).

Eliminating theta1 and theta2 from the forward chain leaves

    Q(c3, s3) = K^2 - 4 a1^2 (R - (sigma2 a3 s3 + d2)^2)

with K = R + Z + a1^2 - d3^2 - (a2^2 + a3^2 + d2^2) - 2 a2 a3 c3
- 2 sigma2 d2 a3 s3, R = x^2 + y^2 and Z = z^2.  The half-angle
substitution turns (1 + t^2)^2 Q into the quartic P(t).  Every real root gives
exactly one configuration through x2 = K / (2 a1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import WorkspacePoint, forward_array
from .model import JointConfig, ManipulatorModel


class IKError(ValueError):
    pass


class NotOrthogonal(IKError):
    pass


class ZeroA1(IKError):
    pass


class DegenerateBranch(IKError):
    pass


# multiplicity-dependent cluster radii on t (relative to 1 + |t|); a triple
# root computed in double precision spreads like eps**(1/3)
TOL_CLUSTER = {2: 1e-6, 3: 1e-4, 4: 1e-3}
TOL_IMAG = 1e-9
AXIS_EPS = 1e-12


def tol_ik(model: ManipulatorModel) -> float:
    return 1e-8 * model.scale


@dataclass(frozen=True)
class IKQuery:
    R: float
    Z: float
    z_sign: int = 0

    def __post_init__(self) -> None:
        if self.R < 0 or self.Z < 0:
            raise ValueError("R and Z must be non-negative")

    @classmethod
    def from_point(cls, p: WorkspacePoint) -> "IKQuery":
        sign = 0 if p.z == 0 else (1 if p.z > 0 else -1)
        return cls(p.x * p.x + p.y * p.y, p.z * p.z, sign)


@dataclass(frozen=True)
class IKSolution:
    config: JointConfig
    multiplicity: int
    residual: float
    t: float
    free_theta1: bool = field(default=False)


def _check(model: ManipulatorModel) -> None:
    if not model.orthogonal:
        raise NotOrthogonal("closed-form IK needs |cos alpha1| = |cos alpha2| = 0")
    if model.a1 <= 0:
        raise ZeroA1("elimination divides by a1")


def _pmul(p, q):
    """Product of two degree-2 coefficient stacks (ascending, last axis)."""
    p0, p1, p2 = p
    q0, q1, q2 = q
    return np.stack([p0 * q0, p0 * q1 + p1 * q0, p0 * q2 + p1 * q1 + p2 * q0,
                     p1 * q2 + p2 * q1, p2 * q2], axis=-1)


def _parts(model: ManipulatorModel, R, Z):
    a1, a2, a3, d2, d3 = model.a1, model.a2, model.a3, model.d2, model.d3
    s = model.sigma2
    R = np.asarray(R, float)
    Z = np.asarray(Z, float)
    W = R + Z + a1 * a1 - d3 * d3 - a2 * a2 - a3 * a3 - d2 * d2
    one = np.ones_like(W)
    K = (W - 2 * a2 * a3, -4 * s * d2 * a3 * one, W + 2 * a2 * a3)
    Y = (d2 * one, 2 * s * a3 * one, d2 * one)
    U = (one, 0 * one, one)
    return K, Y, U


def quartic_coefficients_array(model: ManipulatorModel, R, Z) -> np.ndarray:
    """Ascending coefficients [c0..c4] of P(t), broadcast over R and Z."""
    K, Y, U = _parts(model, R, Z)
    R = np.asarray(R, float)
    KK = _pmul(K, K)
    YY = _pmul(Y, Y)
    UU = _pmul(U, U)
    return KK - 4 * model.a1 ** 2 * (R[..., None] * UU - YY)


def quartic_partials(model: ManipulatorModel, R, Z):
    """Coefficients of P, dP/dR and dP/dZ (each ascending in t)."""
    K, Y, U = _parts(model, R, Z)
    R = np.asarray(R, float)
    KU = _pmul(K, U)
    UU = _pmul(U, U)
    P = _pmul(K, K) - 4 * model.a1 ** 2 * (R[..., None] * UU - _pmul(Y, Y))
    dR = 2 * KU - 4 * model.a1 ** 2 * UU
    dZ = 2 * KU
    return P, dR, dZ


def quartic_coefficients(model: ManipulatorModel, query: IKQuery) -> np.ndarray:
    _check(model)
    return quartic_coefficients_array(model, query.R, query.Z)


def _polyval(c, t):
    return (((c[4] * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]


def _derivative(c: np.ndarray, k: int) -> np.ndarray:
    return np.polynomial.polynomial.polyder(c, k) if k else c


def back_substitute(model: ManipulatorModel, c3: float, s3: float,
                    x: float, y: float, z: float) -> tuple[JointConfig, bool]:
    """Recover (theta1, theta2) for a given theta3 = atan2(s3, c3).

    Returns the configuration and whether theta1 was free (target on Z axis).
    """
    a1, a2, a3, d2, d3 = model.a1, model.a2, model.a3, model.d2, model.d3
    sg1, sg2 = model.sigma1, model.sigma2
    R = x * x + y * y
    u = a2 + a3 * c3
    y3 = -d3 * sg2
    den = u * u + y3 * y3
    if den < AXIS_EPS * model.scale ** 2:
        raise DegenerateBranch("theta2 is indeterminate (u^2 + d3^2 = 0)")
    K = (R + z * z + a1 * a1 - d3 * d3 - (a2 * a2 + a3 * a3 + d2 * d2)
         - 2 * a2 * a3 * c3 - 2 * sg2 * d2 * a3 * s3)
    x2 = K / (2 * a1)
    y2 = -sg1 * (sg2 * a3 * s3 + d2)
    # [u, -y3; y3, u] [c2, s2] = [x2 - a1, z / sigma1]
    b1, b2 = x2 - a1, z * sg1
    c2 = (u * b1 + y3 * b2) / den
    s2 = (u * b2 - y3 * b1) / den
    th2 = math.atan2(s2, c2)
    r2 = x2 * x2 + y2 * y2
    if r2 < AXIS_EPS * model.scale ** 2 or R < AXIS_EPS * model.scale ** 2:
        return JointConfig(0.0, th2, math.atan2(s3, c3)), True
    c1 = (x * x2 + y * y2) / r2
    s1 = (y * x2 - x * y2) / r2
    return JointConfig(math.atan2(s1, c1), th2, math.atan2(s3, c3)), False


def _residual(model: ManipulatorModel, q: JointConfig, p: np.ndarray) -> float:
    f = np.array(forward_array(model, q.theta1, q.theta2, q.theta3))
    return float(np.linalg.norm(f - p))


def _cluster_roots(roots: np.ndarray) -> list[tuple[complex, int]]:
    """Group numerically coincident roots; returns (centroid, multiplicity)."""
    left = list(roots)
    groups = []
    while left:
        r = left.pop(0)
        best = [r]
        for m in (4, 3, 2):
            if len(left) + 1 < m:
                continue
            d = sorted(left, key=lambda w: abs(w - r))
            cand = [r] + d[: m - 1]
            cen = sum(cand) / m
            spread = max(abs(w - cen) for w in cand)
            if spread < TOL_CLUSTER[m] * (1 + abs(cen)):
                best = cand
                break
        for w in best[1:]:
            left.remove(w)
        groups.append((sum(best) / len(best), len(best)))
    return groups


def _polish(c: np.ndarray, t: float, m: int) -> float:
    # Newton on the (m-1)th derivative, where the cluster is a simple root
    g = _derivative(c, m - 1)
    dg = _derivative(g, 1)
    pv = np.polynomial.polynomial.polyval
    for _ in range(6):
        d = pv(t, dg)
        if d == 0:
            break
        step = pv(t, g) / d
        if not math.isfinite(step) or abs(step) > 1e-3 * (1 + abs(t)):
            break
        t -= step
        if abs(step) < 1e-16 * (1 + abs(t)):
            break
    return t


def solve_ik(model: ManipulatorModel, p: WorkspacePoint) -> list[IKSolution]:
    """All real inverse kinematic solutions, multiple roots merged."""
    _check(model)
    x, y, z = float(p.x), float(p.y), float(p.z)
    target = np.array([x, y, z])
    c = quartic_coefficients_array(model, x * x + y * y, z * z)
    cmax = float(np.max(np.abs(c)))
    tol = tol_ik(model)
    out: list[IKSolution] = []
    if cmax == 0.0:
        return out
    degenerate = abs(c[4]) < 1e-10 * cmax
    poly = c[:4] if degenerate else c
    roots = np.roots(poly[::-1]) if np.any(poly[1:] != 0) else np.array([])
    for cen, m in _cluster_roots(roots):
        if abs(cen.imag) > TOL_IMAG * (1 + abs(cen.real)) and m == 1:
            continue
        if m > 1 and abs(cen.imag) > TOL_CLUSTER[m] * (1 + abs(cen.real)):
            continue
        t = _polish(c, float(cen.real), m)
        th3 = 2.0 * math.atan(t)
        q, free = back_substitute(model, math.cos(th3), math.sin(th3), x, y, z)
        res = _residual(model, q, target)
        if res < tol * max(1, m * m):
            out.append(IKSolution(q, m, res, t, free))
    if degenerate:
        q, free = back_substitute(model, -1.0, 0.0, x, y, z)
        res = _residual(model, q, target)
        if res < tol:
            out.append(IKSolution(q, 1, res, math.inf, free))
    out.sort(key=lambda s: (s.config.theta3, s.config.theta2))
    return out


def count_ik(model: ManipulatorModel, p: WorkspacePoint) -> tuple[int, tuple[int, ...]]:
    """Number of distinct solutions and their multiplicities (descending)."""
    sols = solve_ik(model, p)
    return len(sols), tuple(sorted((s.multiplicity for s in sols), reverse=True))


def count_ik_array(model: ManipulatorModel, rho, z, imag_tol: float = 1e-7) -> np.ndarray:
    """Vectorized count of real roots of P (with multiplicity) on arrays.

    Intended for rasterising regions; exact boundary points are measure zero
    and are not resolved.
    """
    _check(model)
    rho = np.asarray(rho, float)
    z = np.asarray(z, float)
    c = quartic_coefficients_array(model, rho * rho, z * z)
    shape = c.shape[:-1]
    c = c.reshape(-1, 5)
    lead = c[:, 4].copy()
    cmax = np.max(np.abs(c), axis=1)
    tiny = np.abs(lead) < 1e-12 * cmax
    lead[tiny] = 1e-12 * cmax[tiny] + (cmax[tiny] == 0)
    comp = np.zeros((c.shape[0], 4, 4))
    comp[:, 1:, :3] = np.eye(3)
    comp[:, :, 3] = -c[:, :4] / lead[:, None]
    ev = np.linalg.eigvals(comp)
    real = np.abs(ev.imag) <= imag_tol * (1 + np.abs(ev.real))
    return real.sum(axis=1).reshape(shape)


@dataclass(frozen=True)
class CountRaster:
    """Solution counts on cell centres of the half cross-section (rho >= 0)."""
    rho: np.ndarray
    z: np.ndarray
    counts: np.ndarray  # indexed [iz, irho]
    cell: float

    def locate(self, rho: float, z: float) -> tuple[int, int]:
        i = int(np.clip((z - self.z[0]) / self.cell + 0.5, 0, len(self.z) - 1))
        j = int(np.clip((rho - self.rho[0]) / self.cell + 0.5, 0, len(self.rho) - 1))
        return i, j


def ik_count_raster(model: ManipulatorModel, cells: int = 512) -> CountRaster:
    """Rasterise IK counts; the cell size is (workspace diameter) / cells."""
    reach = 1.02 * model.scale
    h = 2 * reach / cells
    rho = (np.arange(cells // 2) + 0.5) * h
    z = -reach + (np.arange(cells) + 0.5) * h
    Rg, Zg = np.meshgrid(rho, z)
    return CountRaster(rho, z, count_ik_array(model, Rg, Zg), h)
