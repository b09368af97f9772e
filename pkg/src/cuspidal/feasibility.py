"""Characteristic surfaces, reduced aspects, uniqueness domains and path checks.

Everything lives on the same (theta2, theta3) torus grid as the aspect map;
workspace-side sets are rasters of the (rho, z) half-plane.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import singular
from .ik import CountRaster, NotOrthogonal, ik_count_raster, solve_ik
from .kinematics import WorkspacePoint, cross_section_array, jacobian_array, planar_array
from .model import JointConfig, ManipulatorModel

TWO_PI = 2.0 * math.pi
DILATION = 2  # cells removed around characteristic surfaces before filling
LINK_DIST = 0.1  # rad; consecutive preimages farther apart get refined
BRANCH_STEP = 0.05  # rad; maximal joint jump accepted while tracking a branch


class FragmentationWarning(UserWarning):
    pass


class DifferentAspects(ValueError):
    pass


class SingularPath(ValueError):
    pass


class StartUnreachable(ValueError):
    pass


def _torus_delta(a, b):
    return (np.asarray(b) - np.asarray(a) + math.pi) % TWO_PI - math.pi


def _torus_dist(p, q) -> float:
    d = _torus_delta(p, q)
    return float(np.hypot(d[0], d[1]))


def _det(model: ManipulatorModel, t2, t3):
    return singular.det3(jacobian_array(model, 0.0, t2, t3))


# ------------------------------------------------------------ characteristic

@dataclass
class CharacteristicSurfaceSet:
    n: int
    points: dict[int, np.ndarray]  # aspect -> (k, 2) array of (theta2, theta3)
    segments: dict[int, np.ndarray]  # aspect -> (m, 2, 2) linked pieces
    mask: np.ndarray  # [i3, i2] rasterised surfaces (all aspects)

    @property
    def empty(self) -> bool:
        return all(len(p) == 0 for p in self.points.values())


def _preimages(model: ManipulatorModel, t2: float, t3: float) -> list[tuple[float, float]]:
    """Nonsingular (theta2, theta3) with the same image as a singular point."""
    x, y, z = planar_array(model, t2, t3)
    out = []
    eps = singular.eps_sing(model)
    for s in solve_ik(model, WorkspacePoint(float(x), float(y), float(z))):
        if s.multiplicity > 1:
            continue
        q = (s.config.theta2, s.config.theta3)
        if _torus_dist(q, (t2, t3)) < 1e-2:
            continue
        if abs(float(_det(model, *q))) <= eps:
            continue
        out.append(q)
    return out


def _adjacent_aspects(aspects: singular.AspectMap, func, curve: singular.SingularCurve) -> set:
    n = len(aspects.theta)
    off = 3 * TWO_PI / n
    if curve.kind == "line":
        g2, g3 = np.zeros(len(curve)), np.ones(len(curve))
    else:
        g2, g3 = func.grad(curve.theta2, curve.theta3)
    g = np.hypot(g2, g3)
    g = np.where(g > 0, g, 1.0)
    out = set()
    for sgn in (1, -1):
        lab = aspects.aspect_of(curve.theta2 + sgn * off * g2 / g, curve.theta3 + sgn * off * g3 / g)
        out |= {int(v) for v in np.unique(lab) if v >= 0}
    return out


def _link(model, func, curve, k0, k1, a, b, depth, out_pts, out_segs):
    """Join preimages at curve parameters k0 < k1 (fractional vertex indices)."""
    mid = None
    for p in a:
        near = min(b, key=lambda q: _torus_dist(p, q), default=None)
        if near is not None and _torus_dist(p, near) < LINK_DIST:
            out_segs.append((p, near))
            continue
        if depth == 0:
            continue
        km = 0.5 * (k0 + k1)
        if mid is None:
            t2m, t3m = singular._project_to_curve(func, *_curve_point(curve, km))
            mid = _preimages(model, t2m, t3m)
            out_pts.extend(mid)
            for q in mid:
                _link(model, func, curve, km, k1, [q], b, depth - 1, out_pts, out_segs)
        _link(model, func, curve, k0, km, [p], mid, depth - 1, out_pts, out_segs)


def _curve_point(curve: singular.SingularCurve, k: float) -> tuple[float, float]:
    m = len(curve)
    i = int(math.floor(k)) % m
    u = k - math.floor(k)
    j = (i + 1) % m
    d = _torus_delta((curve.theta2[i], curve.theta3[i]), (curve.theta2[j], curve.theta3[j]))
    return float(curve.theta2[i] + u * d[0]), float(curve.theta3[i] + u * d[1])


def _rasterize(segs: np.ndarray, n: int) -> np.ndarray:
    mask = np.zeros((n, n), bool)
    if len(segs) == 0:
        return mask
    h = TWO_PI / n
    p = segs[:, 0, :]
    d = _torus_delta(p, segs[:, 1, :])
    k = np.maximum(1, np.ceil(np.hypot(d[:, 0], d[:, 1]) / (0.4 * h))).astype(int)
    rep = np.repeat(np.arange(len(segs)), k + 1)
    u = np.concatenate([np.linspace(0.0, 1.0, kk + 1) for kk in k])
    pts = p[rep] + u[:, None] * d[rep]
    i2 = np.rint((pts[:, 0] + math.pi) / h).astype(int) % n
    i3 = np.rint((pts[:, 1] + math.pi) / h).astype(int) % n
    mask[i3, i2] = True
    return mask


def characteristic_surfaces(model: ManipulatorModel,
                            n: int = singular.DEFAULT_N) -> CharacteristicSurfaceSet:
    if not model.orthogonal:
        raise NotOrthogonal("characteristic surfaces use the closed-form inverse")
    an = singular.analyze(model, n)
    func = singular.ContourFunction(model)
    pts: dict[int, list] = {a: [] for a in range(an.aspects.count)}
    segs: dict[int, list] = {a: [] for a in range(an.aspects.count)}
    for curve, bc in zip(an.curves, an.boundaries):
        if curve.kind == "line" or bc.isolated:
            continue
        adjacent = _adjacent_aspects(an.aspects, func, curve)
        m = len(curve)
        pre = [_preimages(model, float(curve.theta2[k]), float(curve.theta3[k])) for k in range(m)]
        cur_pts: list = [q for qs in pre for q in qs]
        cur_segs: list = []
        for k in range(m):
            _link(model, func, curve, k, k + 1, pre[k], pre[(k + 1) % m], 6, cur_pts, cur_segs)
        for q in cur_pts:
            a = int(an.aspects.aspect_of(q[0], q[1]))
            if a in adjacent:
                pts[a].append(q)
        for p, q in cur_segs:
            a = int(an.aspects.aspect_of(p[0], p[1]))
            if a in adjacent:
                segs[a].append((p, q))
    points = {a: np.array(v, float).reshape(-1, 2) for a, v in pts.items()}
    pieces = {a: np.array(v, float).reshape(-1, 2, 2) for a, v in segs.items()}
    allsegs = np.concatenate([v for v in pieces.values()] + [np.zeros((0, 2, 2))])
    return CharacteristicSurfaceSet(n, points, pieces, _rasterize(allsegs, n))


# ------------------------------------------------------------ workspace regions

@dataclass
class RegionMap:
    """Connected regions of constant IK count in the (rho, z) half-plane."""
    raster: CountRaster
    labels: np.ndarray  # [iz, irho]; 0 outside the workspace
    counts: dict[int, int]

    def region_of(self, rho, z) -> np.ndarray:
        r = self.raster
        i = np.clip(np.rint((np.asarray(z) - r.z[0]) / r.cell), 0, len(r.z) - 1).astype(int)
        j = np.clip(np.rint((np.asarray(rho) - r.rho[0]) / r.cell), 0, len(r.rho) - 1).astype(int)
        return self.labels[i, j]


def workspace_regions(model: ManipulatorModel) -> RegionMap:
    raster = ik_count_raster(model)
    labels = np.zeros(raster.counts.shape, int)
    counts = {}
    nxt = 1
    for c in sorted(int(v) for v in np.unique(raster.counts) if v > 0):
        lab, num = ndimage.label(raster.counts == c)
        sizes = ndimage.sum(np.ones_like(lab), lab, index=np.arange(1, num + 1))
        for k in range(1, num + 1):
            # specks along boundaries are raster noise, not regions
            if sizes[k - 1] < 4:
                continue
            labels[lab == k] = nxt
            counts[nxt] = c
            nxt += 1
    return RegionMap(raster, labels, counts)


# ------------------------------------------------------------ reduced aspects

@dataclass
class ReducedAspect:
    id: int
    aspect: int
    region: int  # workspace region id (RegionMap label)
    ik_count: int  # IK count of that region
    cells: int
    purity: float  # fraction of sampled cells imaged inside ``region``


@dataclass
class ReducedAspectMap:
    model: ManipulatorModel
    aspects: singular.AspectMap
    labels: np.ndarray  # [i3, i2]: reduced aspect id, -1 when singular
    core: np.ndarray  # same, -1 also on the dilated characteristic band
    items: list[ReducedAspect]
    regions: RegionMap
    surfaces: CharacteristicSurfaceSet

    def of_aspect(self, a: int) -> list[ReducedAspect]:
        return [r for r in self.items if r.aspect == a]

    def locate(self, t2: float, t3: float) -> int:
        """Reduced aspect of an exact configuration (-1 if singular).

        Inside the band around the characteristic surfaces the grid cannot
        tell the sides apart, so the IK count at the image point decides:
        neighbours across a characteristic surface map to different regions.
        """
        a = self.aspects.locate(self.model, t2, t3)
        if a < 0:
            return -1
        n = self.core.shape[0]
        h = TWO_PI / n
        c2 = int(np.rint((t2 + math.pi) / h))
        c3 = int(np.rint((t3 + math.pi) / h))
        count = None
        for r in (DILATION + 2, 8, 16, 32, 64):
            win = self.core[np.arange(c3 - r, c3 + r + 1)[:, None] % n,
                            np.arange(c2 - r, c2 + r + 1)[None, :] % n]
            cand = {}
            for k in np.unique(win):
                k = int(k)
                if k >= 0 and self.items[k].aspect == a:
                    ii, jj = np.nonzero(win == k)
                    cand[k] = float(np.min((ii - r) ** 2 + (jj - r) ** 2))
            if len(cand) == 1 and not (win < 0).any():
                return next(iter(cand))
            if count is None:
                x, y, z = planar_array(self.model, t2, t3)
                count = len(solve_ik(self.model, WorkspacePoint(float(x), float(y), float(z))))
            same = [k for k in cand if self.items[k].ik_count == count]
            if same:
                return min(same, key=lambda k: (cand[k], k))
        k = int(self.labels[c3 % n, c2 % n])
        return k if k >= 0 and self.items[k].aspect == a else -1


def _dilate_torus(mask: np.ndarray, r: int) -> np.ndarray:
    if r <= 0:
        return mask.copy()
    pad = np.pad(mask, r, mode="wrap")
    st = ndimage.generate_binary_structure(2, 1)
    out = ndimage.binary_dilation(pad, st, iterations=r)
    return out[r:-r, r:-r]


def _grow_labels(core: np.ndarray, allowed: np.ndarray, iters: int) -> np.ndarray:
    """Spread labels into ``allowed`` cells that are still unlabelled."""
    lab = core.copy()
    for _ in range(iters):
        todo = allowed & (lab < 0)
        if not todo.any():
            break
        grown = ndimage.grey_dilation(lab, size=(3, 3), mode="wrap")
        lab = np.where(todo & (grown >= 0), grown, lab)
    return lab


def reduced_aspects(model: ManipulatorModel, n: int = singular.DEFAULT_N,
                    min_cells: Optional[int] = None) -> ReducedAspectMap:
    an = singular.analyze(model, n)
    cs = characteristic_surfaces(model, n)
    regions = workspace_regions(model)
    band = _dilate_torus(cs.mask, DILATION)
    amap = an.aspects.labels
    th = an.aspects.theta
    T2, T3 = np.meshgrid(th, th)
    rho, z = cross_section_array(model, T2, T3)
    reg = regions.region_of(rho, z)
    if min_cells is None:
        min_cells = max(16, (n // 256) ** 2)
    core = -np.ones_like(amap)
    items: list[ReducedAspect] = []
    for a in range(an.aspects.count):
        lab, num = singular.label_torus((amap == a) & ~band)
        found = 0
        for k in range(1, num + 1):
            sel = lab == k
            size = int(sel.sum())
            if size < min_cells:
                continue
            r = reg[sel]
            r = r[r > 0]
            if len(r) == 0:
                continue
            vals, cnt = np.unique(r, return_counts=True)
            best = int(vals[np.argmax(cnt)])
            rid = len(items)
            core[sel] = rid
            items.append(ReducedAspect(rid, a, best, regions.counts[best], size,
                                       float(cnt.max() / len(r))))
            found += 1
        if found > 3 and model.closed_form:
            warnings.warn(f"aspect {a} splits into {found} reduced aspects at N={n}",
                          FragmentationWarning, stacklevel=2)
    # give band cells back to the nearest reduced aspect of the same aspect
    full = core.copy()
    for a in range(an.aspects.count):
        allowed = amap == a
        grown = _grow_labels(np.where(allowed, core, -1), allowed, 4 * DILATION + 4)
        full = np.where(allowed & (full < 0), grown, full)
    return ReducedAspectMap(model, an.aspects, full, core, items, regions, cs)


# ------------------------------------------------------------ uniqueness domains

@dataclass
class UniquenessDomain:
    aspect: int
    retained: tuple[int, ...]
    deleted: tuple[int, ...]
    mask: np.ndarray = field(repr=False)  # grid cells of Qu
    ram: Optional[ReducedAspectMap] = field(default=None, repr=False)

    def contains(self, t2: float, t3: float) -> bool:
        if self.ram is None:
            n = self.mask.shape[0]
            h = TWO_PI / n
            i2 = int(np.rint((t2 + math.pi) / h)) % n
            i3 = int(np.rint((t3 + math.pi) / h)) % n
            return bool(self.mask[i3, i2])
        return self.ram.locate(t2, t3) in self.retained


def uniqueness_domains(model: ManipulatorModel, n: int = singular.DEFAULT_N,
                       ram: Optional[ReducedAspectMap] = None) -> list[UniquenessDomain]:
    """All maximal domains: per aspect keep one reduced aspect per region."""
    if ram is None:
        ram = reduced_aspects(model, n)
    an = singular.analyze(model, n)
    out = []
    for a in range(an.aspects.count):
        mine = ram.of_aspect(a)
        groups: dict[int, list[int]] = {}
        for r in mine:
            groups.setdefault(r.region, []).append(r.id)
        keys = sorted(groups)
        for choice in itertools.product(*(groups[k] for k in keys)):
            deleted = tuple(sorted(r.id for r in mine if r.id not in choice))
            keep = np.isin(ram.labels, choice)
            if deleted:
                # closure of the deleted pieces: their cells plus the band
                gone = _dilate_torus(np.isin(ram.core, deleted), DILATION)
                keep &= ~gone | np.isin(ram.core, choice)
            out.append(UniquenessDomain(a, tuple(sorted(choice)), deleted, keep, ram))
    return out


# ------------------------------------------------------------ feasible regions

@dataclass
class FeasibleRegion:
    domain: int
    aspect: int
    cells: np.ndarray = field(repr=False)  # [iz, irho] on the region raster

    @property
    def area_cells(self) -> int:
        return int(self.cells.sum())


def image_cells(model: ManipulatorModel, mask: np.ndarray, raster: CountRaster) -> np.ndarray:
    """Raster cells hit by the images of the masked torus samples."""
    n = mask.shape[0]
    th = singular.theta_grid(n)
    i3, i2 = np.nonzero(mask)
    rho, z = cross_section_array(model, th[i2], th[i3])
    out = np.zeros(raster.counts.shape, bool)
    i = np.clip(np.rint((z - raster.z[0]) / raster.cell), 0, len(raster.z) - 1).astype(int)
    j = np.clip(np.rint((rho - raster.rho[0]) / raster.cell), 0, len(raster.rho) - 1).astype(int)
    out[i, j] = True
    return ndimage.binary_closing(out) & (raster.counts > 0) | out


def feasible_regions(model: ManipulatorModel, n: int = singular.DEFAULT_N,
                     domains: Optional[list[UniquenessDomain]] = None) -> list[FeasibleRegion]:
    if domains is None:
        domains = uniqueness_domains(model, n)
    raster = ik_count_raster(model)
    return [FeasibleRegion(k, d.aspect, image_cells(model, d.mask, raster))
            for k, d in enumerate(domains)]


# ------------------------------------------------------------ level-set surface

@dataclass
class Mesh:
    vertices: np.ndarray  # (k, 3): rho, z, cos(theta2)
    faces: np.ndarray  # (m, 3) zero-based
    joints: np.ndarray  # (k, 2) source (theta2, theta3)

    def to_obj(self) -> str:
        lines = ["# rho z cos(theta2)"]
        lines += [f"v {a:.9f} {b:.9f} {c:.9f}" for a, b, c in self.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces]
        return "\n".join(lines) + "\n"


def level_set_surface(model: ManipulatorModel, aspect: int, n: int = singular.DEFAULT_N,
                      stride: int = 4) -> Mesh:
    """Triangulated (rho, z, cos theta2) sheet over the cells of one aspect."""
    an = singular.analyze(model, n)
    lab = an.aspects.labels[::stride, ::stride]
    th = an.aspects.theta[::stride]
    m = len(th)
    T2, T3 = np.meshgrid(th, th)
    inside = lab == aspect
    inside &= np.abs(_det(model, T2, T3)) > singular.eps_sing(model)
    idx = -np.ones((m, m), int)
    i3, i2 = np.nonzero(inside)
    idx[i3, i2] = np.arange(len(i3))
    rho, z = cross_section_array(model, T2[i3, i2], T3[i3, i2])
    verts = np.column_stack([rho, z, np.cos(T2[i3, i2])])
    # cells whose four corners lie in the aspect; wrap only in theta2, so
    # the sheet is cut along theta3 = -pi
    a = idx[:-1, :]
    b = np.roll(idx, -1, axis=1)[:-1, :]
    c = np.roll(idx, -1, axis=1)[1:, :]
    d = idx[1:, :]
    ok = (a >= 0) & (b >= 0) & (c >= 0) & (d >= 0)
    faces = np.concatenate([np.column_stack([a[ok], b[ok], c[ok]]),
                            np.column_stack([a[ok], c[ok], d[ok]])])
    return Mesh(verts, faces, np.column_stack([T2[i3, i2], T3[i3, i2]]))


# ------------------------------------------------------------ posture change

@dataclass
class PostureChange:
    start: JointConfig
    end: JointConfig
    path: np.ndarray  # (k, 3) joint samples
    min_abs_det: float
    loop_rho: np.ndarray
    loop_z: np.ndarray
    enclosed_cusps: list[int]

    def certificate(self) -> dict:
        return {
            "start": list(self.start.as_tuple()),
            "end": list(self.end.as_tuple()),
            "samples": int(len(self.path)),
            "min_abs_det": self.min_abs_det,
            "enclosed_cusps": list(self.enclosed_cusps),
        }


def point_in_polygon(px: float, py: float, xs: np.ndarray, ys: np.ndarray) -> bool:
    """Even-odd rule."""
    x0, y0 = xs, ys
    x1, y1 = np.roll(xs, -1), np.roll(ys, -1)
    crosses = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    return bool(np.count_nonzero(crosses & (px < xi)) % 2)


def joint_line(a: JointConfig, b: JointConfig, samples: int) -> np.ndarray:
    """Straight joint-space segment along the shortest angular differences."""
    qa = np.array(a.as_tuple())
    d = _torus_delta(qa, np.array(b.as_tuple()))
    u = np.linspace(0.0, 1.0, samples)[:, None]
    return qa + u * d


def plan_posture_change(model: ManipulatorModel, p: WorkspacePoint, i: int, j: int,
                        samples: int = 1000, n: int = singular.DEFAULT_N) -> PostureChange:
    sols = solve_ik(model, p)
    if not (0 <= i < len(sols) and 0 <= j < len(sols)):
        raise IndexError(f"solutions {i}, {j} requested but only {len(sols)} exist")
    return connect_configs(model, sols[i].config, sols[j].config, samples, n)


def connect_configs(model: ManipulatorModel, qa: JointConfig, qb: JointConfig,
                    samples: int = 1000, n: int = singular.DEFAULT_N) -> PostureChange:
    samples = max(samples, 1000)
    an = singular.analyze(model, n)
    la = an.aspects.locate(model, qa.theta2, qa.theta3)
    lb = an.aspects.locate(model, qb.theta2, qb.theta3)
    if la != lb:
        raise DifferentAspects(f"configurations lie in aspects {la} and {lb}")
    path = joint_line(qa, qb, samples)
    det = _det(model, path[:, 1], path[:, 2])
    mind = float(np.min(np.abs(det)))
    if mind <= singular.eps_sing(model) or np.any(np.sign(det) != np.sign(det[0])):
        raise SingularPath(f"straight line meets a singularity (min |det J| = {mind:.3e})")
    rho, z = cross_section_array(model, path[:, 1], path[:, 2])
    enclosed = [k for k, c in enumerate(an.cusps) if point_in_polygon(c.rho, c.z, rho, z)]
    return PostureChange(qa, qb, path, mind, rho, z, enclosed)


# ------------------------------------------------------------ path tracking

@dataclass
class PathCheck:
    feasible: bool
    failed_at: Optional[int]  # index of the segment start vertex where tracking stopped
    configs: list[JointConfig]
    reason: str = ""


def _nearest(model, q: np.ndarray, rho: float, z: float):
    sols = solve_ik(model, WorkspacePoint(rho, 0.0, z))
    best, dist = None, math.inf
    for s in sols:
        c = np.array(s.config.as_tuple())
        d = float(np.max(np.abs(_torus_delta(q[1:], c[1:]))))
        if d < dist:
            best, dist = c, d
    return best, dist


def check_path_feasibility(model: ManipulatorModel, path, start_branch: int,
                           max_depth: int = 24) -> PathCheck:
    """Track one IK branch along a (rho, z) polyline.

    Steps are halved until consecutive configurations differ by less than
    ``BRANCH_STEP`` in theta2 and theta3; if that fails the branch has ended
    on a singularity and the path is infeasible for it.
    """
    pts = np.asarray(path, float).reshape(-1, 2)
    sols = solve_ik(model, WorkspacePoint(float(pts[0, 0]), 0.0, float(pts[0, 1])))
    if not sols:
        raise StartUnreachable(f"no inverse solution at {tuple(pts[0])}")
    if not 0 <= start_branch < len(sols):
        raise StartUnreachable(f"branch {start_branch} of {len(sols)} does not exist")
    q = np.array(sols[start_branch].config.as_tuple())
    sign0 = np.sign(float(_det(model, q[1], q[2])))
    configs = [JointConfig(*q)]
    for k in range(len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        u = 0.0
        du = 1.0
        depth = 0
        while u < 1.0:
            v = min(1.0, u + du)
            r, zz = a + v * (b - a)
            c, dist = _nearest(model, q, float(r), float(zz))
            if c is not None and dist < BRANCH_STEP:
                if np.sign(float(_det(model, c[1], c[2]))) != sign0:
                    return PathCheck(False, k, configs, "branch crossed a singular surface")
                q, u = c, v
                configs.append(JointConfig(*q))
                du = min(1.0, 2 * du)
                depth = 0
                continue
            du *= 0.5
            depth += 1
            if depth > max_depth:
                return PathCheck(False, k, configs, "branch ends on a workspace boundary")
    return PathCheck(True, None, configs)
