"""Command-line front end.

Exit codes: 0 success, 1 analysis error (JSON error on stdout), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import classify as cl
from . import feasibility as fe
from . import singular as sg
from .emit import PALETTE, Plot, to_csv, to_json
from .ik import ik_count_raster, solve_ik
from .kinematics import WorkspacePoint, det_jacobian, forward
from .model import DHParams, InvalidParams, JointConfig, validate_params

FORMATS = ("json", "csv", "svg", "obj")
COMMANDS = ("fk", "ik", "singular", "workspace", "aspects", "classify", "scan",
            "feasible", "path", "report")


class UsageError(Exception):
    pass


# ------------------------------------------------------------ arguments

def _resolution(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text}")
    if n < 64 or n > 8192 or n & (n - 1):
        raise argparse.ArgumentTypeError("resolution must be a power of two in [64, 8192]")
    return n


def _formats(text: str) -> tuple[str, ...]:
    out = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in out if s not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s): {', '.join(bad)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--model", type=Path, help="JSON file with a1..alpha2")
    for name in ("a1", "a2", "a3", "d2", "d3", "alpha1", "alpha2"):
        g.add_argument(f"--{name}", type=float)
    common.add_argument("--resolution", type=_resolution, default=sg.DEFAULT_N,
                        help="torus grid size N (power of two, 64..8192)")
    common.add_argument("--out", type=Path, help="directory for output files")
    common.add_argument("--format", type=_formats, default=("json", "csv", "svg", "obj"),
                        help="comma list of json,csv,svg,obj")

    p = argparse.ArgumentParser(prog="cuspidal",
                                description="Kinematic analysis of 3R serial chains")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("fk", parents=[common], help="forward kinematics")
    s.add_argument("--joints", nargs=3, type=float, required=True, metavar=("T1", "T2", "T3"))
    s = sub.add_parser("ik", parents=[common], help="inverse kinematics")
    s.add_argument("--target", nargs=3, type=float, required=True, metavar=("X", "Y", "Z"))
    sub.add_parser("singular", parents=[common], help="singular curves on the joint torus")
    sub.add_parser("workspace", parents=[common], help="boundaries, cusps, nodes")
    sub.add_parser("aspects", parents=[common], help="aspect map")
    s = sub.add_parser("classify", parents=[common], help="classification report")
    s.add_argument("--method", choices=("closed", "numeric", "both"), default="both")
    s.add_argument("--scan", nargs=2, metavar=("a2=V", "a3=LO:HI"))
    s = sub.add_parser("scan", parents=[common], help="bifurcation oracle on an a3 line")
    s.add_argument("--scan", nargs=2, metavar=("a2=V", "a3=LO:HI"))
    s.add_argument("--plane", action="store_true", help="plot C and E curves over a2")
    sub.add_parser("feasible", parents=[common], help="feasibility structure")
    s = sub.add_parser("path", parents=[common], help="posture change or path check")
    s.add_argument("--target", nargs=3, type=float, metavar=("X", "Y", "Z"))
    s.add_argument("--pair", nargs=2, type=int, metavar=("I", "J"))
    s.add_argument("--path", help="rho,z;rho,z;... polyline to track")
    s.add_argument("--branch", type=int, default=0)
    s = sub.add_parser("report", parents=[common], help="report plus all plots")
    s.add_argument("--method", choices=("closed", "numeric", "both"), default="both")
    return p


def _model(args):
    if args.model is not None:
        try:
            data = json.loads(args.model.read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read model file: {exc}")
        params = DHParams.from_dict(data)
        over = {k: getattr(args, k) for k in ("a1", "a2", "a3", "d2", "d3", "alpha1", "alpha2")
                if getattr(args, k) is not None}
        params = params.replace(**over)
    else:
        vals = {k: getattr(args, k) for k in ("a1", "a2", "a3", "d2", "d3", "alpha1", "alpha2")}
        missing = [k for k, v in vals.items() if v is None]
        if missing:
            raise UsageError("missing model parameters: " + ", ".join(missing))
        params = DHParams(**vals)
    return validate_params(params)


def _parse_scan(items) -> tuple[float, float, float]:
    try:
        kv = dict(s.split("=", 1) for s in items)
        a2 = float(kv["a2"])
        lo, hi = (float(v) for v in kv["a3"].split(":"))
    except (KeyError, ValueError):
        raise UsageError("--scan expects a2=V a3=LO:HI")
    if not lo < hi:
        raise UsageError("--scan needs LO < HI")
    return a2, lo, hi


class Output:
    def __init__(self, args):
        self.dir = args.out
        self.formats = args.format
        self.written: list[str] = []

    def put(self, name: str, text: str, kind: str) -> None:
        if self.dir is None or kind not in self.formats:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text)
        self.written.append(str(path))


# ------------------------------------------------------------ plots

def _torus_plot(title: str) -> Plot:
    return Plot((-math.pi, math.pi), (-math.pi, math.pi), 560, 560, title,
                "theta2 (rad)", "theta3 (rad)")


def plot_singular(an: sg.SingularAnalysis, title="singular curves") -> str:
    p = _torus_plot(title)
    for c in an.curves:
        p.polyline_torus(c.theta2, c.theta3, PALETTE[c.branch_id % len(PALETTE)], 1.5)
    for c in an.cusps:
        p.circle(c.theta2, c.theta3, 3)
    return p.render()


def plot_aspects(an: sg.SingularAnalysis) -> str:
    p = _torus_plot(f"{an.aspects.count} aspects")
    colors = {k: _light(k) for k in range(an.aspects.count)}
    p.raster(an.aspects.labels, colors, ((-math.pi, math.pi), (-math.pi, math.pi)))
    for c in an.curves:
        p.polyline_torus(c.theta2, c.theta3, "#000", 1.2)
    return p.render()


def _light(k: int) -> str:
    base = PALETTE[k % len(PALETTE)]
    r, g, b = (int(base[i:i + 2], 16) for i in (1, 3, 5))
    mix = lambda v: int(v + (255 - v) * 0.6)  # noqa: E731
    return f"#{mix(r):02x}{mix(g):02x}{mix(b):02x}"


def _ws_limits(an: sg.SingularAnalysis):
    rmax = max([float(np.max(b.rho)) for b in an.boundaries] + [1e-9])
    zs = [float(np.max(np.abs(b.z))) for b in an.boundaries] + [1e-9]
    zmax = max(zs)
    return (0.0, 1.05 * rmax), (-1.05 * zmax, 1.05 * zmax)


def plot_workspace(model, an: sg.SingularAnalysis, counts: bool = True) -> str:
    """Boundaries over shaded IK-count regions, cusps as circles, nodes as crosses."""
    xl, yl = _ws_limits(an)
    h = 560
    w = int(max(320, min(1200, h * (xl[1] - xl[0]) / (yl[1] - yl[0]))))
    p = Plot(xl, yl, w, h, "workspace cross-section", "rho", "z")
    if counts and model.orthogonal and model.a1 > 0:
        r = ik_count_raster(model)
        shades = {2: "#e8f0fa", 4: "#c6d9f0", 6: "#a0c0e6", 8: "#7aa7dc"}
        ext = ((r.rho[0] - r.cell / 2, r.rho[-1] + r.cell / 2),
               (r.z[0] - r.cell / 2, r.z[-1] + r.cell / 2))
        p.raster(r.counts, shades, ext)
    for b in an.boundaries:
        if b.isolated:
            p.circle(b.rho[0], b.z[0], 3, "#2ca02c", "#2ca02c")
            continue
        p.polyline(np.append(b.rho, b.rho[:1]), np.append(b.z, b.z[:1]),
                   PALETTE[b.branch_id % len(PALETTE)], 1.3)
    for c in an.cusps:
        p.circle(c.rho, c.z, 4)
    for nd in an.nodes:
        p.cross(nd.rho, nd.z, 4)
    return p.render()


# ------------------------------------------------------------ commands

def cmd_fk(model, args, out):
    q = JointConfig(*args.joints)
    w = forward(model, q)
    res = {"joints": list(q.as_tuple()), "x": w.x, "y": w.y, "z": w.z,
           "rho": math.hypot(w.x, w.y), "det_J": float(det_jacobian(model, q.theta2, q.theta3))}
    return res


def cmd_ik(model, args, out):
    sols = solve_ik(model, WorkspacePoint(*args.target))
    return [{"theta": list(s.config.as_tuple()), "multiplicity": s.multiplicity,
             "residual": s.residual, "theta1_free": s.free_theta1} for s in sols]


def _curves_csv(model, an) -> str:
    rows = []
    for c, b in zip(an.curves, an.boundaries):
        s = c.arclength()[:-1]
        for k in range(len(c)):
            rows.append((c.branch_id, float(s[k]), float(c.theta2[k]), float(c.theta3[k]),
                         float(b.rho[k]), float(b.z[k])))
    return to_csv(["branch_id", "s", "theta2", "theta3", "rho", "z"], rows)


def _summary(an: sg.SingularAnalysis) -> dict:
    return {
        "resolution": an.n,
        "curves": [{"branch_id": c.branch_id, "kind": c.kind, "vertices": len(c)}
                   for c in an.curves],
        "aspects": an.aspects.count,
        "cusps": [{"rho": c.rho, "z": c.z, "theta2": c.theta2, "theta3": c.theta3, "t": c.t,
                   "residuals": list(c.residuals), "branch_id": c.branch_id} for c in an.cusps],
        "nonconvergent": [list(v) for v in an.cusp_search.nonconvergent],
        "nodes": [{"rho": nd.rho, "z": nd.z, "theta_a": list(nd.theta_a),
                   "theta_b": list(nd.theta_b)} for nd in an.nodes],
        "isolated_points": [list(p) for p in an.isolated_points],
    }


def cmd_singular(model, args, out):
    an = sg.analyze(model, args.resolution)
    out.put("curves.csv", _curves_csv(model, an), "csv")
    out.put("singular.svg", plot_singular(an), "svg")
    res = _summary(an)
    return {k: res[k] for k in ("resolution", "curves", "cusps", "nonconvergent")}


def cmd_workspace(model, args, out):
    an = sg.analyze(model, args.resolution)
    out.put("curves.csv", _curves_csv(model, an), "csv")
    out.put("workspace.svg", plot_workspace(model, an), "svg")
    res = _summary(an)
    res.pop("aspects")
    return res


def cmd_aspects(model, args, out):
    an = sg.analyze(model, args.resolution)
    out.put("aspects.svg", plot_aspects(an), "svg")
    sizes = np.bincount(an.aspects.labels[an.aspects.labels >= 0].ravel(),
                        minlength=an.aspects.count)
    return {"aspects": an.aspects.count,
            "det_sign": {str(k): v for k, v in sorted(an.aspects.signs.items())},
            "area_fraction": [float(v) / an.aspects.labels.size for v in sizes]}


def cmd_classify(model, args, out):
    if args.scan:
        return cmd_scan(model, args, out)
    rep = cl.classify(model, args.resolution, args.method)
    return rep.to_dict()


def _plane_svg(a1: float, d2: float, lines: dict) -> str:
    a2s = np.linspace(0.02, 4.0, 400)
    p = Plot((0.0, 4.0), (0.0, 4.0), 560, 560, f"critical a3 (a1={fmt_num(a1)}, d2={fmt_num(d2)})",
             "a2", "a3")
    vals = [cl.surface_values(a1, a2, d2) for a2 in a2s]
    for name, color, dash in (("C1", "#d62728", ""), ("C2", "#1f77b4", ""),
                              ("C3", "#2ca02c", ""), ("C4", "#9467bd", ""),
                              ("E1", "#7f7f7f", "4,3"), ("E2", "#7f7f7f", "4,3"),
                              ("E3", "#7f7f7f", "4,3")):
        ys = np.array([getattr(v, name) if getattr(v, name) is not None else np.nan
                       for v in vals], float)
        ok = np.isfinite(ys) & (ys < 4.0)
        # split at gaps so undefined stretches are not bridged
        idx = np.flatnonzero(ok)
        if len(idx) == 0:
            continue
        breaks = np.flatnonzero(np.diff(idx) > 1)
        for seg in np.split(idx, breaks + 1):
            p.polyline(a2s[seg], ys[seg], color, 1.5, dash=dash)
        k = idx[len(idx) // 2]
        p.text(a2s[k], ys[k], name, 11, color)
    for a2, found in lines.items():
        for b in found:
            p.circle(a2, b.a3, 3, "#000")
    return p.render()


def fmt_num(v: float) -> str:
    return f"{v:g}"


def cmd_scan(model, args, out):
    a1 = model.a1
    d2 = model.d2
    lines = {}
    if args.scan:
        a2, lo, hi = _parse_scan(args.scan)
        lines[a2] = cl.bifurcation_oracle(a1, d2, a2, (lo, hi), n=args.resolution)
    elif not getattr(args, "plane", False):
        raise UsageError("scan needs --scan a2=V a3=LO:HI and/or --plane")
    rows = [(a2, b.a3, b.below, b.above) for a2, f in lines.items() for b in f]
    csv_text = to_csv(["a2", "a3", "cusps_below", "cusps_above"], rows)
    out.put("scan.csv", csv_text, "csv")
    if getattr(args, "plane", False):
        out.put("bifurcation_plane.svg", _plane_svg(a1, abs(d2), lines), "svg")
    res = {"a1": a1, "d2": d2, "boundaries": [
        {"a2": a2, "a3": b.a3, "cusps_below": b.below, "cusps_above": b.above}
        for a2, f in lines.items() for b in f]}
    if lines:
        sv = cl.surface_values(a1, next(iter(lines)), abs(d2))
        res["closed_form"] = sv.as_dict()
    res["csv"] = csv_text
    return res


def _mask_plot(title: str, labels: np.ndarray, colors: dict, an) -> Plot:
    p = _torus_plot(title)
    p.raster(labels, colors, ((-math.pi, math.pi), (-math.pi, math.pi)))
    for c in an.curves:
        p.polyline_torus(c.theta2, c.theta3, "#000", 1.2)
    return p


def cmd_feasible(model, args, out):
    n = args.resolution
    an = sg.analyze(model, n)
    ram = fe.reduced_aspects(model, n)
    doms = fe.uniqueness_domains(model, n, ram)
    regs = fe.feasible_regions(model, n, doms)
    cs = ram.surfaces

    p = _mask_plot("singular and characteristic surfaces", an.aspects.labels,
                   {k: _light(k) for k in range(an.aspects.count)}, an)
    for a, segs in sorted(cs.segments.items()):
        for s in segs:
            p.polyline_torus(s[:, 0], s[:, 1], PALETTE[(a + 3) % len(PALETTE)], 1.5, closed=False)
    out.put("characteristic.svg", p.render(), "svg")
    colors = {r.id: _light(r.id) for r in ram.items}
    out.put("reduced_aspects.svg",
            _mask_plot(f"{len(ram.items)} reduced aspects", ram.labels, colors, an).render(), "svg")
    for k, d in enumerate(doms):
        lab = np.where(d.mask, 1, 0)
        out.put(f"uniqueness_{k}.svg",
                _mask_plot(f"uniqueness domain {k}", lab, {1: _light(k)}, an).render(), "svg")
    r = ik_count_raster(model)
    xl, yl = _ws_limits(an)
    ext = ((r.rho[0] - r.cell / 2, r.rho[-1] + r.cell / 2),
           (r.z[0] - r.cell / 2, r.z[-1] + r.cell / 2))
    for k, reg in enumerate(regs):
        p = Plot(xl, yl, 480, 560, f"feasible region {k}", "rho", "z")
        p.raster(np.where(reg.cells, 1, 0), {1: _light(k)}, ext)
        for b in an.boundaries:
            if not b.isolated:
                p.polyline(np.append(b.rho, b.rho[:1]), np.append(b.z, b.z[:1]), "#000", 1.0)
        out.put(f"feasible_region_{k}.svg", p.render(), "svg")
    for a in range(an.aspects.count):
        mesh = fe.level_set_surface(model, a, n)
        out.put(f"levelset_aspect_{a}.obj", mesh.to_obj(), "obj")
    return {
        "characteristic_points": {str(a): int(len(v)) for a, v in sorted(cs.points.items())},
        "reduced_aspects": [{"id": r.id, "aspect": r.aspect, "region": r.region,
                             "ik_count": r.ik_count, "cells": r.cells} for r in ram.items],
        "uniqueness_domains": [{"aspect": d.aspect, "retained": list(d.retained),
                                "deleted": list(d.deleted), "cells": int(d.mask.sum())}
                               for d in doms],
        "feasible_regions": [{"domain": g.domain, "aspect": g.aspect, "cells": g.area_cells}
                             for g in regs],
    }


def cmd_path(model, args, out):
    if args.path:
        try:
            pts = [tuple(float(v) for v in s.split(",")) for s in args.path.split(";") if s]
        except ValueError:
            raise UsageError("--path expects rho,z;rho,z;...")
        if not pts or any(len(p) != 2 for p in pts):
            raise UsageError("--path expects rho,z;rho,z;...")
        res = fe.check_path_feasibility(model, pts, args.branch)
        return {"feasible": res.feasible, "failed_at": res.failed_at, "reason": res.reason,
                "steps": len(res.configs)}
    if args.target is None or args.pair is None:
        raise UsageError("path needs --target X Y Z --pair I J, or --path")
    pc = fe.plan_posture_change(model, WorkspacePoint(*args.target), *args.pair,
                                n=args.resolution)
    an = sg.analyze(model, args.resolution)
    xl, yl = _ws_limits(an)
    q = Plot(xl, yl, 480, 560, "posture change loop", "rho", "z")
    for b in an.boundaries:
        if not b.isolated:
            q.polyline(np.append(b.rho, b.rho[:1]), np.append(b.z, b.z[:1]), "#7f7f7f", 1.0)
    for c in an.cusps:
        q.circle(c.rho, c.z, 4)
    q.polyline(pc.loop_rho, pc.loop_z, "#d62728", 1.8)
    out.put("posture_change.svg", q.render(), "svg")
    t = _torus_plot("posture change in joint space")
    for c in an.curves:
        t.polyline_torus(c.theta2, c.theta3, "#000", 1.2)
    t.polyline_torus(pc.path[:, 1], pc.path[:, 2], "#d62728", 1.8, closed=False)
    out.put("posture_change_joint.svg", t.render(), "svg")
    return pc.certificate()


def cmd_report(model, args, out):
    rep = cl.classify(model, args.resolution, args.method).to_dict()
    if model.orthogonal and model.a1 > 0 and not model.satisfied_conditions:
        an = sg.analyze(model, args.resolution)
        out.put("curves.csv", _curves_csv(model, an), "csv")
        out.put("singular.svg", plot_singular(an), "svg")
        out.put("aspects.svg", plot_aspects(an), "svg")
        out.put("workspace.svg", plot_workspace(model, an), "svg")
        rep["feasibility"] = cmd_feasible(model, args, out)
    return rep


HANDLERS = {
    "fk": cmd_fk, "ik": cmd_ik, "singular": cmd_singular, "workspace": cmd_workspace,
    "aspects": cmd_aspects, "classify": cmd_classify, "scan": cmd_scan,
    "feasible": cmd_feasible, "path": cmd_path, "report": cmd_report,
}


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Output(args)
    try:
        model = _model(args)
        res = HANDLERS[args.command](model, args, out)
    except (UsageError, InvalidParams) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # analysis errors are reported, not raised
        stdout.write(to_json({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    if isinstance(res, dict) and "csv" in res and "csv" in args.format and args.out is None:
        stdout.write(res.pop("csv"))
        return 0
    if isinstance(res, dict):
        res.pop("csv", None)
        if out.written:
            res["files"] = out.written
    stdout.write(to_json(res))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
