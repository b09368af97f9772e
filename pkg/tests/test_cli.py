import io
import json

import pytest

from cuspidal.cli import run

MODEL = ["--a1", "1", "--a2", "2", "--a3", "1.5", "--d2", "1", "--d3", "0",
         "--alpha1", "-1.5707963", "--alpha2", "1.5707963"]


def call(*argv):
    buf = io.StringIO()
    code = run(list(argv), stdout=buf)
    return code, buf.getvalue()


@pytest.fixture
def model_file(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(dict(a1=1, a2=2, a3=1.5, d2=1, d3=0,
                                 alpha1=-1.5707963, alpha2=1.5707963)))
    return str(p)


def test_classify_example():
    code, out = call("classify", *MODEL, "--resolution", "512")
    rep = json.loads(out)
    assert code == 0 and rep["cusp_count"] == 4 and rep["cuspidal"] is True


def test_ik_example(model_file):
    code, out = call("ik", "--model", model_file, "--target", "2.5", "0", "0.5")
    sols = json.loads(out)
    assert code == 0 and len(sols) == 4
    assert all({"theta", "multiplicity", "residual"} <= set(s) for s in sols)


def test_condition_shortcut():
    args = list(MODEL)
    args[1] = "0"
    code, out = call("classify", *args)
    rep = json.loads(out)
    assert code == 0 and rep["cuspidal"] is False and rep["conditions"] == [3]
    assert rep["method"] == "closed_form"


def test_fk(model_file):
    code, out = call("fk", "--model", model_file, "--joints", "0", "0", "0")
    d = json.loads(out)
    assert code == 0 and (d["x"], d["y"]) == (4.5, 1.0)


@pytest.mark.parametrize("argv", [
    ["classify", *MODEL, "--resolution", "100"],
    ["classify", *MODEL, "--resolution", "32"],
    ["classify", "--a1", "1"],
    ["fk", *MODEL],
    ["frobnicate"],
    ["scan", *MODEL, "--scan", "a2=2", "a3=3:1"],
    ["classify", *MODEL, "--format", "png"],
    ["classify", "--model", "/nonexistent.json"],
])
def test_usage_errors(argv):
    assert call(*argv)[0] == 2


def test_analysis_error_is_json():
    args = list(MODEL)
    args[args.index("--alpha1") + 1] = "0.4"
    code, out = call("ik", *args, "--target", "1", "0", "0")
    assert code == 1
    assert json.loads(out)["error"] == "NotOrthogonal"


def test_invalid_params_are_usage_errors():
    args = list(MODEL)
    args[1] = "-1"
    assert call("classify", *args)[0] == 2


def test_scan_prints_csv():
    code, out = call("scan", *MODEL, "--scan", "a2=2", "a3=2.0:2.2", "--resolution", "256")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "a2,a3,cusps_below,cusps_above"
    assert len(lines) == 2 and lines[1].startswith("2,2.10")


def _run_into(tmp_path, name, *argv):
    d = tmp_path / name
    code, out = call(*argv, "--out", str(d), "--resolution", "256")
    assert code == 0, out
    return d, json.loads(out)


@pytest.mark.parametrize("cmd, files", [
    (["workspace"], ["workspace.svg", "curves.csv"]),
    (["aspects"], ["aspects.svg"]),
    (["singular"], ["singular.svg", "curves.csv"]),
    (["path", "--target", "2.5", "0", "0.5", "--pair", "1", "3"],
     ["posture_change.svg", "posture_change_joint.svg"]),
    (["scan", "--plane"], ["bifurcation_plane.svg", "scan.csv"]),
])
def test_outputs_deterministic(tmp_path, cmd, files):
    a, ra = _run_into(tmp_path, "a", *cmd, *MODEL)
    b, rb = _run_into(tmp_path, "b", *cmd, *MODEL)
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    ra.pop("files")
    rb.pop("files")
    assert ra == rb


def test_feasible_outputs(tmp_path):
    d, res = _run_into(tmp_path, "f", "feasible", *MODEL)
    names = {p.name for p in d.iterdir()}
    assert {"characteristic.svg", "reduced_aspects.svg", "levelset_aspect_0.obj"} <= names
    assert sum(n.startswith("uniqueness_") for n in names) == len(res["uniqueness_domains"])
    assert sum(n.startswith("feasible_region_") for n in names) == len(res["feasible_regions"])


def test_curves_csv_columns(tmp_path):
    d, _ = _run_into(tmp_path, "c", "singular", *MODEL)
    head = (d / "curves.csv").read_text().splitlines()[0]
    assert head == "branch_id,s,theta2,theta3,rho,z"


def test_format_filter(tmp_path):
    d = tmp_path / "svgonly"
    code, _ = call("workspace", *MODEL, "--out", str(d), "--format", "svg", "--resolution", "256")
    assert code == 0 and sorted(p.name for p in d.iterdir()) == ["workspace.svg"]


def test_path_check():
    code, out = call("path", *MODEL, "--path", "4.2,-0.3;4.2,0.3")
    assert code == 0 and json.loads(out)["feasible"] is True


def test_path_needs_target_and_pair():
    assert call("path", *MODEL, "--target", "2.5", "0", "0.5")[0] == 2


def test_report_writes_all_plots(tmp_path):
    d, rep = _run_into(tmp_path, "r", "report", *MODEL)
    names = {p.name for p in d.iterdir()}
    assert {"workspace.svg", "aspects.svg", "characteristic.svg"} <= names
    assert rep["cusp_count"] == 4 and "feasibility" in rep
