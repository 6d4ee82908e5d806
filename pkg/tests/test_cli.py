import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from geofol.cli import export_mesh, main, parse_config, run
from geofol.errors import ConfigError
from geofol.geometry import ImmersionField
from geofol.numjet import SmoothMap

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def load_report(path):
    return json.loads(Path(path).read_text())


def read_obj(path):
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("v "):
            verts.append([float(t) for t in line.split()[1:]])
        elif line.startswith("f "):
            faces.append([int(t) - 1 for t in line.split()[1:]])
    return np.array(verts), np.array(faces)


def copy_config(tmp_path, name):
    dst = tmp_path / name
    shutil.copy(CONFIGS / name, dst)
    return dst


def test_torus_config(tmp_path, capsys):
    cfg = copy_config(tmp_path, "torus.json")
    code = run(str(cfg))
    assert code == 0
    out_path = capsys.readouterr().out.strip()
    rep = load_report(out_path)
    assert rep["summary"]["histogram"] == {"CASE_II": 64}
    assert rep["summary"]["grid_size"] == 64
    assert rep["mesh"]["vertices"] == 1024 and rep["mesh"]["triangles"] == 2048
    verts, faces = read_obj(tmp_path / "torus.obj")
    assert verts.shape == (1024, 3) and faces.shape == (2048, 3)
    assert Path(tmp_path / "torus.obj").read_text().startswith("# geofol mesh config-sha256 ")


def test_ruled_config(tmp_path, capsys):
    code = run(str(copy_config(tmp_path, "ruled.json")))
    rep = load_report(capsys.readouterr().out.strip())
    assert code == 0
    assert rep["summary"]["histogram"] == {"CASE_I": rep["summary"]["grid_size"]}


def test_bad_grid_config(tmp_path, capsys):
    code = run(str(copy_config(tmp_path, "bad_grid.json")))
    rep = load_report(capsys.readouterr().out.strip())
    assert code == 2
    assert "grid resolutions" in rep["error"]


def test_builder_error_reported_verbatim(tmp_path):
    doc = {"version": 1,
           "construction": {"type": "partial_tube", "base": {"type": "circle", "radius": 1.0},
                            "fiber": {"type": "paraboloid", "offset": [-1.0, 0.0, 0.0]}},
           "verify": ["classify"], "grid": {"resolution": 2}}
    p = write(tmp_path, doc)
    rep_path = tmp_path / "r.json"
    assert run(str(p), report=str(rep_path)) == 2
    err = load_report(rep_path)["error"]
    assert "not admissible" in err


def test_suite_failure_exit_one(tmp_path):
    doc = json.loads((CONFIGS / "ruled.json").read_text())
    doc["expect"] = {"case": "CASE_II"}
    doc["grid"] = {"resolution": 2}
    p = write(tmp_path, doc)
    assert run(str(p), report=str(tmp_path / "r.json")) == 1
    rep = load_report(tmp_path / "r.json")
    assert rep["summary"]["pass"]["classify"] is False


def test_determinism(tmp_path):
    doc = json.loads((CONFIGS / "ruled.json").read_text())
    p = write(tmp_path, doc)
    run(str(p), report=str(tmp_path / "a.json"))
    run(str(p), report=str(tmp_path / "b.json"))
    a, b = load_report(tmp_path / "a.json"), load_report(tmp_path / "b.json")
    a["provenance"].pop("wall_time")
    b["provenance"].pop("wall_time")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_report_histogram_totals(tmp_path):
    p = write(tmp_path, {"version": 1,
                         "construction": {"type": "surface_like_cylindrical",
                                          "surface": "plane", "n": 3},
                         "verify": ["classify", "curvature_invariant"],
                         "grid": {"resolution": 3}})
    assert run(str(p), backend="fd", report=str(tmp_path / "r.json")) == 0
    rep = load_report(tmp_path / "r.json")
    assert sum(rep["summary"]["histogram"].values()) == rep["summary"]["grid_size"] == 27
    assert rep["provenance"]["backend"] == "fd"
    assert rep["config"]["tolerances"]["classify"] == 1e-6


def test_plane_mesh_is_planar(tmp_path):
    f = ImmersionField(SmoothMap(lambda x: np.array([x[0], 2 * x[1], 0.5 + 0 * x[0]]), 2, 3,
                                 [-1, -1], [1, 1]))
    path = tmp_path / "plane.obj"
    nv, nt = export_mesh(f, (6, 5), str(path))
    verts, faces = read_obj(path)
    assert (nv, nt) == (30, 40)
    n = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]], verts[faces[:, 2]] - verts[faces[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    assert np.allclose(n, n[0], atol=1e-6)  # parallel with consistent winding


def test_four_dimensional_slice_mesh(tmp_path):
    doc = {"version": 1,
           "construction": {"type": "partial_tube", "base": {"type": "line", "dim": 4},
                            "fiber": {"type": "sphere", "r": 0.5, "center": [0.2, 0, 0]}},
           "verify": ["partial_tube_eq3"], "grid": {"resolution": 2},
           "output": {"mesh": {"resolution": [7, 5], "projection": [0, 1, 2]}}}
    p = write(tmp_path, doc)
    assert run(str(p), report=str(tmp_path / "r.json")) == 0
    verts, _ = read_obj(tmp_path / "cfg.obj")
    assert verts.shape == (35, 3)


def test_missing_projection_is_config_error(tmp_path):
    f = ImmersionField(SmoothMap(lambda x: np.array([x[0], x[1], x[2], 0 * x[0]]), 3, 4,
                                 [-1] * 3, [1] * 3))
    with pytest.raises(ConfigError):
        export_mesh(f, (3, 3), str(tmp_path / "m.obj"))


def test_parse_config_rejections():
    good = {"version": 1, "construction": {"type": "rotation"}, "verify": ["classify"]}
    parse_config(good)
    for bad in ({**good, "version": 2}, {**good, "verify": ["nope"]},
                {**good, "grid": {"resolution": [3, 1]}},
                {**good, "tolerances": {"nope": 1.0}},
                {**good, "construction": {"type": "unknown"}}):
        with pytest.raises(ConfigError):
            parse_config(bad)


bad_docs = st.one_of(
    st.builds(lambda r: {"grid": {"resolution": r}}, st.integers(-3, 1)),
    st.builds(lambda v: {"verify": [v]}, st.text(min_size=1, max_size=8)
              .filter(lambda s: s not in ("classify", "totally_geodesic"))),
    st.builds(lambda v: {"version": v}, st.integers(2, 9)),
    st.builds(lambda r: {"construction": {"type": "rotation", "radius": r,
                                          "profile": {"type": "circle", "r": 0.5,
                                                      "center": [-r, 0.0]}}},
              st.floats(0.5, 3.0)),
)


@settings(max_examples=15, deadline=None,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(bad_docs)
def test_exit_code_two_for_bad_configs(tmp_path, patch):
    doc = {"version": 1, "construction": {"type": "rotation", "radius": 2.0,
                                          "profile": {"type": "circle", "r": 0.5}},
           "verify": ["classify"], "grid": {"resolution": 2}}
    doc.update(patch)
    p = write(tmp_path, doc)
    assert run(str(p), report=str(tmp_path / "r.json")) == 2
    assert "error" in load_report(tmp_path / "r.json")


def test_console_entry_point(tmp_path):
    p = copy_config(tmp_path, "bad_grid.json")
    proc = subprocess.run([sys.executable, "-m", "geofol.cli", "run", str(p)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stdout.strip().endswith("bad_grid.report.json")
    assert "geofol:" in proc.stderr
    assert main(["run", str(p), "--report", str(tmp_path / "x.json")]) == 2


def test_cone_config(tmp_path):
    p = copy_config(tmp_path, "cone.json")
    assert run(str(p), report=str(tmp_path / "r.json")) == 0
    rep = load_report(tmp_path / "r.json")
    assert rep["summary"]["histogram"] == {"CASE_III": 27}
    assert rep["summary"]["max_residual"]["residuals_7_11"] <= 5e-3


def test_envelope_over_cone(tmp_path):
    doc = {"version": 1,
           "construction": {"type": "flat_envelope",
                            "base": {"surface": "clifford_torus", "kind": "conical", "n": 3},
                            "leaf_axis": 1, "t": 0.1},
           "verify": ["envelope_checks"], "grid": {"resolution": [3, 2, 2]}}
    p = write(tmp_path, doc)
    assert run(str(p), report=str(tmp_path / "r.json")) == 0
