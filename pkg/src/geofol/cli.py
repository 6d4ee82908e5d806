"""Batch front end: build a hypersurface from a JSON config, run verification
suites on a sample grid, write a JSON report and an optional OBJ mesh.

    geofol run config.json [--mesh out.obj] [--backend dual|fd] [--report out.json]

Exit codes: 0 all suites pass, 1 some suite fails, 2 config or build error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time
from collections import Counter

import numpy as np

from . import __version__
from .classify import (CLASSIFY_TOL, PREDICATE_TOL, RESIDUAL_TOL, adapted_frame,
                       classify_point, is_curvature_invariant, is_totally_geodesic,
                       residual_suite)
from .constructions import (EnvelopeLeafSpec, PartialTubeSpec, build_flat_envelope,
                            build_partial_tube, build_rotation_hypersurface,
                            build_ruled_example, build_surface_like, circle_profile,
                            envelope_checks, envelope_flatness, envelope_tangency,
                            clifford_torus, graph_geodesic_surface, helicoidal_surface,
                            quartic_graph,
                            sample_grid, smooth_ramp, sphere_profile)
from .curves import circle_curve, curve_from_curvatures, line_curve, parallel_normal_frame
from .errors import ConfigError, GeofolError
from .geometry import ImmersionField, geometry_jet
from .numjet import SmoothMap

log = logging.getLogger("geofol")

CONFIG_VERSION = 1
REPORT_SCHEMA = "report_v1"
SUITES = ("classify", "totally_geodesic", "curvature_invariant", "residuals_7_11",
          "envelope_checks", "partial_tube_eq3")
CONSTRUCTIONS = ("partial_tube", "rotation", "ruled_example", "surface_like_cylindrical",
                 "surface_like_conical", "flat_envelope")
DEFAULT_TOLERANCES = {
    "classify": CLASSIFY_TOL,
    "predicate": PREDICATE_TOL,
    "residual": RESIDUAL_TOL,
    "tube_identity": 1e-6,
    "flatness": 1e-4,
    "tangency": 1e-5,
}


# ------------------------------------------------------------ curvature presets


def curvature_function(preset):
    """Scalar function of s from a preset description.

    Accepted forms: a number; {"const": c}; {"poly": [c0, c1, ...]};
    {"trig": {"amplitude", "omega", "phase", "offset"}} for
    offset + amplitude sin(omega s + phase); {"ramp": {"scale": k}} for
    k s exp(-1/s) on s > 0 and 0 elsewhere.
    """
    if isinstance(preset, (int, float)) and not isinstance(preset, bool):
        c = float(preset)
        return lambda s: c
    if not isinstance(preset, dict) or len(preset) != 1:
        raise ConfigError(f"bad curvature preset {preset!r}")
    (kind, arg), = preset.items()
    if kind == "const":
        c = float(arg)
        return lambda s: c
    if kind == "poly":
        coeffs = [float(c) for c in arg]
        return lambda s: float(np.polynomial.polynomial.polyval(s, coeffs))
    if kind == "trig":
        a = float(arg.get("amplitude", 1.0))
        w = float(arg.get("omega", 1.0))
        ph = float(arg.get("phase", 0.0))
        off = float(arg.get("offset", 0.0))
        return lambda s: off + a * math.sin(w * s + ph)
    if kind == "ramp":
        k = float(arg.get("scale", 1.0)) if isinstance(arg, dict) else float(arg)
        return lambda s: k * float(smooth_ramp(s))
    raise ConfigError(f"unknown curvature preset {kind!r}")


# ------------------------------------------------------------- config parsing


def _require(d, key, where):
    if key not in d:
        raise ConfigError(f"missing {key!r} in {where}")
    return d[key]


def _pair(v, where):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(f"{where} must be a [lo, hi] pair")
    lo, hi = float(v[0]), float(v[1])
    if not lo < hi:
        raise ConfigError(f"{where} must be a nonempty interval")
    return lo, hi


def parse_config(doc):
    """Validate a config document and fill defaults; returns the normalized copy."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(doc)
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg.get('version')!r}")
    cons = _require(cfg, "construction", "config")
    if not isinstance(cons, dict) or cons.get("type") not in CONSTRUCTIONS:
        raise ConfigError(f"construction type must be one of {', '.join(CONSTRUCTIONS)}")
    verify = cfg.setdefault("verify", [])
    unknown = [v for v in verify if v not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s): {', '.join(map(str, unknown))}")
    grid = cfg.setdefault("grid", {})
    res = grid.setdefault("resolution", 5)
    res_list = res if isinstance(res, list) else [res]
    if any((not isinstance(r, int)) or r < 2 for r in res_list):
        raise ConfigError("grid resolutions must be integers >= 2")
    grid.setdefault("margin", 0.1)
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(cfg.get("tolerances", {}))
    bad = [k for k in tol if k not in DEFAULT_TOLERANCES]
    if bad:
        raise ConfigError(f"unknown tolerance(s): {', '.join(bad)}")
    cfg["tolerances"] = {k: float(v) for k, v in tol.items()}
    cfg.setdefault("backend", "dual")
    if cfg["backend"] not in ("dual", "fd", "finite_diff"):
        raise ConfigError("backend must be 'dual' or 'fd'")
    cfg.setdefault("output", {})
    mesh = cfg["output"].get("mesh")
    if mesh is not None:
        if isinstance(mesh, str):
            mesh = {"path": mesh}
            cfg["output"]["mesh"] = mesh
        mres = mesh.setdefault("resolution", [16, 16])
        if any((not isinstance(r, int)) or r < 2 for r in mres):
            raise ConfigError("mesh resolutions must be integers >= 2")
    expect = cfg.get("expect")
    if expect is not None:
        if expect.get("case") not in ("CASE_I", "CASE_II", "CASE_III"):
            raise ConfigError("expect.case must be CASE_I, CASE_II or CASE_III")
        expect.setdefault("min_fraction", 1.0)
    return cfg


# ------------------------------------------------------------------ builders


def _fiber(desc, m):
    kind = _require(desc, "type", "fiber")
    if kind == "sphere":
        r = float(desc.get("r", 0.5))
        box = desc.get("box", [[-0.6, 0.6], [-0.6, 0.6]])
        return sphere_profile(r, desc.get("center", [0.0, 0.0, 0.0]), box)
    if kind == "circle":
        ar = desc.get("angle_range")
        return circle_profile(float(desc.get("r", 0.5)), desc.get("center", [0.0, 0.0]),
                              None if ar is None else _pair(ar, "fiber.angle_range"))
    if kind == "paraboloid":
        # y = offset + (c |p|^2, p) touching y_1 = offset_1 at p = 0
        c = float(desc.get("c", 0.5))
        off = np.asarray(desc.get("offset", [0.0] * m), dtype=float)
        half = float(desc.get("half_width", 0.3))
        k = m - 1
        return SmoothMap(lambda p: off + np.concatenate([[c * (p @ p)], p]), k, m,
                         [-half] * k, [half] * k, name="paraboloid fiber")
    if kind == "hyperplane":
        off = np.asarray(desc.get("offset", [0.0] * m), dtype=float)
        half = float(desc.get("half_width", 0.5))
        k = m - 1
        return SmoothMap(lambda p: off + np.concatenate([[0.0 * p[0]], p]), k, m,
                         [-half] * k, [half] * k, name="hyperplane fiber")
    if kind == "vertical_line":
        x = float(desc.get("x", 0.0))
        return SmoothMap(lambda p: np.array([x + 0.0 * p[0], p[0]]), 1, 2,
                         [desc.get("lo", -1.0)], [desc.get("hi", 1.0)], name="vertical line")
    raise ConfigError(f"unknown fiber type {kind!r}")


def _partial_tube(c):
    base = _require(c, "base", "partial_tube")
    kind = _require(base, "type", "partial_tube.base")
    step = float(base.get("step", 1e-3))
    if kind == "line":
        N = int(base.get("dim", 4))
        s_range = _pair(base.get("s_range", [0.0, 1.0]), "base.s_range")
        gamma = line_curve(np.zeros(N), np.eye(N)[0], s_range)
        sections = np.eye(N)[:, 1:]
    elif kind == "circle":
        N = int(base.get("dim", 4))
        R = float(base.get("radius", 1.0))
        s_range = base.get("s_range")
        gamma = circle_curve(R, N, None if s_range is None else _pair(s_range, "base.s_range"),
                             periodic=s_range is None)
        s_range = (gamma.lo, gamma.hi)
        sections = np.zeros((N, N - 1))
        sections[0, 0] = 1.0
        for j in range(1, N - 1):
            sections[j + 1, j] = 1.0
    elif kind == "frenet":
        kappas = [curvature_function(k) for k in _require(base, "kappas", "base")]
        N = len(kappas) + 1
        s_range = _pair(base.get("s_range", [0.0, 1.0]), "base.s_range")
        gamma = curve_from_curvatures(kappas, np.eye(N), np.zeros(N), s_range, step)
        sections = gamma.frames[0][1:].T
    else:
        raise ConfigError(f"unknown base curve type {kind!r}")
    frame = parallel_normal_frame(gamma, sections, s_range, step,
                                  period=gamma.period)
    f0 = _fiber(_require(c, "fiber", "partial_tube"), N - 1)
    spec = PartialTubeSpec(gamma, frame, f0,
                           require_substantial=bool(c.get("require_substantial", False)))
    return build_partial_tube(spec)


def _surface(c):
    name = c.get("surface", "helicoidal")
    if name == "helicoidal":
        kw = {}
        if "a_range" in c:
            kw["a_range"] = _pair(c["a_range"], "a_range")
        if "b_range" in c:
            kw["b_range"] = _pair(c["b_range"], "b_range")
        return helicoidal_surface(**kw)
    if name == "quartic_graph":
        return graph_geodesic_surface(quartic_graph)
    if name == "plane":
        g = ImmersionField(SmoothMap(lambda x: np.array([x[0], x[1], 0.0 * x[0]]), 2, 3,
                                     [-1.0, -1.0], [1.0, 1.0], name="plane"))
        return g, SmoothMap.constant([1.0, 0.0], 2, [-1.0, -1.0], [1.0, 1.0])
    if name == "great_sphere":
        g = ImmersionField(SmoothMap(
            lambda x: np.array([np.cos(x[0]) * np.cos(x[1]), np.cos(x[0]) * np.sin(x[1]),
                                np.sin(x[0]), 0.0 * x[0]]),
            2, 4, [-0.5, -0.5], [0.5, 0.5], name="great sphere"))
        return g, SmoothMap.constant([1.0, 0.0], 2, [-0.5, -0.5], [0.5, 0.5])
    if name == "clifford_torus":
        return clifford_torus(tuple(c.get("direction", (1.0, 2.0))))
    raise ConfigError(f"unknown surface {name!r}")


def build(cfg, backend):
    """Construct (immersion, distribution or None, extra) from a parsed config."""
    c = cfg["construction"]
    kind = c["type"]
    extra = {}
    if kind == "partial_tube":
        f, D = _partial_tube(c)
    elif kind == "rotation":
        profile = _fiber(_require(c, "profile", "rotation"), None)
        f, D = build_rotation_hypersurface(profile, float(_require(c, "radius", "rotation")),
                                           step=float(c.get("step", 1e-3)))
    elif kind == "ruled_example":
        n = int(c.get("n", 3))
        kappas = [curvature_function(k) for k in _require(c, "kappas", "ruled_example")]
        f, D = build_ruled_example(kappas, n, _pair(c.get("s_range", [0.2, 1.0]), "s_range"),
                                   _pair(c.get("t_range", [-0.3, 0.3]), "t_range"),
                                   step=float(c.get("step", 1e-3)))
    elif kind in ("surface_like_cylindrical", "surface_like_conical"):
        g, D0 = _surface(c)
        f, D = build_surface_like(g, kind.rsplit("_", 1)[1], int(c.get("n", 3)), D0,
                                  backend=backend)
    else:  # flat_envelope
        base_cfg = dict(c.get("base", {}))
        g, D0 = _surface(base_cfg)
        base_kind = base_cfg.get("kind", "cylindrical")
        if base_kind not in ("cylindrical", "conical"):
            raise ConfigError("envelope base kind must be cylindrical or conical")
        fb, Db = build_surface_like(g, base_kind, int(base_cfg.get("n", 3)), D0,
                                    backend=backend)
        frame = adapted_frame(fb, Db, fb.map.center, [], backend=backend, samples=False)
        spec = EnvelopeLeafSpec(fb, frame, int(c.get("leaf_axis", 1)),
                                float(c.get("t", float(fb.map.center[1]))),
                                _pair(c.get("s_range", [-0.05, 0.05]), "s_range"))
        f = build_flat_envelope(spec)
        D = None
        extra = {"base": fb, "frame": frame}
    return f, D, extra


# -------------------------------------------------------------------- suites


def _grid(f, cfg):
    res = cfg["grid"]["resolution"]
    res = res if isinstance(res, list) else [res] * f.dim
    if len(res) != f.dim:
        raise ConfigError(f"grid resolution needs {f.dim} entries")
    margin = float(cfg["grid"]["margin"])
    span = f.hi - f.lo
    return sample_grid(f.lo + margin * span, f.hi - margin * span, res)


def _label(names):
    return "+".join(names)


def run_suites(f, D, extra, cfg, backend):
    """Evaluate the requested suites at every grid point; returns (records, summary)."""
    tol = cfg["tolerances"]
    suites = list(cfg["verify"])
    needs_D = {"classify", "totally_geodesic", "curvature_invariant", "residuals_7_11"}
    if D is None and needs_D & set(suites):
        raise ConfigError("this construction has no distribution; "
                          "use envelope_checks only")
    if "envelope_checks" in suites and "frame" not in extra:
        raise ConfigError("envelope_checks needs a flat_envelope construction")
    if "partial_tube_eq3" in suites and f.tags.get("kind") not in ("partial_tube", "rotation"):
        raise ConfigError("partial_tube_eq3 needs a partial_tube or rotation construction")
    grid = _grid(f, cfg)
    frame = None
    if "residuals_7_11" in suites:
        frame = adapted_frame(f, D, f.map.center, [], backend=backend, samples=False)
    records = []
    worst = {s: 0.0 for s in suites}
    hist = Counter()
    for x in grid:
        rec = {"x": [float(v) for v in x], "residuals": {}}
        if "classify" in suites:
            pc = classify_point(f, D, x, tol["classify"], backend, tol["predicate"])
            rec["flags"] = pc.names
            rec["class_residuals"] = {k: float(v) for k, v in pc.residuals.items()}
            hist[_label(pc.names)] += 1
        if "totally_geodesic" in suites:
            _, r = is_totally_geodesic(f, D, x, tol["predicate"], backend)
            rec["residuals"]["totally_geodesic"] = r
        if "curvature_invariant" in suites:
            _, r = is_curvature_invariant(f, D, x, tol["predicate"], backend)
            rec["residuals"]["curvature_invariant"] = r
        if "partial_tube_eq3" in suites:
            jet = geometry_jet(f, x, backend)
            r = float(np.max(np.abs(jet.h[:-1, -1]))) / (1.0 + jet.A_norm())
            rec["residuals"]["partial_tube_eq3"] = r
        if "residuals_7_11" in suites:
            rs = residual_suite(f, frame, x)
            rec["residual_suite"] = rs
            rec["residuals"]["residuals_7_11"] = max(rs.values())
        if "envelope_checks" in suites:
            F, fb = f, extra["base"]
            w, s = x[:-1], float(x[-1])
            chk = envelope_checks(F, fb, extra["frame"], w, s)
            chk["flatness"] = envelope_flatness(F, x)
            chk["tangency"] = envelope_tangency(F, fb, w)
            rec["envelope"] = chk
            rec["residuals"]["envelope_checks"] = max(
                chk["flatness"] / tol["flatness"], chk["tangency"] / tol["tangency"],
                chk["normal_tangency"] / tol["tangency"], chk["nullity_push"] / tol["tangency"])
        for k, v in rec["residuals"].items():
            worst[k] = max(worst[k], float(v))
        records.append(rec)
    passed = {}
    limits = {"totally_geodesic": tol["predicate"], "curvature_invariant": tol["predicate"],
              "partial_tube_eq3": tol["tube_identity"], "residuals_7_11": tol["residual"],
              "envelope_checks": 1.0}
    for s in suites:
        if s == "classify":
            ok = "AMBIGUOUS" not in hist
            exp = cfg.get("expect")
            if exp is not None:
                hits = sum(v for k, v in hist.items() if exp["case"] in k.split("+"))
                ok = ok and hits >= exp["min_fraction"] * len(grid)
            passed[s] = bool(ok)
        else:
            passed[s] = worst[s] <= limits[s]
    summary = {
        "grid_size": len(grid),
        "histogram": dict(sorted(hist.items())),
        "max_residual": {k: v for k, v in worst.items() if k != "classify"},
        "pass": passed,
    }
    return records, summary


# ---------------------------------------------------------------- mesh export


def export_mesh(immersion, resolution, path, projection=None, chart_axes=(0, 1),
                fixed=None, header=""):
    """Write a triangulated OBJ mesh of a two-parameter slice of the chart.

    The grid varies ``chart_axes`` (vertices in row-major order) and holds
    the remaining chart coordinates at ``fixed`` (default: chart center).
    Periodic axes are sampled without the duplicated endpoint and wrapped.
    Ambient dimension above 3 needs ``projection``: three ambient axes.
    Returns (vertex count, triangle count).
    """
    f = immersion
    N = f.ambient_dim
    if N > 3 and projection is None:
        raise ConfigError("ambient dimension > 3 needs a projection (three axes)")
    axes = list(projection) if projection is not None else list(range(N))
    if len(axes) != 3 or any(not 0 <= a < N for a in axes):
        raise ConfigError("projection must name three ambient axes")
    if f.dim < 2:
        raise ConfigError("mesh export needs a chart of dimension >= 2")
    a0, a1 = chart_axes
    base = f.map.center.copy() if fixed is None else np.asarray(fixed, dtype=float)
    per = f.map.periodic or (None,) * f.dim
    wraps = []
    samples = []
    for a, r in zip((a0, a1), resolution):
        lo, hi = f.lo[a], f.hi[a]
        if per[a] is not None and abs((hi - lo) - per[a]) < 1e-9:
            samples.append(lo + (hi - lo) * np.arange(r) / r)
            wraps.append(True)
        else:
            span = hi - lo
            samples.append(np.linspace(lo + 1e-9 * span, hi - 1e-9 * span, r))
            wraps.append(False)
    r0, r1 = len(samples[0]), len(samples[1])
    verts = []
    for u in samples[0]:
        for v in samples[1]:
            x = base.copy()
            x[a0], x[a1] = u, v
            verts.append(f(x)[axes])
    faces = []
    n0 = r0 if wraps[0] else r0 - 1
    n1 = r1 if wraps[1] else r1 - 1
    for i in range(n0):
        for j in range(n1):
            i2, j2 = (i + 1) % r0, (j + 1) % r1
            a, b = i * r1 + j, i2 * r1 + j
            c, d = i2 * r1 + j2, i * r1 + j2
            faces.append((a, b, c))
            faces.append((a, c, d))
    lines = [f"# geofol mesh {header}".rstrip()]
    lines += [f"v {p[0]:.12g} {p[1]:.12g} {p[2]:.12g}" for p in verts]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    _atomic_write(path, "\n".join(lines) + "\n")
    return len(verts), len(faces)


# --------------------------------------------------------------------- run


def _atomic_write(path, text):
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".geofol-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(report):
    return json.dumps(report, sort_keys=True, indent=1, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def run(config_path, mesh=None, backend=None, report=None):
    """Run a config file end to end; returns the process exit code."""
    t0 = time.perf_counter()
    out = {"schema": REPORT_SCHEMA}
    report_path = report
    try:
        with open(config_path) as fh:
            raw = fh.read()
        digest = hashlib.sha256(raw.encode()).hexdigest()
        out["config_sha256"] = digest
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if report_path is None and isinstance(doc, dict):
            report_path = doc.get("output", {}).get("report")
        cfg = parse_config(doc)
        if backend is not None:
            cfg["backend"] = backend
        if cfg["backend"] not in ("dual", "fd", "finite_diff"):
            raise ConfigError("backend must be 'dual' or 'fd'")
        if mesh is not None:
            cfg["output"]["mesh"] = dict(cfg["output"].get("mesh") or {}, path=mesh)
            cfg["output"]["mesh"].setdefault("resolution", [16, 16])
        out["config"] = cfg
        be = cfg["backend"]
        f, D, extra = build(cfg, be)
        records, summary = run_suites(f, D, extra, cfg, be)
        out["points"] = records
        out["summary"] = summary
        mcfg = cfg["output"].get("mesh")
        if mcfg:
            mcfg.setdefault("path", os.path.splitext(config_path)[0] + ".obj")
            nv, nf = export_mesh(f, mcfg["resolution"], mcfg["path"], mcfg.get("projection"),
                                 tuple(mcfg.get("chart_axes", (0, 1))), mcfg.get("fixed"),
                                 header=f"config-sha256 {digest}")
            out["mesh"] = {"path": mcfg["path"], "vertices": nv, "triangles": nf}
        code = 0 if all(summary["pass"].values()) else 1
    except (GeofolError, ValueError, OSError, KeyError, TypeError) as exc:
        log.error("%s", exc)
        out["error"] = str(exc)
        code = 2
    out["exit_code"] = code
    out["provenance"] = {"toolkit": "geofol", "version": __version__,
                         "backend": out.get("config", {}).get("backend", backend),
                         "wall_time": time.perf_counter() - t0}
    if report_path is None:
        report_path = os.path.splitext(config_path)[0] + ".report.json"
    try:
        _atomic_write(report_path, _dump(out))
        print(report_path)
    except OSError as exc:
        log.error("could not write report: %s", exc)
        code = 2
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(prog="geofol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="build and verify a configured hypersurface")
    p.add_argument("config")
    p.add_argument("--mesh", help="write an OBJ mesh to this path")
    p.add_argument("--backend", choices=["dual", "fd"], help="differentiation backend")
    p.add_argument("--report", help="report path (default: next to the config)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="geofol: %(message)s",
                        stream=sys.stderr)
    return run(args.config, args.mesh, args.backend, args.report)


if __name__ == "__main__":
    sys.exit(main())
