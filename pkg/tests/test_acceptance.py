"""Acceptance criteria, each at its stated tolerance and under both backends.

Every criterion prints one PASS/FAIL line (collected and shown in the
terminal summary).  Measurements are cached per backend so the
cross-backend criterion compares the very numbers the others checked.
"""

import functools
import math
import time

import numpy as np
import pytest

from geofol.classify import (Case, ExplicitFrameField, adapted_frame, classify_point,
                             residual_suite)
from geofol.constructions import (EnvelopeLeafSpec, PartialTubeSpec, build_flat_envelope,
                                  build_partial_tube, build_rotation_hypersurface,
                                  build_ruled_example, build_surface_like, circle_profile,
                                  clifford_torus,
                                  envelope_checks, envelope_flatness, envelope_tangency,
                                  graph_geodesic_surface, helicoidal_surface, quartic_graph,
                                  sample_grid, smooth_ramp, sphere_profile)
from geofol.curves import (circle_curve, curve_from_curvatures, frenet_apparatus,
                           line_curve, parallel_normal_frame)
from geofol.errors import OmegaViolationError
from geofol.geometry import (gauss_curvature_tensor, geometry_jet, intrinsic_curvature,
                             principal_curvatures)
from geofol.numjet import SmoothMap

from conftest import BACKENDS, cylinder_chart, generic_graph_chart, plane_chart, sphere_chart
from oracles import brute_force_cases, helix_curvatures, torus_curvatures

RESULTS = []


def report(name, backend, ok, detail):
    tag = "PASS" if ok else "FAIL"
    RESULTS.append(f"[{tag}] {name} ({backend}): {detail}")
    assert ok, detail


# ------------------------------------------------------------------ builders


def _tube(kind):
    t0 = time.perf_counter()
    fiber = sphere_profile(0.3, (0.2, 0.0, 0.0))
    if kind == "line":
        gamma = line_curve(np.zeros(4), np.eye(4)[0], (0.0, 2.0))
        sections = np.eye(4)[:, 1:]
    elif kind == "circle":
        gamma = circle_curve(1.0, 4)
        sections = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], float).T
    else:
        gamma = curve_from_curvatures([lambda s: 1.0 + 0.3 * s, lambda s: 0.5 + 0.2 * math.sin(s),
                                       0.4], np.eye(4), np.zeros(4), (0.0, 2.0))
        sections = gamma.frames[0][1:].T
    phi = parallel_normal_frame(gamma, sections)
    f, D = build_partial_tube(PartialTubeSpec(gamma, phi, fiber))
    return f, D, time.perf_counter() - t0


TUBES = ("line", "circle", "frenet")
tube = functools.lru_cache(maxsize=None)(_tube)


@functools.lru_cache(maxsize=None)
def torus():
    return build_rotation_hypersurface(circle_profile(0.5), 2.0)


@functools.lru_cache(maxsize=None)
def ruled():
    return build_ruled_example([1.0, smooth_ramp, smooth_ramp], 3, (0.2, 1.0), (-0.3, 0.3))


@functools.lru_cache(maxsize=None)
def graph_like():
    g, D0 = graph_geodesic_surface(quartic_graph)
    return build_surface_like(g, "cylindrical", 3, D0)


@functools.lru_cache(maxsize=None)
def clifford_cone():
    g, D0 = clifford_torus()
    return build_surface_like(g, "conical", 3, D0)


@functools.lru_cache(maxsize=None)
def helicoidal_like():
    g, D0 = helicoidal_surface()
    return build_surface_like(g, "cylindrical", 3, D0)


def interior(f, shape, frac=0.1):
    span = f.hi - f.lo
    return sample_grid(f.lo + frac * span, f.hi - frac * span, shape)


def rel_gap(a, b):
    """Disagreement relative to the magnitude, floored at 1 for vanishing quantities."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0),
                        initial=0.0))


# -------------------------------------------------------------- measurements


@functools.lru_cache(maxsize=None)
def measure_c1(backend):
    out = {}
    for kind in TUBES:
        f, D, build_time = tube(kind)
        t0 = time.perf_counter()
        worst, kappas = 0.0, []
        for a, s in sample_grid([f.lo[0], f.lo[2]], [f.hi[0], f.hi[2]], (20, 20), 0.01):
            jet = geometry_jet(f, [a, 0.1, s], backend)
            worst = max(worst, float(np.max(np.abs(jet.h[:-1, -1]))) / (1.0 + jet.A_norm()))
            kappas.append(np.sort(principal_curvatures(jet)))
        out[kind] = {"tube_identity": worst, "time": build_time + time.perf_counter() - t0,
                     "kappas": np.array(kappas)}
    return out


@functools.lru_cache(maxsize=None)
def measure_c2(backend):
    t0 = time.perf_counter()
    charts = {"ruled": (ruled(), Case.CASE_I, (4, 4, 4))}
    for kind in TUBES:
        f, D, _ = tube(kind)
        charts[f"tube-{kind}"] = ((f, D), Case.CASE_II, (4, 4, 4))
    charts["torus"] = (torus(), Case.CASE_II, (8, 8))
    charts["graph"] = (graph_like(), Case.CASE_III, (5, 5, 2))
    out = {}
    for name, ((f, D), want, shape) in charts.items():
        flags, hits, contradictory, oracle_bad = [], 0, 0, 0
        grid = interior(f, shape)
        for x in grid:
            pc = classify_point(f, D, x, backend=backend)
            flags.append(pc.names)
            if want in pc:
                hits += 1
            elif pc.flags != frozenset({Case.AMBIGUOUS}):
                contradictory += 1
            brute = brute_force_cases(f, D.matrix(x), x)
            if brute & {"i", "ii"}:
                brute.discard("iii")
            mine = {c.value for c in pc.flags} - {"FLAT_POINT", "AMBIGUOUS"}
            names = {"CASE_I": "i", "CASE_II": "ii", "CASE_III": "iii"}
            if {names[c] for c in mine} != brute:
                oracle_bad += 1
        out[name] = {"fraction": hits / len(grid), "contradictory": contradictory,
                     "oracle_disagreements": oracle_bad, "flags": flags}
    out["time"] = time.perf_counter() - t0
    return out


def _frame_and_suite(f, D, grid, backend):
    fr = adapted_frame(f, D, f.map.center, grid, backend)
    shape_res = [s.residuals["shape"] for s in fr.samples]
    suites = [max(residual_suite(f, fr, s.point.x).values()) for s in fr.samples]
    scalars = [[s.point.beta, s.point.mu, s.point.rho] for s in fr.samples]
    return shape_res, suites, scalars


@functools.lru_cache(maxsize=None)
def measure_c3(backend):
    # the cylindrical chart has coefficients constant along the nullity, the
    # cone has rho and mu varying like 1/t along it
    shape_res, suites, scalars = [], [], []
    for (f, D), shape in ((helicoidal_like(), (3, 3, 2)), (clifford_cone(), (3, 3, 3))):
        a, b, c = _frame_and_suite(f, D, interior(f, shape, 0.15), backend)
        shape_res += a
        suites += b
        scalars += c
    # planted violation on a flat chart: T(rho) = 1 but rho <nabla_X X, T> = 0
    flat = plane_chart(3)
    e = np.eye(3)
    planted = ExplicitFrameField(flat, lambda x: e[0], lambda x: e[1], lambda x: e[2],
                                 lambda x: 0.0, lambda x: 0.0, lambda x: 1.0 + x[2], backend)
    r7a = residual_suite(flat, planted, [0.1, 0.2, 0.3])["r7a"]
    n = len(shape_res)
    return {"shape_fraction": sum(r <= 1e-5 for r in shape_res) / n,
            "suite_fraction": sum(r <= 5e-3 for r in suites) / n,
            "worst_suite": max(suites), "planted_r7a": r7a, "points": n,
            "scalars": np.array(scalars)}


LEAVES = (-0.15, 0.0, 0.15)


def _envelope_grid(f, frame, t, u_range, fixed):
    """Residuals of one leaf on a 20 x 10 grid over (first leaf coordinate, s)."""
    F = build_flat_envelope(EnvelopeLeafSpec(f, frame, 1, t))
    flat = tang = eq = 0.0
    values = []
    for a in np.linspace(u_range[0], u_range[1], 20):
        w = np.array([a, fixed])
        tang = max(tang, envelope_tangency(F, f, w))
        for s in np.linspace(-0.04, 0.04, 10):
            p = np.array([a, fixed, s])
            flat = max(flat, envelope_flatness(F, p))
            chk = envelope_checks(F, f, frame, w, s)
            eq = max(eq, chk["normal_tangency"], chk["nullity_push"])
            values.append(F(p))
    return {"flatness": flat, "tangency": tang, "identities": eq, "values": np.array(values)}


@functools.lru_cache(maxsize=None)
def measure_c4(backend):
    out = {}
    # helicoidal chart: leaf coordinates (a, u); cone: (u, t) with Z varying along t
    for name, chart, u_range, fixed in (("helicoidal", helicoidal_like(), (0.25, 0.75), 0.0),
                                         ("cone", clifford_cone(), (-0.2, 0.2), 1.0)):
        f, D = chart
        frame = adapted_frame(f, D, f.map.center, [], backend, samples=False)
        for t in LEAVES:
            out[(name, t)] = _envelope_grid(f, frame, t, u_range, fixed)
    return out


@functools.lru_cache(maxsize=None)
def measure_c5(backend):
    R, r = 2.0, 0.5
    tf, _ = torus()
    torus_err, torus_vals = 0.0, []
    for theta in np.linspace(0.0, 2 * math.pi, 9)[:-1]:
        got = np.sort(np.abs(principal_curvatures(geometry_jet(tf, [theta, 1.0], backend))))
        want = np.sort(np.abs(torus_curvatures(R, r, theta)))
        torus_err = max(torus_err, float(np.max(np.abs(got - want))))
        torus_vals.append(got)
    helix_err, helix_vals = 0.0, []
    for a, b in ((1.0, 1.0), (2.0, 0.5), (0.5, 1.5)):
        c = math.sqrt(a * a + b * b)
        hmap = SmoothMap(lambda x, a=a, b=b, c=c: np.array(
            [a * np.cos(x[0] / c), a * np.sin(x[0] / c), b * x[0] / c]), 1, 3, [-3.0], [3.0])
        for s in (-1.0, 0.4, 2.0):
            k = frenet_apparatus(hmap, s, backend).curvatures
            helix_err = max(helix_err, float(np.max(np.abs(k - helix_curvatures(a, b)))))
            helix_vals.append(k)
    sphere_err, sphere_vals = 0.0, []
    sf = sphere_chart()
    for x in sample_grid([-0.4, -0.4], [0.4, 0.4], (3, 3)):
        k = principal_curvatures(geometry_jet(sf, x, backend))
        sphere_err = max(sphere_err, float(np.max(np.abs(np.abs(k) - 1.0))))
        sphere_vals.append(k)
    return {"torus": torus_err, "helix": helix_err, "sphere": sphere_err,
            "values": np.concatenate([np.ravel(torus_vals), np.ravel(helix_vals),
                                      np.ravel(sphere_vals)])}


# ------------------------------------------------------------------ criteria


@pytest.mark.parametrize("backend", BACKENDS)
def test_c1_partial_tube_identity(backend):
    m = measure_c1(backend)
    ok = all(v["tube_identity"] <= 1e-6 and v["time"] <= 10.0 for v in m.values())
    detail = "; ".join(f"{k}: max|h(X,d_s)|/(1+|A|)={v['tube_identity']:.1e} in {v['time']:.1f}s"
                       for k, v in m.items())
    report("C1 partial-tube identity, 20x20 grids", backend, ok, detail)


@pytest.mark.parametrize("backend", BACKENDS)
def test_c2_trichotomy(backend):
    m = measure_c2(backend)
    charts = {k: v for k, v in m.items() if k != "time"}
    ok = m["time"] <= 30.0
    for name, v in charts.items():
        need = 0.95 if name == "graph" else 1.0
        ok = ok and v["fraction"] >= need and v["contradictory"] == 0
        ok = ok and v["oracle_disagreements"] == 0
    detail = ", ".join(f"{k} {100 * v['fraction']:.0f}%" for k, v in charts.items())
    detail += f"; brute-force disagreements {sum(v['oracle_disagreements'] for v in charts.values())}"
    detail += f"; {m['time']:.1f}s"
    report("C2 trichotomy on corpora", backend, ok, detail)


@pytest.mark.parametrize("backend", BACKENDS)
def test_c3_frame_and_residual_suite(backend):
    m = measure_c3(backend)
    ok = m["shape_fraction"] >= 0.95 and m["suite_fraction"] >= 0.95 and m["planted_r7a"] >= 0.1
    detail = (f"{m['points']} points, shape ok at {100 * m['shape_fraction']:.0f}%, suite <= 5e-3 at "
              f"{100 * m['suite_fraction']:.0f}% (worst {m['worst_suite']:.1e}), "
              f"planted r7a={m['planted_r7a']:.2f}")
    report("C3 adapted frame and residual suite", backend, ok, detail)


@pytest.mark.parametrize("backend", BACKENDS)
def test_c4_envelope(backend):
    m = measure_c4(backend)
    ok = all(v["flatness"] <= 1e-4 and v["tangency"] <= 1e-5 and v["identities"] <= 1e-5
             for v in m.values())
    worst = {k: max(v[k] for v in m.values()) for k in ("flatness", "tangency", "identities")}
    detail = (f"{len(m)} leaves on two charts, 20x10 grids: flatness {worst['flatness']:.1e}, "
              f"tangency {worst['tangency']:.1e} rad, envelope identities {worst['identities']:.1e}")
    report("C4 flat envelope", backend, ok, detail)


@pytest.mark.parametrize("backend", BACKENDS)
def test_c5_closed_forms(backend):
    m = measure_c5(backend)
    ok = m["torus"] <= 1e-5 and m["helix"] <= 1e-6 and m["sphere"] <= 1e-8
    detail = f"torus {m['torus']:.1e}, helix {m['helix']:.1e}, sphere {m['sphere']:.1e}"
    report("C5 closed-form curvatures", backend, ok, detail)


def test_c6_cross_backend():
    a = {k: f("dual") for k, f in (("c1", measure_c1), ("c2", measure_c2), ("c3", measure_c3),
                                   ("c4", measure_c4), ("c5", measure_c5))}
    b = {k: f("fd") for k, f in (("c1", measure_c1), ("c2", measure_c2), ("c3", measure_c3),
                                 ("c4", measure_c4), ("c5", measure_c5))}
    gaps = {
        "tube curvatures": max(rel_gap(a["c1"][k]["kappas"], b["c1"][k]["kappas"]) for k in TUBES),
        "frame scalars": rel_gap(a["c3"]["scalars"], b["c3"]["scalars"]),
        "envelope points": max(rel_gap(a["c4"][k]["values"], b["c4"][k]["values"]) for k in a["c4"]),
        "closed forms": rel_gap(a["c5"]["values"], b["c5"]["values"]),
    }
    same_flags = all(a["c2"][k]["flags"] == b["c2"][k]["flags"] for k in a["c2"] if k != "time")
    ok = same_flags and max(gaps.values()) <= 1e-4
    detail = ", ".join(f"{k} {v:.1e}" for k, v in gaps.items())
    detail += f"; identical flags: {same_flags}"
    report("C6 cross-backend agreement", "dual vs fd", ok, detail)


@pytest.mark.parametrize("backend", BACKENDS)
def test_c7_gauss_consistency(backend):
    worst = {}
    for name, chart, x in (("sphere", sphere_chart, [0.2, -0.1]),
                           ("cylinder", cylinder_chart, [0.3, 0.4]),
                           ("graph", generic_graph_chart, [0.1, 0.2, -0.15])):
        f = chart()
        intrinsic = intrinsic_curvature(f, x, backend)
        extrinsic = gauss_curvature_tensor(geometry_jet(f, x, backend))
        scale = max(1.0, float(np.max(np.abs(extrinsic))))
        worst[name] = float(np.max(np.abs(intrinsic - extrinsic))) / scale
    ok = max(worst.values()) <= 1e-3
    report("C7 Gauss-equation consistency", backend, ok,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


@pytest.mark.parametrize("backend", BACKENDS)
def test_c8_omega(backend):
    R = 1.0
    gamma = circle_curve(R, 4)
    phi = parallel_normal_frame(gamma, np.array([[1, 0, 0, 0], [0, 0, 1, 0],
                                                 [0, 0, 0, 1]], float).T)

    def paraboloid(offset):
        off = np.array([offset, 0.0, 0.0])
        return SmoothMap(lambda p: off + np.array([0.5 * (p[0] ** 2 + p[1] ** 2), p[0], p[1]]),
                         2, 3, [-0.3, -0.3], [0.3, 0.3])

    rejected = False
    try:
        build_partial_tube(PartialTubeSpec(gamma, phi, paraboloid(-R)))
    except OmegaViolationError as exc:
        rejected = exc.margin == 0.0 or abs(exc.margin) <= 1e-12
    f, D = build_partial_tube(PartialTubeSpec(gamma, phi, paraboloid(-R + 0.1)))
    margin = f.tags["omega_margin"]
    # the accepted tube is a genuine immersion on its chart
    geometry_jet(f, [0.0, 0.0, 1.0], backend)
    ok = rejected and margin >= 0.09
    report("C8 admissibility", backend, ok,
           f"touching fiber rejected: {rejected}; offset fiber margin {margin:.3f}")
