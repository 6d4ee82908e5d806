"""Builders for hypersurfaces carrying a codimension-one totally geodesic
distribution: partial tubes (and rotation hypersurfaces), the ruled
hypersurface over a curve with prescribed curvatures, cylindrical and
conical surface-like hypersurfaces, and flat envelopes built over the leaves
of a case-(iii) distribution.

Every builder returns an ImmersionField together with its distinguished
DistributionField.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .classify import AdaptedFrame, FrameField, totally_geodesic_residual
from .curves import (Curve, ParallelNormalFrame, circle_curve, curve_from_curvatures,
                     omega_margin, parallel_normal_frame)
from .errors import (ChartRestrictionError, DomainError, GeofolError,
                     ImmersionDegeneracyError, InputError, NotCaseIIIError,
                     OmegaViolationError, TubeWidthError)
from .geometry import (DistributionField, ImmersionField, covariant_derivative,
                       geometry_jet)
from .numjet import HyperDual, SmoothMap, eval_jet, value_of

GEODESIC_TOL = 1e-5
SUBSTANTIAL_TOL = 1e-8


def sample_grid(lo, hi, shape, margin=0.0):
    """Points of a tensor grid over the box shrunk by ``margin`` (row-major)."""
    lo = np.asarray(lo, dtype=float) + margin
    hi = np.asarray(hi, dtype=float) - margin
    axes = [np.linspace(a, b, k) for a, b, k in zip(lo, hi, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _interior_grid(smap, res, margin_frac=0.1):
    span = smap.hi - smap.lo
    lo = smap.lo + margin_frac * span
    hi = smap.hi - margin_frac * span
    return sample_grid(lo, hi, [res] * smap.domain_dim)


def verify_totally_geodesic(f, D, grid, backend="dual", tol=GEODESIC_TOL):
    """Worst total-geodesy residual over grid points; raises InputError above tol."""
    worst = 0.0
    for p in grid:
        worst = max(worst, totally_geodesic_residual(f, D, p, backend))
    if worst > tol:
        raise InputError(f"distribution is not totally geodesic (residual {worst:.2e})")
    return worst


# ------------------------------------------------------------ partial tubes


@dataclass(frozen=True, eq=False)
class PartialTubeSpec:
    """Base curve, parallel normal frame with m = n sections and fiber map.

    ``f0`` maps an (n-1)-dimensional chart into R^m.
    """

    gamma: Curve
    phi: ParallelNormalFrame
    f0: SmoothMap
    fiber_resolution: int = 9
    require_substantial: bool = True


def _fiber_samples(f0, res):
    pts = sample_grid(f0.lo, f0.hi, [res] * f0.domain_dim)
    center = f0.center[None, :]
    return np.vstack([center, pts])


def _is_substantial(values, m):
    centered = values - values.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s.size >= m and s[m - 1] > SUBSTANTIAL_TOL * max(s[0], 1e-300)


def build_partial_tube(spec):
    """f(p, s) = gamma(s) + phi_s(f0(p)) on the chart (p, s).

    Fiber points are sampled on a grid (plus the chart center) and checked
    against the admissibility margin of the frame; the worst margin is
    recorded in the returned field's tags.
    """
    gamma, phi, f0 = spec.gamma, spec.phi, spec.f0
    N = gamma.dim
    m = phi.m
    if N != m + 1:
        raise InputError(f"partial tubes need m = n normal sections (N = {N}, m = {m})")
    if f0.codomain_dim != m or f0.domain_dim != m - 1:
        raise InputError(f"fiber must map an {m - 1}-chart into R^{m}")
    if phi.curve is not gamma:
        raise InputError("normal frame was not built along the given curve")
    pts = _fiber_samples(f0, spec.fiber_resolution)
    values = np.array([f0(p) for p in pts])
    substantial = _is_substantial(values, m)
    if spec.require_substantial and not substantial:
        raise InputError("fiber immersion is not substantial in R^m")
    worst = math.inf
    for p, y in zip(pts, values):
        om = omega_margin(phi, y)
        if not om.admissible:
            raise OmegaViolationError(tuple(np.round(p, 6)), om.s_worst, om.worst)
        worst = min(worst, om.worst)

    def evaluate(x):
        p, s = x[:-1], x[-1]
        return gamma.point(s) + phi.phi(s) @ f0.evaluator(p)

    per = None
    if phi.period is not None or f0.periodic is not None:
        fp = f0.periodic or (None,) * f0.domain_dim
        per = tuple(fp) + (phi.period,)
    lo = np.concatenate([f0.lo, [phi.lo]])
    hi = np.concatenate([f0.hi, [phi.hi]])
    smap = SmoothMap(evaluate, m, N, lo, hi, traceable=f0.traceable, periodic=per,
                     name="partial tube")
    f = ImmersionField(smap, tags={"kind": "partial_tube", "omega_margin": worst,
                                   "substantial": bool(substantial)})
    D = DistributionField.coordinate(m, range(m - 1), lo, hi, name="fibers")
    return f, D


def build_rotation_hypersurface(profile, radius, step=1e-3, s_range=None):
    """Rotation hypersurface: partial tube over a circle of the given radius.

    ``profile`` maps an (n-1)-chart into R^n, whose first coordinate is the
    radial direction and the others are parallel to the axis.
    """
    n = profile.codomain_dim
    if profile.domain_dim != n - 1:
        raise InputError("profile must map an (n-1)-chart into R^n")
    R = float(radius)
    full = s_range is None
    circle = circle_curve(R, n + 1, s_range, axes=(0, 1), periodic=full)
    sections = np.zeros((n + 1, n))
    sections[0, 0] = 1.0
    for j in range(1, n):
        sections[j + 1, j] = 1.0
    lo, hi = (0.0, 2 * math.pi * R) if full else s_range
    frame = parallel_normal_frame(circle, sections, (lo, hi), step,
                                  period=2 * math.pi * R if full else None)
    spec = PartialTubeSpec(circle, frame, profile, require_substantial=False)
    f, D = build_partial_tube(spec)
    tags = dict(f.tags, kind="rotation", rotation=True, radius=R)
    return ImmersionField(f.map, f.orientation, tags), D


def circle_profile(r, center=(0.0, 0.0), angle_range=None):
    """Circle of radius r in R^2 as an (n-1 = 1)-chart profile."""
    c = np.asarray(center, dtype=float)
    if angle_range is None:
        angle_range = (0.0, 2 * math.pi)
    periodic = (2 * math.pi,) if angle_range[1] - angle_range[0] >= 2 * math.pi else None
    return SmoothMap(lambda x: c + r * np.array([np.cos(x[0]), np.sin(x[0])]),
                     1, 2, [angle_range[0]], [angle_range[1]], periodic=periodic,
                     name="circle profile")


def sphere_profile(r, center, box=((-0.6, 0.6), (-0.6, 0.6))):
    """Spherical-coordinate chart of the round 2-sphere of radius r in R^3.

    Coordinates (a, b) map to center + r (cos a cos b, cos a sin b, sin a);
    the chart center (0, 0) is the point center + (r, 0, 0).
    """
    c = np.asarray(center, dtype=float)

    def evaluate(x):
        a, b = x[0], x[1]
        return c + r * np.array([np.cos(a) * np.cos(b), np.cos(a) * np.sin(b), np.sin(a)])

    return SmoothMap(evaluate, 2, 3, [box[0][0], box[1][0]], [box[0][1], box[1][1]],
                     name="sphere profile")


# ------------------------------------------------------------- ruled example


def smooth_ramp(s):
    """s * exp(-1/s) for s > 0 and 0 otherwise (flat to all orders at 0)."""
    sv = value_of(s)
    if sv <= 0:
        return 0.0 * s
    return s * np.exp(-1.0 / s)


def build_ruled_example(kappas, n, s_range, t_range, step=1e-3, pad=0.05,
                        check_resolution=6, initial_frame=None, initial_point=None):
    """F(s, t) = c(s) + sum_j t_j e_{j+2}(s) over a curve c in R^{n+1}.

    ``kappas`` are the n curvature functions of c.  The curve is integrated
    over ``s_range`` padded by ``pad`` so that derivative stencils stay on
    the sampled curve.  Rulings span the coordinate fields d/dt_j.
    """
    if n < 2:
        raise InputError("ruled example needs n >= 2")
    if len(kappas) != n:
        raise InputError(f"expected {n} curvature functions, got {len(kappas)}")
    N = n + 1
    E0 = np.eye(N) if initial_frame is None else np.asarray(initial_frame, float)
    c0 = np.zeros(N) if initial_point is None else np.asarray(initial_point, float)
    s_lo, s_hi = float(s_range[0]), float(s_range[1])
    curve = curve_from_curvatures(kappas, E0, c0, (s_lo - pad, s_hi + pad), step)
    t_lo = np.broadcast_to(np.asarray(t_range[0], float), (n - 1,))
    t_hi = np.broadcast_to(np.asarray(t_range[1], float), (n - 1,))

    def evaluate(x):
        s, t = x[0], x[1:]
        E = curve.frame(s)
        return curve.point(s) + t @ E[2:]

    lo = np.concatenate([[s_lo], t_lo])
    hi = np.concatenate([[s_hi], t_hi])
    smap = SmoothMap(evaluate, n, N, lo, hi, name="ruled example")
    bad = []
    for p in _interior_grid(smap, check_resolution, 0.01):
        J = eval_jet(smap, p, 1, "dual").first
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] < 1e-8 * sv[0]:
            bad.append(tuple(p))
    if bad:
        raise ChartRestrictionError(bad)
    f = ImmersionField(smap, tags={"kind": "ruled_example", "curve": curve})
    D = DistributionField.coordinate(n, range(1, n), lo, hi, name="rulings")
    return f, D


# --------------------------------------------------------- surface-like


def _as_immersion(g):
    return g if isinstance(g, ImmersionField) else ImmersionField(g)


def geodesic_residual(g, D0, x, backend="dual"):
    """Sine-type defect of nabla_{D0} D0 being parallel to D0 on the surface g."""
    jet = geometry_jet(g, x, backend)
    v = D0(x)
    nab = covariant_derivative(g, v, D0, x, backend, jet=jet)
    vv = jet.inner(v, v)
    perp = nab - jet.inner(nab, v) / vv * v
    return jet.norm(perp) / (1.0 + jet.norm(nab))


def build_surface_like(g, kind, n, D0, extra_range=(-1.0, 1.0), t_range=(0.5, 1.5),
                       check_resolution=5, backend="dual"):
    """Cylindrical g x id or conical C(g) x id hypersurface with D = D0 + flat part.

    cylindrical: g is a surface chart in R^3; chart (x, u) -> (g(x), u).
    conical: g maps into the unit sphere S^3 in R^4; chart (x, t, u) ->
    (t g(x), u).  D0 (a SmoothMap from g's chart to R^2) must be a geodesic
    direction field of g; this is verified on a grid.
    """
    g = _as_immersion(g)
    if g.dim != 2:
        raise InputError("surface-like builders need a two-dimensional chart")
    if D0.domain_dim != 2 or D0.codomain_dim != 2:
        raise InputError("D0 must be a vector field on the surface chart")
    grid = _interior_grid(g.map, check_resolution)
    worst = max(geodesic_residual(g, D0, p, backend) for p in grid)
    if worst > GEODESIC_TOL:
        raise InputError(f"D0 is not a geodesic field (worst residual {worst:.2e})")
    e_lo, e_hi = float(extra_range[0]), float(extra_range[1])
    if kind == "cylindrical":
        if g.ambient_dim != 3:
            raise InputError("cylindrical builder needs g in R^3")
        if n < 2:
            raise InputError("cylindrical surface-like needs n >= 2")
        k = n - 2

        def evaluate(x):
            return np.concatenate([g.map.evaluator(x[:2]), x[2:]])

        lo = np.concatenate([g.lo, np.full(k, e_lo)])
        hi = np.concatenate([g.hi, np.full(k, e_hi)])
        flat_axes = list(range(2, n))
    elif kind == "conical":
        if g.ambient_dim != 4:
            raise InputError("conical builder needs g in S^3 in R^4")
        if n < 3:
            raise InputError("conical surface-like needs n >= 3")
        if t_range[0] <= 0:
            raise InputError("cone parameter range must lie in (0, inf)")
        for p in grid:
            r = float(np.linalg.norm(g(p)))
            if abs(r - 1.0) > 1e-8:
                raise InputError(f"g is not spherical at {tuple(p)} (|g| = {r:.10f})")
        k = n - 3

        def evaluate(x):
            return np.concatenate([x[2] * g.map.evaluator(x[:2]), x[3:]])

        lo = np.concatenate([g.lo, [t_range[0]], np.full(k, e_lo)])
        hi = np.concatenate([g.hi, [t_range[1]], np.full(k, e_hi)])
        flat_axes = list(range(2, n))
    else:
        raise InputError(f"unknown surface-like kind {kind!r}")

    def d0_field(x):
        return np.concatenate([D0.evaluator(x[:2]), np.zeros(n - 2) * x[0]])

    D0n = SmoothMap(d0_field, n, n, lo, hi, traceable=D0.traceable, name="D0")
    smap = SmoothMap(evaluate, n, n + 1, lo, hi, traceable=g.map.traceable,
                     name=f"{kind} surface-like")
    f = ImmersionField(smap, tags={"kind": f"surface_like_{kind}",
                                   "geodesic_residual": worst})
    eye = np.eye(n)
    D = DistributionField.from_generators([D0n] + [eye[a] for a in flat_axes],
                                          n, lo, hi, name="D0 + flat")
    vgrid = _interior_grid(smap, 3)
    verify_totally_geodesic(f, D, vgrid, backend)
    return f, D


def helicoidal_surface(a_range=(0.2, 0.8), b_range=(-0.3, 0.3)):
    """Helicoidal surface with a geodesic coordinate foliation.

    g(a, b) = (r cos(a + b), r sin(a + b), z(a) + b) with r^2 = 1 + a^2 and
    z(a) = -a - a^3/3.  The coordinates are orthogonal and |g_a| depends on
    a only, so the a-curves are (reparametrized) geodesics; D0 = d/da.
    """
    def evaluate(x):
        a, b = x[0], x[1]
        r = (1.0 + a * a) ** 0.5
        return np.array([r * np.cos(a + b), r * np.sin(a + b), -a - a**3 / 3.0 + b])

    lo = [a_range[0], b_range[0]]
    hi = [a_range[1], b_range[1]]
    g = ImmersionField(SmoothMap(evaluate, 2, 3, lo, hi, name="helicoidal surface"))
    D0 = SmoothMap.constant([1.0, 0.0], 2, lo, hi, name="d/da")
    return g, D0


def graph_geodesic_surface(height, seed_direction=(1.0, 0.5), a_range=(-0.4, 0.4),
                           b_range=(-0.4, 0.4), steps=16):
    """Graph surface z = F(x, y) in geodesic coordinates.

    ``height`` returns (F, grad F, Hess F) at (x, y).  The point with chart
    coordinates (a, b) is reached by following the geodesic that starts at
    (0, b) with initial direction ``seed_direction`` for parameter time a,
    using ``steps`` RK4 steps of size a/steps.  The a-curves are geodesics,
    so D0 = d/da is a geodesic direction field.
    """
    d = np.asarray(seed_direction, dtype=float)

    def rhs(state):
        x, y, vx, vy = state
        _, grad, hess = height(x, y)
        v = (vx, vy)
        q = sum(hess[i][j] * v[i] * v[j] for i in range(2) for j in range(2))
        w = 1.0 + grad[0] * grad[0] + grad[1] * grad[1]
        return (vx, vy, -grad[0] * q / w, -grad[1] * q / w)

    def endpoint(a, b):
        state = (0.0 * b, b, d[0] + 0.0 * b, d[1] + 0.0 * b)
        h = a / steps
        for _ in range(steps):
            k1 = rhs(state)
            k2 = rhs(tuple(s + 0.5 * h * k for s, k in zip(state, k1)))
            k3 = rhs(tuple(s + 0.5 * h * k for s, k in zip(state, k2)))
            k4 = rhs(tuple(s + h * k for s, k in zip(state, k3)))
            state = tuple(s + h / 6.0 * (p + 2 * q + 2 * r + w)
                          for s, p, q, r, w in zip(state, k1, k2, k3, k4))
        return state[0], state[1]

    def evaluate(x):
        px, py = endpoint(x[0], x[1])
        F, _, _ = height(px, py)
        return np.array([px, py, F], dtype=object if isinstance(px, HyperDual)
                        or isinstance(py, HyperDual) else float)

    lo = [a_range[0], b_range[0]]
    hi = [a_range[1], b_range[1]]
    g = ImmersionField(SmoothMap(evaluate, 2, 3, lo, hi, name="graph geodesic chart"))
    D0 = SmoothMap.constant([1.0, 0.0], 2, lo, hi, name="d/da")
    return g, D0


def clifford_torus(direction=(1.0, 2.0), box=((-0.25, 0.25), (-0.5, 0.5))):
    """Clifford torus in S^3 with a geodesic coordinate field.

    T(a, b) = (cos a, sin a, cos b, sin b) / sqrt(2) is flat with metric
    (da^2 + db^2) / 2, so straight lines are geodesics.  The chart
    (u, v) -> T(d_0 u, d_1 u + v) makes D0 = d/du the geodesic field of
    direction d; directions other than the principal ones (axes and
    diagonals) give a cone whose frame coefficients mu and rho are both
    nonzero.
    """
    d0, d1 = (float(c) for c in direction)
    if d0 == 0.0:
        raise InputError("direction must have a nonzero first component")

    def evaluate(x):
        a = d0 * x[0]
        b = d1 * x[0] + x[1]
        return np.array([np.cos(a), np.sin(a), np.cos(b), np.sin(b)]) / math.sqrt(2.0)

    lo = [box[0][0], box[1][0]]
    hi = [box[0][1], box[1][1]]
    g = ImmersionField(SmoothMap(evaluate, 2, 4, lo, hi, name="Clifford torus"))
    D0 = SmoothMap.constant([1.0, 0.0], 2, lo, hi, name="d/du")
    return g, D0


def quartic_graph(x, y):
    """z = x^2 - y^4/4 with its gradient and Hessian."""
    F = x * x - y**4 / 4.0
    grad = (2.0 * x, -(y**3))
    hess = ((2.0, 0.0), (0.0, -3.0 * y * y))
    return F, grad, hess


# ---------------------------------------------------------------- envelopes


@dataclass(frozen=True, eq=False)
class EnvelopeLeafSpec:
    """One leaf of D (the slice x[leaf_axis] = t of the base chart) with the
    adapted frame supplying Y, X, mu and rho, and the fiber interval."""

    base: ImmersionField
    frame: object  # AdaptedFrame or FrameField
    leaf_axis: int
    t: float
    s_range: tuple = (-0.05, 0.05)
    check_resolution: int = 3


def _frame_field(frame):
    return frame.field if isinstance(frame, AdaptedFrame) else frame


def build_flat_envelope(spec):
    """F_t(w, s) = f(l(w)) + s Z/|Z| with Z = rho f_*Y - mu f_*X along the leaf.

    l embeds the leaf chart w (the base chart without ``leaf_axis``) at
    x[leaf_axis] = t.  The returned field is differentiated by finite
    differences only (the frame involves matrix decompositions); samples of
    the envelope chart where the Jacobian degenerates are recorded in the
    ``degenerate`` tag.
    """
    f = spec.base
    frame = _frame_field(spec.frame)
    n = f.dim
    ax = spec.leaf_axis
    if not 0 <= ax < n:
        raise InputError("leaf_axis out of range")
    t = float(spec.t)
    if not f.lo[ax] < t < f.hi[ax]:
        raise DomainError(f"leaf value {t} outside the chart")
    keep = [i for i in range(n) if i != ax]
    w_lo, w_hi = f.lo[keep], f.hi[keep]
    cache = {}

    def lift(w):
        x = np.empty(n)
        x[keep] = w
        x[ax] = t
        return x

    def unit_Z(w):
        key = tuple(np.round(w, 15))
        if key not in cache:
            x = lift(w)
            P = frame.at(x)
            jet = geometry_jet(f, x, frame.backend)
            if abs(P.mu) < 1e-6 or abs(P.rho) < 1e-6:
                raise NotCaseIIIError(tuple(np.round(x, 6)), P.mu, P.rho)
            Z = P.rho * jet.push(P.Y) - P.mu * jet.push(P.X)
            cache[key] = (f.map(x), Z / np.linalg.norm(Z))
        return cache[key]

    def evaluate(x):
        base, U = unit_Z(np.asarray(x[:-1], dtype=float))
        return base + x[-1] * U

    lo = np.concatenate([w_lo, [spec.s_range[0]]])
    hi = np.concatenate([w_hi, [spec.s_range[1]]])
    smap = SmoothMap(evaluate, n, n + 1, lo, hi, traceable=False,
                     fd_steps=(1e-3, 5e-3, 5e-3), name="flat envelope")
    F = ImmersionField(smap)
    good, degenerate = 0, []
    for p in _interior_grid(smap, spec.check_resolution, 0.2):
        J = eval_jet(smap, p, 1, "fd").first
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] < 1e-8 * sv[0]:
            degenerate.append(tuple(p))
        else:
            good += 1
    if good == 0:
        raise TubeWidthError("envelope Jacobian degenerates at every sample; "
                             "use a smaller s_range")
    tags = {"kind": "flat_envelope", "leaf_axis": ax, "t": t,
            "degenerate": degenerate, "lift": lift}
    return ImmersionField(smap, tags=tags)


def _largest_angle(Ja, Jb):
    """Largest principal angle between the column spans, via sines."""
    Qa, _ = np.linalg.qr(Ja)
    Qb, _ = np.linalg.qr(Jb)
    resid = Qa - Qb @ (Qb.T @ Qa)
    s = np.linalg.svd(resid, compute_uv=False)
    return float(np.arcsin(min(1.0, float(s[0]))))


def envelope_tangency(F, f, w):
    """Largest principal angle (radians) between F_t's and f's tangent spaces at (w, 0)."""
    w = np.asarray(w, dtype=float)
    x = F.tags["lift"](w)
    JF = eval_jet(F.map, np.concatenate([w, [0.0]]), 1, "fd").first
    Jf = eval_jet(f.map, x, 1, "dual").first
    return _largest_angle(JF, Jf)


def envelope_checks(F, f, frame, w, s):
    """Residuals at (w, s) of the envelope identities.

    "normal_tangency": |<F_t* X, eta>| with eta the unit normal of f at the foot point;
    "nullity_push": max_j |F_t* T^j - f_* T^j|.  X and T^j are leaf vectors, so their
    leaf-axis component is dropped to express them in the envelope chart.
    """
    frame = _frame_field(frame)
    w = np.asarray(w, dtype=float)
    ax = F.tags["leaf_axis"]
    x = F.tags["lift"](w)
    P = frame.at(x)
    jet = geometry_jet(f, x, frame.backend)
    JF = eval_jet(F.map, np.concatenate([w, [float(s)]]), 1, "fd").first[:, :-1]

    def drop(v):
        return np.delete(v, ax)

    normal_tangency = abs(float(JF @ drop(P.X) @ jet.eta))
    nullity_push = 0.0
    for j in range(P.T.shape[1]):
        T = P.T[:, j]
        nullity_push = max(nullity_push, float(np.linalg.norm(JF @ drop(T) - jet.push(T))))
    return {"normal_tangency": normal_tangency, "nullity_push": nullity_push}


def envelope_flatness(F, p):
    """sigma_2(A) / max(sigma_1(A), 1) for the envelope chart at p."""
    jet = geometry_jet(F, p, "fd")
    s = np.sort(np.abs(np.linalg.eigvalsh(jet.A_hat())))[::-1]
    return float(s[1] / max(s[0], 1.0)) if s.size > 1 else 0.0
