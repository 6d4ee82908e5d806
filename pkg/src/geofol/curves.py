"""Curves in R^N: Frenet frames, synthesis from curvatures, parallel normal
frames along a curve and the admissibility margin of partial-tube fibers.

Sampled curves keep their node data (positions and derivatives) and are
evaluated off-grid by Hermite interpolation, so they can be composed into
immersions and differentiated by either jet backend.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (DegenerateFrenetError, DomainError, InputError,
                     ParametrizationError)
from .numjet import HyperDual, SmoothMap, eval_jet, value_of

PIVOT_TOL = 1e-8
UNIT_SPEED_TOL = 1e-6
OMEGA_TOL = 1e-9


# ------------------------------------------------------------ integration


def rk4(rhs, s0, y0, s1, nsteps, post=None):
    """Classical fixed-step Runge-Kutta from s0 to s1.

    ``post(s, y)`` is applied after every step (used to re-orthonormalize
    frames).  Returns the node parameters and the states, both including
    the initial point.
    """
    h = (s1 - s0) / nsteps
    ss = s0 + h * np.arange(nsteps + 1)
    ys = np.empty((nsteps + 1,) + np.shape(y0))
    y = np.array(y0, dtype=float)
    ys[0] = y
    for k in range(nsteps):
        s = ss[k]
        k1 = rhs(s, y)
        k2 = rhs(s + h / 2, y + h / 2 * k1)
        k3 = rhs(s + h / 2, y + h / 2 * k2)
        k4 = rhs(s + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if post is not None:
            y = post(ss[k + 1], y)
        ys[k + 1] = y
    return ss, ys


def _steps_for(s_range, step):
    if step <= 0:
        raise InputError("step must be positive")
    length = s_range[1] - s_range[0]
    if length <= 0:
        raise InputError("s_range must be an increasing interval")
    return max(1, int(math.ceil(length / step - 1e-9)))


def mgs(vectors):
    """Modified Gram-Schmidt on the columns of ``vectors``."""
    Q = np.array(vectors, dtype=float)
    for j in range(Q.shape[1]):
        for i in range(j):
            Q[:, j] -= (Q[:, i] @ Q[:, j]) * Q[:, i]
        Q[:, j] /= np.linalg.norm(Q[:, j])
    return Q


# --------------------------------------------------------- interpolation

_CUBIC = np.array([
    [1.0, 0.0, -3.0, 2.0],   # value at left node
    [0.0, 1.0, -2.0, 1.0],   # derivative at left node
    [0.0, 0.0, 3.0, -2.0],   # value at right node
    [0.0, 0.0, -1.0, 1.0],   # derivative at right node
])

_QUINTIC = np.array([
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
])


def _poly_derivative(C, r):
    C = np.array(C)
    for _ in range(r):
        p = C.shape[1]
        C = C[:, 1:] * np.arange(1, p)
    return C


class Hermite:
    """Piecewise Hermite interpolant through node values and derivatives.

    ``data`` is ``[values, first]`` (cubic) or ``[values, first, second]``
    (quintic), each an array with leading axis over nodes.  Evaluation
    accepts float or :class:`HyperDual` parameters.
    """

    def __init__(self, nodes, data, period=None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.data = [np.asarray(d, dtype=float) for d in data]
        if len(self.data) not in (2, 3):
            raise InputError("Hermite data needs values and 1 or 2 derivatives")
        self.period = period
        self.coeffs = _CUBIC if len(self.data) == 2 else _QUINTIC

    @property
    def lo(self):
        return self.nodes[0]

    @property
    def hi(self):
        return self.nodes[-1]

    def _locate(self, s):
        sv = value_of(s)
        if self.period is not None:
            shift = self.period * math.floor((sv - self.lo) / self.period)
            s = s - shift
            sv = sv - shift
        if not (self.lo - 1e-12 <= sv <= self.hi + 1e-12):
            raise DomainError(
                f"s = {sv:.6g} outside sampled range [{self.lo:.6g}, {self.hi:.6g}]"
            )
        k = int(np.searchsorted(self.nodes, sv, side="right")) - 1
        k = min(max(k, 0), len(self.nodes) - 2)
        return s, k

    def __call__(self, s, deriv=0):
        s, k = self._locate(s)
        s0, s1 = self.nodes[k], self.nodes[k + 1]
        dt = s1 - s0
        t = (s - s0) / dt
        C = _poly_derivative(self.coeffs, deriv)
        powers = [1.0]
        for _ in range(C.shape[1] - 1):
            powers.append(powers[-1] * t)
        weights = [sum(C[b, p] * powers[p] for p in range(C.shape[1]) if C[b, p] != 0.0)
                   for b in range(C.shape[0])]
        if len(self.data) == 2:
            y, m = self.data
            terms = [y[k], dt * m[k], y[k + 1], dt * m[k + 1]]
        else:
            y, m, a = self.data
            terms = [y[k], dt * m[k], dt * dt * a[k],
                     y[k + 1], dt * m[k + 1], dt * dt * a[k + 1]]
        out = 0.0
        for w, term in zip(weights, terms):
            if isinstance(w, float) and w == 0.0:
                continue
            out = out + w * term
        if deriv:
            out = out * (1.0 / dt**deriv)
        return out


# ----------------------------------------------------------------- curves


class Curve:
    """Interface shared by analytic and sampled curves."""

    dim: int
    lo: float
    hi: float
    period: Optional[float] = None

    def point(self, s):
        raise NotImplementedError

    def tangent(self, s):
        raise NotImplementedError

    def accel(self, s):
        raise NotImplementedError

    def as_map(self):
        pad = 0.0 if self.period is None else None
        return SmoothMap(lambda x: self.point(x[0]), 1, self.dim, [self.lo], [self.hi],
                         periodic=None if pad is not None else (self.period,),
                         name="curve")


class AnalyticCurve(Curve):
    """Curve given by a SmoothMap, with optional closed-form derivatives."""

    def __init__(self, smap, tangent=None, accel=None, period=None, backend="dual"):
        if smap.domain_dim != 1:
            raise InputError("a curve map must have a one-dimensional domain")
        self.map = smap
        self.dim = smap.codomain_dim
        self.lo, self.hi = float(smap.lo[0]), float(smap.hi[0])
        self._tangent = tangent
        self._accel = accel
        self.period = period
        self.backend = backend

    def point(self, s):
        traced = isinstance(s, HyperDual)
        return np.asarray(self.map.evaluator(np.array([s], dtype=object if traced else float)))

    def tangent(self, s):
        if self._tangent is not None:
            return np.asarray(self._tangent(s), dtype=float)
        return eval_jet(self.map, [s], 1, self.backend).first[:, 0]

    def accel(self, s):
        if self._accel is not None:
            return np.asarray(self._accel(s), dtype=float)
        return eval_jet(self.map, [s], 2, self.backend).second[:, 0, 0]

    def as_map(self):
        per = None if self.period is None else (self.period,)
        return SmoothMap(self.map.evaluator, 1, self.dim, self.map.lo, self.map.hi,
                         periodic=per, name=self.map.name or "curve")


def line_curve(point, direction, s_range):
    """Unit-speed straight line through ``point``."""
    p = np.asarray(point, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    smap = SmoothMap(lambda x: p + x[0] * d, 1, p.size, [s_range[0]], [s_range[1]],
                     name="line")
    zero = np.zeros_like(p)
    return AnalyticCurve(smap, tangent=lambda s: d, accel=lambda s: zero)


def circle_curve(radius, dim=2, s_range=None, axes=(0, 1), periodic=True):
    """Unit-speed circle of the given radius about the origin in the plane of ``axes``."""
    R = float(radius)
    if R <= 0:
        raise InputError("radius must be positive")
    i, j = axes
    if s_range is None:
        s_range = (0.0, 2.0 * math.pi * R)
    e_i = np.zeros(dim)
    e_j = np.zeros(dim)
    e_i[i] = 1.0
    e_j[j] = 1.0

    def evaluate(x):
        a = x[0] / R
        return R * (np.cos(a) * e_i + np.sin(a) * e_j)

    def tangent(s):
        a = s / R
        return -math.sin(a) * e_i + math.cos(a) * e_j

    def accel(s):
        a = s / R
        return -(math.cos(a) * e_i + math.sin(a) * e_j) / R

    smap = SmoothMap(evaluate, 1, dim, [s_range[0]], [s_range[1]],
                     periodic=(2 * math.pi * R,) if periodic else None, name="circle")
    return AnalyticCurve(smap, tangent=tangent, accel=accel,
                         period=2 * math.pi * R if periodic else None)


@dataclass(frozen=True)
class FrenetData:
    """Frenet apparatus at one parameter value; ``frame[i]`` is e_{i+1}."""

    s: float
    frame: np.ndarray
    curvatures: np.ndarray


class SampledCurve(Curve):
    """Curve stored on an s-grid, interpolated by quintic Hermite splines.

    Node data: positions, unit tangents and accelerations.  Optionally the
    Frenet frames, their s-derivatives and the curvatures at the nodes.
    """

    def __init__(self, s, points, tangents, accels, frames=None, frame_derivs=None,
                 curvatures=None, period=None):
        self.s = np.asarray(s, dtype=float)
        self.points = np.asarray(points, dtype=float)
        self.tangents = np.asarray(tangents, dtype=float)
        self.accels = np.asarray(accels, dtype=float)
        self.frames = None if frames is None else np.asarray(frames, dtype=float)
        self.frame_derivs = (None if frame_derivs is None
                             else np.asarray(frame_derivs, dtype=float))
        self.curvatures = None if curvatures is None else np.asarray(curvatures, float)
        self.dim = self.points.shape[1]
        self.lo, self.hi = float(self.s[0]), float(self.s[-1])
        self.period = period
        self._pos = Hermite(self.s, [self.points, self.tangents, self.accels], period)
        self._frame = None
        if self.frames is not None and self.frame_derivs is not None:
            self._frame = Hermite(self.s, [self.frames, self.frame_derivs], period)

    def point(self, s):
        return self._pos(s)

    def tangent(self, s):
        return self._pos(s, 1)

    def accel(self, s):
        return self._pos(s, 2)

    def frame(self, s):
        """Interpolated Frenet frame (rows e_1..e_N)."""
        if self._frame is None:
            raise InputError("this sampled curve carries no Frenet frames")
        return self._frame(s)

    def frenet_at(self, k):
        return FrenetData(float(self.s[k]), self.frames[k], self.curvatures[k])

    def to_json(self):
        doc = {"s": self.s.tolist(), "points": self.points.tolist()}
        if self.frames is not None:
            doc["frames"] = self.frames.tolist()
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        """Rebuild from a JSON document; derivative data is recovered from
        the stored frames (e_1 and the finite-difference curvature)."""
        doc = json.loads(text)
        s = np.asarray(doc["s"], float)
        pts = np.asarray(doc["points"], float)
        if "frames" not in doc:
            tang = np.gradient(pts, s, axis=0, edge_order=2)
            acc = np.gradient(tang, s, axis=0, edge_order=2)
            return cls(s, pts, tang, acc)
        frames = np.asarray(doc["frames"], float)
        dframes = np.gradient(frames, s, axis=0, edge_order=2)
        return cls(s, pts, frames[:, 0], dframes[:, 0], frames=frames,
                   frame_derivs=dframes)


# --------------------------------------------------------------- Frenet


def _as_curve_map(curve):
    if isinstance(curve, Curve):
        return curve.as_map()
    if isinstance(curve, SmoothMap):
        if curve.domain_dim != 1:
            raise InputError("a curve map must have a one-dimensional domain")
        return curve
    raise InputError("expected a SmoothMap or Curve")


def curve_derivatives(smap, s, kmax, backend="dual"):
    """[c', c'', ..., c^(kmax)] at s.

    Orders beyond three are central differences (with Richardson
    extrapolation) of the next lower order.
    """
    if kmax <= 3:
        jet = eval_jet(smap, [s], max(kmax, 1), backend)
        out = [jet.first[:, 0]]
        if kmax >= 2:
            out.append(jet.second[:, 0, 0])
        if kmax >= 3:
            out.append(jet.third[:, 0, 0, 0])
        return out[:kmax]
    lower = curve_derivatives(smap, s, kmax - 1, backend)
    h = 2e-3

    def top(sv):
        return curve_derivatives(smap, sv, kmax - 1, backend)[-1]

    def diff(step):
        return (top(s + step) - top(s - step)) / (2 * step)

    lower.append((4 * diff(h / 2) - diff(h)) / 3)
    return lower


def _complete_frame(E):
    """Append the unit vector making rows of E a positively oriented basis."""
    from .geometry import cross_normal

    last = cross_normal(np.asarray(E).T)
    return np.vstack([E, last / np.linalg.norm(last)])


def frenet_apparatus(curve, s, backend="dual"):
    """Frenet frame and curvatures of a unit-speed curve at ``s``.

    kappa_i = <e_i', e_{i+1}> is evaluated through the Gram-Schmidt pivots
    of the derivatives: c^(k) has component kappa_1...kappa_{k-1} along e_k.
    The last curvature is signed (the frame is positively oriented).
    """
    smap = _as_curve_map(curve)
    N = smap.codomain_dim
    if N < 2:
        raise InputError("curves need an ambient dimension of at least 2")
    ders = curve_derivatives(smap, s, N, backend)
    speed = float(np.linalg.norm(ders[0]))
    if abs(speed - 1.0) > UNIT_SPEED_TOL:
        raise ParametrizationError(f"curve speed at s={s} is {speed:.8f}, not 1")
    E = []
    pivots = [speed]
    for k in range(N - 1):
        v = np.array(ders[k], dtype=float)
        for e in E:
            v = v - (v @ e) * e
        p = float(np.linalg.norm(v))
        if p < PIVOT_TOL:
            raise DegenerateFrenetError(k, p)
        if k > 0:
            pivots.append(p)
        E.append(v / p)
    frame = _complete_frame(np.array(E))
    pivots.append(float(ders[N - 1] @ frame[N - 1]))
    kappas = np.array([pivots[k + 1] / pivots[k] for k in range(N - 1)])
    return FrenetData(float(s), frame, kappas)


def frenet_matrix(kappas):
    """Skew matrix K with e' = K e for the Frenet equations (rows are e_i)."""
    N = len(kappas) + 1
    K = np.zeros((N, N))
    for i, k in enumerate(kappas):
        K[i, i + 1] = k
        K[i + 1, i] = -k
    return K


def _curvature_callable(k):
    if isinstance(k, SmoothMap):
        return lambda s: float(k([s])[0])
    if callable(k):
        return lambda s: float(k(s))
    c = float(k)
    return lambda s: c


def _num_derivative(fn, s, h=1e-4):
    return (fn(s + h) - fn(s - h)) / (2 * h)


def curve_from_curvatures(kappas, initial_frame, initial_point, s_range,
                          step=1e-3, period=None):
    """Integrate the Frenet equations for prescribed curvature functions.

    ``initial_frame`` holds e_1..e_N as rows at ``s_range[0]``.  The frame is
    re-orthonormalized after every RK4 step.
    """
    E0 = np.asarray(initial_frame, dtype=float)
    N = E0.shape[0]
    if E0.shape != (N, N):
        raise InputError("initial frame must be a square matrix of row vectors")
    if np.max(np.abs(E0 @ E0.T - np.eye(N))) > 1e-10:
        raise InputError("initial frame is not orthonormal")
    if len(kappas) != N - 1:
        raise InputError(f"expected {N - 1} curvature functions, got {len(kappas)}")
    ks = [_curvature_callable(k) for k in kappas]
    c0 = np.asarray(initial_point, dtype=float).reshape(N)

    def K_at(s):
        return frenet_matrix([k(s) for k in ks])

    def rhs(s, y):
        E = y[N:].reshape(N, N)
        return np.concatenate([E[0], (K_at(s) @ E).ravel()])

    def post(s, y):
        E = y[N:].reshape(N, N)
        E = mgs(E.T).T
        return np.concatenate([y[:N], E.ravel()])

    nsteps = _steps_for(s_range, step)
    ss, ys = rk4(rhs, float(s_range[0]), np.concatenate([c0, E0.ravel()]),
                 float(s_range[1]), nsteps, post)
    pts = ys[:, :N]
    frames = ys[:, N:].reshape(-1, N, N)
    curv = np.array([[k(s) for k in ks] for s in ss])
    dframes = np.array([frenet_matrix(c) @ E for c, E in zip(curv, frames)])
    tang = frames[:, 0]
    acc = dframes[:, 0]
    return SampledCurve(ss, pts, tang, acc, frames=frames, frame_derivs=dframes,
                        curvatures=curv, period=period)


# ------------------------------------------------------ normal transport


@dataclass(eq=False)
class ParallelNormalFrame:
    """Orthonormal parallel normal sections xi_1..xi_m sampled along a curve.

    ``sections[k]`` is the N x m matrix whose columns are xi_i(s_k); this
    matrix is the bundle isometry phi_s : R^m -> E.
    """

    curve: Curve
    s: np.ndarray
    sections: np.ndarray
    derivs: np.ndarray
    step: float
    period: Optional[float] = None
    _interp: Hermite = field(init=False, repr=False)
    _accels: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _tangents: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self._interp = Hermite(self.s, [self.sections, self.derivs], self.period)

    @property
    def m(self):
        return self.sections.shape[2]

    @property
    def lo(self):
        return float(self.s[0])

    @property
    def hi(self):
        return float(self.s[-1])

    def phi(self, s):
        """N x m matrix of the sections at s (interpolated)."""
        return self._interp(s)

    def apply(self, s, y):
        """phi_s(y) = sum_i y_i xi_i(s)."""
        return self._interp(s) @ np.asarray(y)

    def accels(self):
        """gamma'' at the nodes (computed once; the frame is immutable)."""
        if self._accels is None:
            self._accels = np.array([self.curve.accel(s) for s in self.s])
        return self._accels

    def tangents(self):
        if self._tangents is None:
            self._tangents = np.array([self.curve.tangent(s) for s in self.s])
        return self._tangents

    def invariant_residuals(self):
        """Worst normality, orthonormality and parallelism defects over nodes."""
        T = self.tangents()
        normal = float(np.max(np.abs(np.einsum("kn,knm->km", T, self.sections))))
        gram = np.einsum("knm,knl->kml", self.sections, self.sections)
        ortho = float(np.max(np.abs(gram - np.eye(self.m))))
        return {"normal": normal, "orthonormal": ortho}

    def to_json(self):
        return json.dumps({
            "s": self.s.tolist(),
            "points": [np.asarray(self.curve.point(s), float).tolist() for s in self.s],
            "frames": np.transpose(self.sections, (0, 2, 1)).tolist(),
        })


def _transport_rhs(curve):
    def rhs(s, X):
        t = curve.tangent(s)
        a = curve.accel(s)
        return -np.outer(t, a @ X)
    return rhs


def parallel_normal_frame(curve, initial_sections, s_range=None, step=1e-3,
                          period=None):
    """Transport orthonormal normal vectors along ``curve`` by the normal connection.

    Solves xi' = -<xi, gamma''> gamma' with RK4; after every step the
    sections are projected back to the normal space and re-orthonormalized.
    ``initial_sections`` are the columns of an N x m matrix at s_range[0].
    """
    X0 = np.asarray(initial_sections, dtype=float)
    if X0.ndim == 1:
        X0 = X0[:, None]
    N = curve.dim
    if X0.shape[0] != N:
        raise InputError("initial sections must be vectors of the ambient space")
    if s_range is None:
        s_range = (curve.lo, curve.hi)
    if period is None:
        period = getattr(curve, "period", None)
    t0 = np.asarray(curve.tangent(s_range[0]), float)
    if np.max(np.abs(t0 @ X0)) > 1e-8:
        raise InputError("initial section is not normal to the curve")
    if np.max(np.abs(X0.T @ X0 - np.eye(X0.shape[1]))) > 1e-8:
        raise InputError("initial sections are not orthonormal")

    def post(s, X):
        t = curve.tangent(s)
        X = X - np.outer(t, t @ X)
        return mgs(X)

    rhs = _transport_rhs(curve)
    nsteps = _steps_for(s_range, step)
    ss, Xs = rk4(rhs, float(s_range[0]), X0, float(s_range[1]), nsteps, post)
    dXs = np.array([rhs(s, X) for s, X in zip(ss, Xs)])
    return ParallelNormalFrame(curve, ss, Xs, dXs, (s_range[1] - s_range[0]) / nsteps,
                               period)


@dataclass(frozen=True)
class OmegaMargin:
    """Signed margins 1 - <gamma''(s), phi_s(y)> over the sampled s."""

    min: float
    max: float
    worst: float
    s_worst: float
    admissible: bool


def omega_products(frame, y):
    """<gamma''(s_k), phi_{s_k}(y)> at every node of the frame."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (frame.m,):
        raise InputError(f"fiber point must have length {frame.m}")
    acc = frame.accels()
    return np.einsum("kn,knm,m->k", acc, frame.sections, y)


def omega_margin(frame, y, tol=OMEGA_TOL):
    """Admissibility of the fiber point y: 1 - <gamma'', phi_s(y)> never vanishes."""
    q = 1.0 - omega_products(frame, y)
    k = int(np.argmin(np.abs(q)))
    worst = float(abs(q[k]))
    lo, hi = float(q.min()), float(q.max())
    admissible = worst > tol and (lo > 0 or hi < 0)
    return OmegaMargin(lo, hi, worst, float(frame.s[k]), admissible)
