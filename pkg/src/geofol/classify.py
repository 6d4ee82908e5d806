"""Pointwise predicates for a distribution on a hypersurface chart.

Total geodesy, curvature invariance, the three-way classification of the
shape operator relative to the distribution, the line-of-curvature test for
orthogonal trajectories, the adapted orthonormal frame of a case-(iii)
distribution and the suite of Codazzi/Gauss residuals that such a frame
must satisfy.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (ChartExhaustedError, DomainError, GeofolError, InputError,
                     NotCaseIIIError, RankError)
from .geometry import (RANK_TOL, DistributionField, GeometryJet, Subspace,
                       containment_residual, covariant_derivative,
                       curvature_operator, geometry_jet, intersection_dim,
                       orthogonal_complement, principal_cosines, relative_nullity,
                       shape_image)
from .numjet import SmoothMap, directional_derivative

PREDICATE_TOL = 1e-5
CLASSIFY_TOL = 1e-6
RESIDUAL_TOL = 5e-3
FRAME_STEPS = (1e-3, 5e-3, 5e-3)
SUITE_STEPS = (5e-3, 5e-3, 5e-3)


class Case(enum.Enum):
    CASE_I = "CASE_I"
    CASE_II = "CASE_II"
    CASE_III = "CASE_III"
    FLAT_POINT = "FLAT_POINT"
    AMBIGUOUS = "AMBIGUOUS"


def _jet(f, x, backend, jet):
    if jet is not None:
        return jet
    if not f.is_hypersurface:
        raise InputError("classification needs a hypersurface chart")
    return geometry_jet(f, x, backend)


def _perp_norm(jet, S, v):
    r = v - S.project(v)
    return jet.norm(r)


# ------------------------------------------------------------- predicates


def totally_geodesic_residual(f, D, x, backend="dual", jet=None):
    """max over generator pairs of |(nabla_Va Vb)^perp| / (1 + |nabla_Va Vb|)."""
    x = np.asarray(x, dtype=float)
    jet = jet if jet is not None else geometry_jet(f, x, backend)
    S = D.subspace(x, jet.g)
    worst = 0.0
    for Va in D.generators:
        va = Va(x)
        for Vb in D.generators:
            nab = covariant_derivative(f, va, Vb, x, backend, jet=jet)
            worst = max(worst, _perp_norm(jet, S, nab) / (1.0 + jet.norm(nab)))
    return worst


def is_totally_geodesic(f, D, x, tol=PREDICATE_TOL, backend="dual"):
    """Whether nabla_V W stays in D for V, W in D at x; returns (bool, residual)."""
    r = totally_geodesic_residual(f, D, x, backend)
    return r <= tol, r


def is_curvature_invariant(f, D, x, tol=PREDICATE_TOL, backend="dual", jet=None):
    """Whether R(U, V)W lies in D for U, V, W in D (Gauss-equation curvature)."""
    x = np.asarray(x, dtype=float)
    jet = _jet(f, x, backend, jet)
    S = D.subspace(x, jet.g)
    worst = 0.0
    for a, b, c in itertools.product(range(S.dim), repeat=3):
        if a == b:
            continue
        R = curvature_operator(jet, S.basis[:, a], S.basis[:, b], S.basis[:, c])
        worst = max(worst, _perp_norm(jet, S, R) / (1.0 + jet.norm(R)))
    return worst <= tol, worst


def _unit_normal_to(jet, S):
    """g-unit vector spanning the g-orthogonal complement of a hyperplane S."""
    C = orthogonal_complement(S)
    if C.dim != 1:
        raise InputError("distribution must have rank n - 1")
    return C.basis[:, 0]


def is_line_of_curvature_trajectory(f, D, x, tol=PREDICATE_TOL, backend="dual"):
    """Whether the unit normal Y of a rank-(n-1) distribution is a principal direction.

    Residual is the sine of the g-angle between AY and Y (0 when AY = 0).
    """
    x = np.asarray(x, dtype=float)
    if D.rank != f.dim - 1:
        raise InputError(f"distribution must have rank {f.dim - 1}, got {D.rank}")
    jet = _jet(f, x, backend, None)
    Y = _unit_normal_to(jet, D.subspace(x, jet.g))
    AY = jet.A @ Y
    n_AY = jet.norm(AY)
    if n_AY <= 1e-12 * max(jet.A_norm(), 1.0):
        return True, 0.0
    r = jet.norm(AY - jet.inner(AY, Y) * Y) / n_AY
    return r <= tol, r


# --------------------------------------------------------- classification


@dataclass(frozen=True)
class PointClass:
    """Set of cases holding at a point, with their defining residuals."""

    flags: frozenset
    residuals: dict
    tolerances: dict
    warnings: tuple = ()

    @property
    def names(self):
        return sorted(c.value for c in self.flags)

    def __contains__(self, case):
        return case in self.flags

    def to_dict(self):
        return {"flags": self.names,
                "residuals": {k: float(v) for k, v in self.residuals.items()},
                "tolerances": dict(self.tolerances),
                "warnings": list(self.warnings)}


def case_residuals(jet, S, tol=CLASSIFY_TOL):
    """Residuals of the three alternatives for the g-orthonormal subspace S.

    CASE_I: largest |h| on S relative to |A|; CASE_II: containment sine of
    A(S) in S; CASE_III: gap 1 - cos of the (k-1)-th principal angle between
    S and the relative nullity, plus the integer intersection dimension.
    """
    k = S.dim
    normA = jet.A_norm()
    hS = S.basis.T @ jet.h @ S.basis
    r1 = float(np.max(np.abs(hS))) / normA if normA > 0 else 0.0
    r2 = containment_residual(shape_image(jet, S, tol), S) if normA > 0 else 0.0
    Delta, rank = relative_nullity(jet, tol)
    cos = np.sort(principal_cosines(S, Delta))[::-1]
    if k - 1 == 0:
        r3 = 0.0
    elif cos.size >= k - 1:
        r3 = float(1.0 - cos[k - 2])
    else:
        r3 = 1.0
    dim = intersection_dim(S, Delta, tol)
    return {"CASE_I": r1, "CASE_II": r2, "CASE_III": r3, "FLAT_POINT": normA,
            "intersection_dim": dim, "rank_A": rank}


def classify_point(f, D, x, tol=CLASSIFY_TOL, backend="dual",
                   invariance_tol=PREDICATE_TOL):
    """Which of the alternatives (i) A(D) in D^perp, (ii) A(D) in D,
    (iii) rank(D and Delta) = k - 1 hold at x.

    CASE_III is reported only when neither (i) nor (ii) holds, so the three
    alternatives are mutually exclusive away from flat points.  Flat points
    carry CASE_I, CASE_II and FLAT_POINT.
    """
    x = np.asarray(x, dtype=float)
    jet = _jet(f, x, backend, None)
    S = D.subspace(x, jet.g)
    res = case_residuals(jet, S, tol)
    warnings = []
    ok, inv = is_curvature_invariant(f, D, x, invariance_tol, backend, jet)
    if not ok:
        warnings.append(f"distribution not curvature invariant (residual {inv:.2e})")
    flags = set()
    if res["FLAT_POINT"] <= tol:
        flags |= {Case.FLAT_POINT, Case.CASE_I, Case.CASE_II}
    if res["CASE_I"] <= tol:
        flags.add(Case.CASE_I)
    if res["CASE_II"] <= tol:
        flags.add(Case.CASE_II)
    if (res["intersection_dim"] == S.dim - 1
            and Case.CASE_I not in flags and Case.CASE_II not in flags):
        flags.add(Case.CASE_III)
    if not flags:
        flags.add(Case.AMBIGUOUS)
    residuals = {k: v for k, v in res.items()}
    residuals["curvature_invariance"] = inv
    return PointClass(frozenset(flags), residuals,
                      {"classify": tol, "predicate": invariance_tol}, tuple(warnings))


# ----------------------------------------------------------- adapted frame


@dataclass(frozen=True)
class FramePoint:
    """Frame {Y, X, T^1..T^{n-2}} (chart vectors) and shape coefficients at x."""

    x: np.ndarray
    Y: np.ndarray
    X: np.ndarray
    T: np.ndarray  # n x (n-2), columns T^j
    beta: float
    mu: float
    rho: float
    shape_residual: float = 0.0
    nullity_gap: float = 0.0

    def vector(self, name):
        if name == "Y":
            return self.Y
        if name == "X":
            return self.X
        if name.startswith("T"):
            return self.T[:, int(name[1:])]
        raise KeyError(name)


class FrameField:
    """A smooth choice of frame over a hypersurface chart."""

    f = None
    backend = "dual"

    def at(self, x) -> FramePoint:
        raise NotImplementedError

    def names(self):
        return ["Y", "X"] + [f"T{j}" for j in range(self.f.dim - 2)]

    def vector_field(self, name):
        """The named frame vector as a (finite-difference only) SmoothMap."""
        f = self.f
        return SmoothMap(lambda x: self.at(x).vector(name), f.dim, f.dim, f.lo, f.hi,
                         traceable=False, fd_steps=FRAME_STEPS, name=f"frame {name}")

    def scalar_field(self, fn, name="scalar"):
        """SmoothMap x -> fn(self.at(x)) (finite-difference only)."""
        f = self.f
        return SmoothMap(lambda x: np.atleast_1d(fn(self.at(x))), f.dim, 1, f.lo, f.hi,
                         traceable=False, fd_steps=FRAME_STEPS, name=name)


def _procrustes(T, ref, metric):
    """Rotate the g-orthonormal columns of T to best match ``ref``."""
    if T.shape[1] == 0:
        return T
    M = T.T @ metric @ ref
    U, _, Vt = np.linalg.svd(M)
    return T @ (U @ Vt)


class AdaptedFrameField(FrameField):
    """Frame of a rank-(n-1) distribution D at exclusive case-(iii) points.

    Y is the g-unit normal of D; T^j span the relative nullity (which lies
    in D); X completes D.  Signs of Y and X and the rotation of the T^j are
    fixed by alignment with reference vectors taken at a seed point.
    """

    def __init__(self, f, D, backend="dual", tol=RANK_TOL, ref=None):
        if D.rank != f.dim - 1:
            raise InputError(f"distribution must have rank {f.dim - 1}, got {D.rank}")
        self.f = f
        self.D = D
        self.backend = backend
        self.tol = tol
        self.ref = ref
        self._cache = {}

    def _raw(self, x):
        jet = geometry_jet(self.f, x, self.backend)
        S = self.D.subspace(x, jet.g)
        Y = _unit_normal_to(jet, S)
        Q = S.basis
        # nullity inside D: right singular vectors of h restricted to D
        U, sv, Vt = np.linalg.svd(jet.h @ Q)
        scale = max(jet.A_norm(), 1.0)
        X = Q @ Vt[0]
        T = Q @ Vt[1:].T
        gap = float(sv[1]) / scale if sv.size > 1 else 0.0
        return jet, Y, X, T, gap

    def at(self, x):
        x = np.asarray(x, dtype=float)
        key = tuple(x.tolist())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if len(self._cache) > 4096:
            self._cache.clear()
        P = self._compute(x)
        self._cache[key] = P
        return P

    def _compute(self, x):
        jet, Y, X, T, gap = self._raw(x)
        if self.ref is not None:
            rY, rX, rT = self.ref
            if jet.inner(Y, rY) < 0:
                Y = -Y
            if jet.inner(X, rX) < 0:
                X = -X
            T = _procrustes(T, rT, jet.g)
        h = jet.h
        beta, mu, rho = float(Y @ h @ Y), float(Y @ h @ X), float(X @ h @ X)
        A = jet.A
        r = max(jet.norm(A @ Y - beta * Y - mu * X),
                jet.norm(A @ X - mu * Y - rho * X),
                max((jet.norm(A @ T[:, j]) for j in range(T.shape[1])), default=0.0))
        return FramePoint(x, Y, X, T, beta, mu, rho, max(r, gap * jet.A_norm()),
                          gap)


class ExplicitFrameField(FrameField):
    """Frame given by callables; used for synthetic and planted frames."""

    def __init__(self, f, Y, X, T, beta, mu, rho, backend="dual"):
        self.f = f
        self.backend = backend
        self._fns = (Y, X, T, beta, mu, rho)

    def at(self, x):
        x = np.asarray(x, dtype=float)
        Y, X, T, beta, mu, rho = self._fns
        Tm = np.asarray(T(x), float).reshape(self.f.dim, -1)
        return FramePoint(x, np.asarray(Y(x), float), np.asarray(X(x), float), Tm,
                          float(beta(x)), float(mu(x)), float(rho(x)))


def _nabla(f, frame, x, direction, name, jet):
    return covariant_derivative(f, direction, frame.vector_field(name), x,
                                frame.backend, jet=jet)


@dataclass(frozen=True)
class FrameSample:
    """Frame at a grid point with its transport coefficients and residuals."""

    point: FramePoint
    lam: np.ndarray
    theta: np.ndarray
    phi_w: float
    residuals: dict


@dataclass
class AdaptedFrame:
    """Adapted frame field together with its samples on a grid."""

    field: FrameField
    seed: np.ndarray
    samples: list = field(default_factory=list)

    def at(self, x):
        return self.field.at(x)

    def residual_table(self):
        return [s.residuals for s in self.samples]


def frame_sample(frame, x):
    """Evaluate the frame at x with lambda_j, theta_j, phi and the residuals
    of the shape, transport and nullity-derivative identities."""
    f = frame.f
    x = np.asarray(x, dtype=float)
    jet = geometry_jet(f, x, frame.backend)
    P = frame.at(x)
    m = P.T.shape[1]
    nXX = _nabla(f, frame, x, P.X, "X", jet)
    nYY = _nabla(f, frame, x, P.Y, "Y", jet)
    nXY = _nabla(f, frame, x, P.X, "Y", jet)
    lam = np.empty(m)
    lam_alt = np.empty(m)
    theta = np.empty(m)
    r6 = 0.0
    r5 = jet.norm(nXY)
    for j in range(m):
        Tj = P.T[:, j]
        nXT = _nabla(f, frame, x, P.X, f"T{j}", jet)
        lam[j] = jet.inner(nXT, P.X)
        lam_alt[j] = -jet.inner(nXX, Tj)
        theta[j] = jet.inner(nYY, Tj)
        r6 = max(r6, jet.norm(nXT - lam[j] * P.X))
        for name in ["X", "Y"] + [f"T{i}" for i in range(m)]:
            r5 = max(r5, jet.norm(_nabla(f, frame, x, Tj, name, jet)))
    residuals = {
        "shape": P.shape_residual,
        "transport": r5,
        "nullity_derivative": r6,
        "lambda_consistency": float(np.max(np.abs(lam - lam_alt), initial=0.0)),
    }
    phi_w = P.mu / P.rho if P.rho != 0 else float("nan")
    return FrameSample(P, lam, theta, phi_w, residuals)


def adapted_frame(f, D, seed, grid, backend="dual", tol=RANK_TOL, margin=2e-2,
                  samples=True):
    """Adapted frame of a totally geodesic rank-(n-1) distribution in case (iii).

    The gauge (signs of Y, X and the rotation of the nullity basis) is fixed
    at ``seed`` and propagated to every grid point by alignment.  Raises
    NotCaseIIIError where mu*rho vanishes or the nullity inside D has the
    wrong rank, and ChartExhaustedError when a grid point is too close to
    the chart boundary for the derivative stencils.
    """
    seed = np.asarray(seed, dtype=float)
    base = AdaptedFrameField(f, D, backend, tol)
    pts = [np.asarray(p, dtype=float) for p in grid]
    for p in [seed] + pts:
        try:
            f.map.check_point(p, margin)
        except DomainError as exc:
            raise ChartExhaustedError(
                f"frame construction leaves the chart at {tuple(np.round(p, 6))}: {exc}"
            ) from exc
    jet, Y, X, T, _ = base._raw(seed)
    # canonical signs: largest chart component of Y and X positive
    Y = Y * np.sign(Y[np.argmax(np.abs(Y))])
    X = X * np.sign(X[np.argmax(np.abs(X))])
    field_ = AdaptedFrameField(f, D, backend, tol, ref=(Y, X, T))
    out = AdaptedFrame(field_, seed)
    for p in [seed] + pts:
        P = field_.at(p)
        thr = tol * max(abs(P.beta), abs(P.mu), abs(P.rho), 1.0)
        if abs(P.mu) < max(thr, 1e-6) or abs(P.rho) < max(thr, 1e-6) or P.nullity_gap > tol:
            raise NotCaseIIIError(tuple(np.round(p, 6)), P.mu, P.rho)
    if samples:
        out.samples = [frame_sample(field_, p) for p in pts]
    return out


# ----------------------------------------------------------- residual suite


def _suite_scalars(f, frame, x):
    """rho, mu and the connection coefficients used by the residual suite.

    Returns a flat vector [rho, mu, d, a_1..a_m, b_1..b_m, c_1..c_m] with
    a_i = <nabla_X X, T^i>, b_i = <nabla_Y Y, T^i>, c_i = <nabla_Y X, T^i>,
    d = <nabla_Y Y, X>.
    """
    jet = geometry_jet(f, x, frame.backend)
    P = frame.at(x)
    nXX = _nabla(f, frame, x, P.X, "X", jet)
    nYY = _nabla(f, frame, x, P.Y, "Y", jet)
    nYX = _nabla(f, frame, x, P.Y, "X", jet)
    Tg = P.T.T @ jet.g
    return np.concatenate([[P.rho, P.mu, jet.inner(nYY, P.X)],
                           Tg @ nXX, Tg @ nYY, Tg @ nYX])


def residual_suite(f, frame, x, backend=None):
    """Codazzi and Gauss identities of a case-(iii) adapted frame at x.

    Each residual is |left - right| / (1 + |left|), maximized over indices.
    ``frame`` may be an AdaptedFrame or a FrameField.
    """
    field_ = frame.field if isinstance(frame, AdaptedFrame) else frame
    x = np.asarray(x, dtype=float)
    P = field_.at(x)
    m = P.T.shape[1]
    if abs(P.rho) < 1e-8:
        raise GeofolError(f"rho vanishes at {tuple(np.round(x, 6))}; mu/rho undefined")
    S = SmoothMap(lambda p: _suite_scalars(f, field_, p), f.dim, 3 + 3 * m, f.lo, f.hi,
                  traceable=False, fd_steps=SUITE_STEPS, name="suite scalars")
    s0 = S(x)
    rho, mu, d = s0[0], s0[1], s0[2]
    a, b, c = s0[3:3 + m], s0[3 + m:3 + 2 * m], s0[3 + 2 * m:]
    dX = directional_derivative(S, x, P.X, "fd")
    dT = [directional_derivative(S, x, P.T[:, i], "fd") for i in range(m)]

    def rel(lhs, rhs):
        return abs(lhs - rhs) / (1.0 + abs(lhs))

    r = {k: 0.0 for k in ("r7a", "r7b", "r7c", "r8a", "r8b", "r8c", "r9", "r11")}
    for i in range(m):
        Ti_rho, Ti_mu = dT[i][0], dT[i][1]
        Ti_a, Ti_b = dT[i][3:3 + m], dT[i][3 + m:3 + 2 * m]
        r["r7a"] = max(r["r7a"], rel(Ti_rho, rho * a[i]))
        r["r7b"] = max(r["r7b"], rel(Ti_mu, mu * a[i]))
        r["r7c"] = max(r["r7c"], rel(Ti_mu, rho * c[i] + mu * b[i]))
        r["r8a"] = max(r["r8a"], rel(dX[3 + m + i], d * (b[i] - a[i])))
        # T^i(mu / rho) by the quotient rule
        Ti_phi = (Ti_mu * rho - mu * Ti_rho) / rho**2
        r["r9"] = max(r["r9"], abs(Ti_phi) / (1.0 + abs(Ti_phi)))
        lam, theta = -a[i], b[i]
        lhs = mu * (lam + theta) + rho * c[i]
        r["r11"] = max(r["r11"], abs(lhs) / (1.0 + abs(lhs)))
        for j in range(m):
            r["r8b"] = max(r["r8b"], rel(Ti_a[j], a[i] * a[j]))
            r["r8c"] = max(r["r8c"], rel(Ti_b[j], b[i] * b[j]))
    return r
