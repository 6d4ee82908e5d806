"""Pointwise geometry of immersed charts.

First and second fundamental forms, unit normal, shape operator,
Christoffel symbols, covariant derivatives, the curvature tensor (both from
the Gauss equation and intrinsically from the Christoffel symbols), relative
nullity and g-orthonormal subspace algebra.

All tangent vectors are expressed in chart coordinates; inner products use
the induced metric ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (DomainError, GeofolError, ImmersionDegeneracyError, InputError,
                     RankError)
from .numjet import SmoothMap, directional_derivative, eval_jet

RANK_TOL = 1e-6
IMMERSION_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ImmersionField:
    """Parametrized immersion of a chart box into Euclidean space.

    ``orientation`` (+1 or -1) multiplies the unit normal of a hypersurface
    chart; the unnormalized normal is the generalized cross product of the
    coordinate partials taken in order.
    """

    map: SmoothMap
    orientation: int = 1
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise InputError("orientation must be +1 or -1")

    @property
    def dim(self):
        return self.map.domain_dim

    @property
    def ambient_dim(self):
        return self.map.codomain_dim

    @property
    def is_hypersurface(self):
        return self.ambient_dim == self.dim + 1

    @property
    def lo(self):
        return self.map.lo

    @property
    def hi(self):
        return self.map.hi

    def __call__(self, x):
        return self.map(x)

    def flipped(self):
        return ImmersionField(self.map, -self.orientation, dict(self.tags))


def cross_normal(J):
    """Generalized cross product of the columns of an (n+1) x n matrix."""
    N, n = J.shape
    if N != n + 1:
        raise InputError("cross_normal needs an (n+1) x n matrix")
    out = np.empty(N)
    # exactly singular minors make LAPACK warn; their determinant is still 0
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(N):
            minor = np.delete(J, k, axis=0)
            out[k] = (-1) ** (k + n) * np.linalg.det(minor)
    return out


@dataclass(frozen=True, eq=False)
class GeometryJet:
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    Gamma: np.ndarray  # Gamma[k, i, j]
    first: np.ndarray  # partials of f, shape (N, n)
    second: np.ndarray  # shape (N, n, n)
    eta: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    backend: str = "dual"

    @property
    def dim(self):
        return self.g.shape[0]

    def inner(self, u, v):
        return float(np.asarray(u) @ self.g @ np.asarray(v))

    def norm(self, u):
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def push(self, v):
        """Ambient image f_* v of a chart vector."""
        return self.first @ np.asarray(v)

    def chol(self):
        return np.linalg.cholesky(self.g)

    def A_hat(self):
        """Shape operator in a g-orthonormal basis (a symmetric matrix)."""
        L = self.chol()
        Linv = np.linalg.inv(L)
        S = Linv @ self.h @ Linv.T
        return 0.5 * (S + S.T)

    def A_norm(self):
        return float(np.max(np.abs(np.linalg.eigvalsh(self.A_hat()))))

    def to_dict(self):
        out = {"point": self.point.tolist(), "g": self.g.tolist(),
               "gamma": self.Gamma.tolist()}
        if self.h is not None:
            out.update(h=self.h.tolist(), A=self.A.tolist(), eta=self.eta.tolist())
        return out


def _metric_parts(J, H):
    g = J.T @ J
    g_inv = np.linalg.inv(g)
    # dg[l, i, j] = d_l g_ij
    HJ = np.einsum("cli,cj->lij", H, J)
    dg = HJ + HJ.transpose(0, 2, 1)
    # first kind: fk[l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    fk = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    Gamma = np.einsum("kl,lij->kij", g_inv, fk)
    return g, g_inv, Gamma


def geometry_jet(f, x, backend="dual", check_rank=True):
    """Fundamental forms, normal, shape operator and Christoffels at ``x``."""
    x = np.asarray(x, dtype=float)
    jet = eval_jet(f.map, x, 2, backend)
    J, H = jet.first, jet.second
    if check_rank:
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] < IMMERSION_TOL * sv[0]:
            raise ImmersionDegeneracyError(float(sv[-1]), tuple(x))
    g, g_inv, Gamma = _metric_parts(J, H)
    eta = h = A = None
    if f.is_hypersurface:
        nu = cross_normal(J)
        eta = f.orientation * nu / np.linalg.norm(nu)
        h = np.einsum("cij,c->ij", H, eta)
        h = 0.5 * (h + h.T)
        A = g_inv @ h
    return GeometryJet(x, g, g_inv, Gamma, J, H, eta, h, A, jet.backend)


def principal_curvatures(jet):
    return np.linalg.eigvalsh(jet.A_hat())


def curvature_operator(jet, X, Y, Z):
    """R(X, Y)Z from the Gauss equation: <AY,Z> AX - <AX,Z> AY."""
    A = jet.A
    AX, AY = A @ np.asarray(X, float), A @ np.asarray(Y, float)
    return jet.inner(AY, Z) * AX - jet.inner(AX, Z) * AY


def gauss_curvature_tensor(jet):
    """R[l, i, j, k] = l-th component of R(d_i, d_j) d_k via the Gauss equation."""
    A = jet.A
    GA = jet.g @ A  # equals h
    # <A d_j, d_k> = (g A)_{kj}
    R = (np.einsum("li,kj->lijk", A, GA)
         - np.einsum("lj,ki->lijk", A, GA))
    return R


def christoffel_derivatives(f, x, backend="dual"):
    """Gamma and dGamma[k, i, j, m] = d_m Gamma^k_ij from a third-order jet."""
    jet = eval_jet(f.map, x, 3, backend)
    J, H, T = jet.first, jet.second, jet.third
    g, g_inv, Gamma = _metric_parts(J, H)
    HJ = np.einsum("cmi,cj->mij", H, J)
    dg = HJ + HJ.transpose(0, 2, 1)  # dg[m, a, b]
    dg_inv = -np.einsum("ka,mab,bl->klm", g_inv, dg, g_inv)
    fk = np.einsum("cij,cl->lij", H, J)  # <f_ij, f_l>
    dfk = (np.einsum("cijm,cl->lijm", T, J)
           + np.einsum("cij,clm->lijm", H, H))
    dGamma = (np.einsum("klm,lij->kijm", dg_inv, fk)
              + np.einsum("kl,lijm->kijm", g_inv, dfk))
    return Gamma, dGamma


def intrinsic_curvature(f, x, backend="dual"):
    """R[l, i, j, k] from Christoffel symbols and their derivatives.

    R(d_i, d_j) d_k = (d_i G^l_jk - d_j G^l_ik + G^m_jk G^l_im - G^m_ik G^l_jm) d_l
    """
    G, dG = christoffel_derivatives(f, x, backend)
    R = (np.einsum("ljki->lijk", dG) - np.einsum("likj->lijk", dG)
         + np.einsum("mjk,lim->lijk", G, G) - np.einsum("mik,ljm->lijk", G, G))
    return R


def _as_field(V, dim, like):
    if isinstance(V, SmoothMap):
        return V
    v = np.asarray(V, dtype=float).reshape(-1)
    if v.shape != (dim,):
        raise InputError(f"vector must have length {dim}")
    return SmoothMap.constant(v, dim, like.lo, like.hi)


def covariant_derivative(f, V, W, x, backend="dual", jet=None, check=True):
    """Levi-Civita derivative (nabla_V W)(x) in chart coordinates.

    ``V`` and ``W`` are vector fields (SmoothMaps chart -> R^n) or constant
    chart vectors.  The coordinate formula is cross-checked against the
    tangential part of the ambient derivative of f_* W.
    """
    x = np.asarray(x, dtype=float)
    n = f.dim
    if jet is None:
        jet = geometry_jet(f, x, backend, check_rank=False)
    Wf = _as_field(W, n, f.map)
    v = V(x) if isinstance(V, SmoothMap) else np.asarray(V, dtype=float)
    w = Wf(x)
    try:
        dW = directional_derivative(Wf, x, v, backend)
    except DomainError as exc:
        raise DomainError(f"vector field not defined near {tuple(x)}: {exc}") from exc
    out = dW + np.einsum("kij,i,j->k", jet.Gamma, v, w)
    if check:
        ambient = jet.first @ dW + np.einsum("cij,i,j->c", jet.second, v, w)
        tangential = np.linalg.solve(jet.g, jet.first.T @ ambient)
        if np.linalg.norm(tangential - out) > 1e-5 * (1.0 + np.linalg.norm(out)):
            raise GeofolError("covariant derivative formulas disagree")
    return out


# ---------------------------------------------------------------- subspaces


@dataclass(frozen=True, eq=False)
class Subspace:
    """Tangent subspace with a g-orthonormal basis (columns of ``basis``)."""

    basis: np.ndarray
    metric: np.ndarray

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def ambient(self):
        return self.metric.shape[0]

    def _L(self):
        return np.linalg.cholesky(self.metric)

    def hat(self):
        """Basis in Euclidean coordinates L^T v (g = L L^T); orthonormal."""
        return self._L().T @ self.basis

    @classmethod
    def from_hat(cls, Q, metric):
        L = np.linalg.cholesky(metric)
        return cls(np.linalg.solve(L.T, Q), metric)

    @classmethod
    def from_vectors(cls, vectors, metric, rel_tol=1e-8, abs_tol=0.0):
        """g-orthonormal basis of the span of the columns of ``vectors``."""
        metric = np.asarray(metric, dtype=float)
        V = np.asarray(vectors, dtype=float).reshape(metric.shape[0], -1)
        n = metric.shape[0]
        if V.shape[1] == 0:
            return cls(np.zeros((n, 0)), metric)
        L = np.linalg.cholesky(metric)
        U, s, _ = np.linalg.svd(L.T @ V, full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            return cls(np.zeros((n, 0)), metric)
        keep = s > max(rel_tol * s[0], abs_tol)
        return cls.from_hat(U[:, keep], metric)

    def projector_hat(self):
        Q = self.hat()
        return Q @ Q.T

    def project(self, v):
        """g-orthogonal projection of a chart vector onto the subspace."""
        return self.basis @ (self.basis.T @ self.metric @ np.asarray(v, float))

    def contains(self, v, tol=1e-8):
        v = np.asarray(v, float)
        r = v - self.project(v)
        return np.sqrt(max(r @ self.metric @ r, 0.0)) <= tol * (
            1.0 + np.sqrt(max(v @ self.metric @ v, 0.0)))


def _same_metric(S, T):
    if S.metric.shape != T.metric.shape or not np.allclose(
            S.metric, T.metric, rtol=1e-12, atol=1e-14):
        raise InputError("subspaces are expressed with different metrics")


def orthogonal_complement(S):
    n = S.ambient
    Q = S.hat()
    if S.dim == 0:
        return Subspace.from_hat(np.eye(n), S.metric)
    U, _, _ = np.linalg.svd(Q, full_matrices=True)
    return Subspace.from_hat(U[:, S.dim:], S.metric)


def principal_cosines(S, T):
    _same_metric(S, T)
    if S.dim == 0 or T.dim == 0:
        return np.zeros(0)
    s = np.linalg.svd(T.hat().T @ S.hat(), compute_uv=False)
    return np.clip(s, 0.0, 1.0)


def principal_angles(S, T):
    return np.arccos(principal_cosines(S, T))


def containment_residual(S, T):
    """Largest principal sine between S and its projection onto T (0 iff S <= T)."""
    _same_metric(S, T)
    if S.dim == 0:
        return 0.0
    if T.dim < S.dim:
        return 1.0
    c = principal_cosines(S, T)
    return float(np.sqrt(max(0.0, 1.0 - float(np.min(c)) ** 2)))


def intersection_dim(S, T, tol=RANK_TOL):
    c = principal_cosines(S, T)
    return int(np.sum(c >= 1.0 - tol))


def relative_nullity(jet, tol=RANK_TOL):
    """Kernel of the shape operator and the rank of A.

    Eigenvalues of the symmetrized operator below ``tol * max(|A|, 1)`` count
    as zero.
    """
    if not 0.0 < tol < 1.0:
        raise InputError("tol must lie in (0, 1)")
    w, U = np.linalg.eigh(jet.A_hat())
    scale = max(float(np.max(np.abs(w))), 1.0)
    small = np.abs(w) <= tol * scale
    rank = int(np.sum(~small))
    return Subspace.from_hat(U[:, small], jet.g), rank


def shape_image(jet, S, tol=RANK_TOL):
    """Span of A(S), dropping directions below ``tol * |A|``."""
    scale = max(jet.A_norm(), 1e-300)
    return Subspace.from_vectors(jet.A @ S.basis, jet.g, rel_tol=0.0,
                                 abs_tol=tol * scale)


def normal_field(f, backend="dual"):
    """The unit normal of a hypersurface chart as a (non-traceable) map."""
    def evaluate(x):
        J = eval_jet(f.map, x, 1, backend).first
        nu = cross_normal(J)
        return f.orientation * nu / np.linalg.norm(nu)

    return SmoothMap(evaluate, f.dim, f.ambient_dim,
                     f.lo + f.map.fd_steps[0], f.hi - f.map.fd_steps[0],
                     traceable=False, fd_steps=(1e-3, 5e-3, 5e-3),
                     name="unit normal")


# ----------------------------------------------------------- distributions


def _as_vector_field(v, n, lo, hi):
    if isinstance(v, SmoothMap):
        if v.domain_dim != n or v.codomain_dim != n:
            raise InputError("distribution generators must map the chart to R^n")
        return v
    return SmoothMap.constant(v, n, lo, hi, name="constant field")


@dataclass(frozen=True, eq=False)
class DistributionField:
    """Tangent distribution spanned by k pointwise independent vector fields.

    Generators are SmoothMaps from the chart to R^n (chart coordinates) or
    constant vectors, which are wrapped as constant fields.
    """

    generators: tuple
    name: str = ""

    @classmethod
    def from_generators(cls, generators, n, lo, hi, name=""):
        return cls(tuple(_as_vector_field(v, n, lo, hi) for v in generators), name)

    @classmethod
    def coordinate(cls, n, axes, lo, hi, name=""):
        """Span of the coordinate fields d/dx_a for a in ``axes``."""
        eye = np.eye(n)
        return cls.from_generators([eye[a] for a in axes], n, lo, hi, name)

    @property
    def rank(self):
        return len(self.generators)

    def matrix(self, x):
        """n x k matrix of generator values at x."""
        x = np.asarray(x, dtype=float)
        return np.column_stack([V(x) for V in self.generators])

    def check(self, x, rel_tol=1e-8):
        M = self.matrix(x)
        s = np.linalg.svd(M, compute_uv=False)
        if s.size == 0 or s[-1] < rel_tol * max(s[0], 1e-300):
            raise RankError(
                f"distribution {self.name or ''} has rank below {self.rank} at "
                f"{tuple(np.round(np.asarray(x, float), 6))}"
            )
        return M

    def subspace(self, x, metric):
        """g-orthonormal basis of the distribution at x."""
        M = self.check(x)
        return Subspace.from_vectors(M, metric, rel_tol=0.0)
