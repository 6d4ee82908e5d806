"""Jets of smooth maps: values and partial derivatives up to order three.

Two independent backends are provided:

* ``"dual"`` -- forward-mode automatic differentiation with second-order
  (hyper-)dual numbers.  Every scalar carries its gradient and Hessian with
  respect to the chart coordinates, so one evaluation yields exact first and
  second partials.
* ``"finite_diff"`` -- central finite differences with one Richardson
  extrapolation step (step sizes ``h`` and ``h/2``).

Third partials are always finite differences of second-order jets.

Evaluators are plain Python functions written with ``numpy`` ufuncs
(``np.sin``, ``np.sqrt``, ...) and ordinary arithmetic.  They receive a 1-D
array of coordinates (floats, or :class:`HyperDual` objects) and return a
sequence of scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InputError, UnsupportedOrderError

BACKENDS = ("dual", "finite_diff")

# Base steps for the finite-difference stencils, per derivative order.
FD_STEPS = (1e-4, 2e-3, 5e-3)
# Step used when third partials are differentiated out of exact Hessians.
DUAL_THIRD_STEP = 1e-3


def _normalize_backend(backend):
    if backend in ("fd", "finite_diff"):
        return "finite_diff"
    if backend == "dual":
        return "dual"
    raise InputError(f"unknown differentiation backend {backend!r}")


class HyperDual:
    """Scalar with exact gradient and Hessian (truncated second-order jet).

    Arithmetic follows the product and chain rules to second order, which is
    what nesting ordinary dual numbers once computes.
    """

    __slots__ = ("v", "d", "H")

    def __init__(self, v, d, H):
        self.v = float(v)
        self.d = d
        self.H = H

    @classmethod
    def variable(cls, value, index, n):
        d = np.zeros(n)
        d[index] = 1.0
        return cls(value, d, np.zeros((n, n)))

    def _chain(self, f0, f1, f2):
        d = self.d
        return HyperDual(f0, f1 * d, f1 * self.H + f2 * np.outer(d, d))

    # numpy dispatch: wrap into 0-d object arrays so ufunc loops fall back
    # to the Python-level operators and methods defined below.
    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        args = [_as_object(x) for x in inputs]
        out = getattr(ufunc, method)(*args, **kwargs)
        return _unwrap(out)

    def __add__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(self.v + other.v, self.d + other.d, self.H + other.H)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return HyperDual(self.v + other, self.d, self.H)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.v, -self.d, -self.H)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(self.v - other.v, self.d - other.d, self.H - other.H)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return HyperDual(self.v - other, self.d, self.H)

    def __rsub__(self, other):
        return HyperDual(other - self.v, -self.d, -self.H)

    def __mul__(self, other):
        if isinstance(other, HyperDual):
            a, b = self, other
            cross = np.outer(a.d, b.d)
            return HyperDual(
                a.v * b.v,
                a.v * b.d + b.v * a.d,
                a.v * b.H + b.v * a.H + cross + cross.T,
            )
        if isinstance(other, np.ndarray):
            return NotImplemented
        return HyperDual(self.v * other, self.d * other, self.H * other)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.v
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if isinstance(other, HyperDual):
            return self * other.reciprocal()
        if isinstance(other, np.ndarray):
            return NotImplemented
        return HyperDual(self.v / other, self.d / other, self.H / other)

    def __rtruediv__(self, other):
        return other * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, HyperDual):
            return (p * self.log()).exp()
        if isinstance(p, np.ndarray):
            return NotImplemented
        v = self.v
        if p == 0:
            return HyperDual(1.0, np.zeros_like(self.d), np.zeros_like(self.H))
        if p == 1:
            return self
        if p == 2:
            return self * self
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __rpow__(self, base):
        return (self * math.log(base)).exp()

    def __abs__(self):
        return -self if self.v < 0 else self

    def __float__(self):
        return self.v

    def __lt__(self, other):
        return self.v < float(other)

    def __le__(self, other):
        return self.v <= float(other)

    def __gt__(self, other):
        return self.v > float(other)

    def __ge__(self, other):
        return self.v >= float(other)

    def __repr__(self):
        return f"HyperDual({self.v!r}, d={self.d!r})"

    # elementary functions, reached through numpy ufuncs on object arrays
    def sin(self):
        s, c = math.sin(self.v), math.cos(self.v)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = math.sin(self.v), math.cos(self.v)
        return self._chain(c, -s, -c)

    def tan(self):
        t = math.tan(self.v)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2)

    def exp(self):
        e = math.exp(self.v)
        return self._chain(e, e, e)

    def log(self):
        v = self.v
        return self._chain(math.log(v), 1.0 / v, -1.0 / v**2)

    def sqrt(self):
        r = math.sqrt(self.v)
        return self._chain(r, 0.5 / r, -0.25 / (r * self.v))

    def arctan(self):
        v = self.v
        q = 1.0 / (1.0 + v * v)
        return self._chain(math.atan(v), q, -2.0 * v * q * q)

    def arcsin(self):
        v = self.v
        q = 1.0 / math.sqrt(1.0 - v * v)
        return self._chain(math.asin(v), q, v * q**3)

    def sinh(self):
        return self._chain(math.sinh(self.v), math.cosh(self.v), math.sinh(self.v))

    def cosh(self):
        return self._chain(math.cosh(self.v), math.sinh(self.v), math.cosh(self.v))

    def tanh(self):
        t = math.tanh(self.v)
        s = 1.0 - t * t
        return self._chain(t, s, -2.0 * t * s)


def _as_object(x):
    if isinstance(x, HyperDual):
        out = np.empty((), dtype=object)
        out[()] = x
        return out
    if isinstance(x, np.ndarray) and x.dtype != object:
        return x.astype(object)
    return x


def _unwrap(out):
    if isinstance(out, tuple):
        return tuple(_unwrap(o) for o in out)
    if isinstance(out, np.ndarray) and out.ndim == 0:
        return out[()]
    return out


def value_of(x):
    """Float value of a scalar that may be a :class:`HyperDual`."""
    return x.v if isinstance(x, HyperDual) else float(x)


@dataclass(frozen=True, eq=False)
class SmoothMap:
    """A map from a chart box in R^domain_dim to R^codomain_dim.

    ``traceable`` marks evaluators that accept :class:`HyperDual` inputs.
    Maps whose evaluators call into numerical linear algebra (eigen- or
    singular-value decompositions) are not traceable; they are always
    differentiated by finite differences, with steps ``fd_steps``.
    ``periodic`` optionally gives a period per axis (``None`` for a
    non-periodic axis); periodic axes impose no boundary margin.
    """

    evaluator: Callable
    domain_dim: int
    codomain_dim: int
    lo: np.ndarray
    hi: np.ndarray
    traceable: bool = True
    periodic: Optional[tuple] = None
    fd_steps: tuple = FD_STEPS
    name: str = ""

    def __post_init__(self):
        if self.domain_dim < 1 or self.codomain_dim < 1:
            raise InputError("map dimensions must be positive")
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != (self.domain_dim,) or hi.shape != (self.domain_dim,):
            raise InputError("chart box bounds must have length domain_dim")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InputError("chart box bounds must be finite")
        if np.any(hi <= lo):
            raise InputError("chart box must be nonempty on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.periodic is not None:
            per = tuple(self.periodic)
            if len(per) != self.domain_dim:
                raise InputError("periodic must have one entry per axis")
            object.__setattr__(self, "periodic", per)

    def __call__(self, x):
        x = np.asarray(x, dtype=float).reshape(self.domain_dim)
        out = np.asarray(self.evaluator(x), dtype=float).reshape(-1)
        if out.shape != (self.codomain_dim,):
            raise InputError(
                f"{self.name or 'map'} returned {out.shape[0]} components, "
                f"expected {self.codomain_dim}"
            )
        return out

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def with_box(self, lo, hi):
        return SmoothMap(
            self.evaluator, self.domain_dim, self.codomain_dim, lo, hi,
            traceable=self.traceable, periodic=self.periodic,
            fd_steps=self.fd_steps, name=self.name,
        )

    def check_point(self, x, radius=0.0):
        """Raise :class:`DomainError` unless ``x`` is ``radius`` inside the box."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.domain_dim,):
            raise InputError(f"point must have length {self.domain_dim}")
        for i in range(self.domain_dim):
            if self.periodic is not None and self.periodic[i] is not None:
                continue
            lo, hi = self.lo[i], self.hi[i]
            if radius > 0:
                ok = lo + radius <= x[i] <= hi - radius
            else:
                ok = lo < x[i] < hi
            if not ok:
                raise DomainError(
                    f"coordinate {i} = {x[i]:.6g} is not inside "
                    f"[{lo:.6g}, {hi:.6g}] with margin {radius:.1e}"
                    + (f" ({self.name})" if self.name else "")
                )

    @staticmethod
    def constant(value, domain_dim, lo, hi, name="constant"):
        value = np.asarray(value, dtype=float).reshape(-1)
        return SmoothMap(lambda x: value, domain_dim, value.size, lo, hi,
                         name=name)


@dataclass(frozen=True)
class Jet:
    """Value and partial derivatives of a map at one point.

    ``first[c, i]`` is the i-th partial of component c; ``second[c, i, j]``
    and ``third[c, i, j, k]`` likewise.
    """

    order: int
    point: np.ndarray
    value: np.ndarray
    first: np.ndarray
    second: Optional[np.ndarray] = None
    third: Optional[np.ndarray] = None
    backend: str = "dual"


def stencil_radius(smap, order, backend):
    backend = _normalize_backend(backend)
    if backend == "dual" and smap.traceable:
        return DUAL_THIRD_STEP if order >= 3 else 0.0
    h1, h2, h3 = smap.fd_steps
    r = h1 if order == 1 else max(h1, h2)
    if order >= 3:
        r += h3
    return r


def _dual_eval(smap, x):
    n = smap.domain_dim
    xs = np.empty(n, dtype=object)
    for i in range(n):
        xs[i] = HyperDual.variable(x[i], i, n)
    out = smap.evaluator(xs)
    out = list(np.asarray(out, dtype=object).reshape(-1))
    m = smap.codomain_dim
    if len(out) != m:
        raise InputError(
            f"{smap.name or 'map'} returned {len(out)} components, expected {m}"
        )
    val = np.empty(m)
    d1 = np.zeros((m, n))
    d2 = np.zeros((m, n, n))
    for c, comp in enumerate(out):
        if isinstance(comp, HyperDual):
            val[c] = comp.v
            d1[c] = comp.d
            d2[c] = comp.H
        else:
            val[c] = float(comp)
    return val, d1, d2


def _richardson(f_of_h, h):
    return (4.0 * f_of_h(h / 2.0) - f_of_h(h)) / 3.0


def _fd_eval(smap, x, order):
    n = smap.domain_dim
    h1, h2, _ = smap.fd_steps
    cache = {}

    def f(offset):
        key = tuple(np.round(offset / 1e-12).astype(np.int64))
        if key not in cache:
            cache[key] = smap(x + offset)
        return cache[key]

    eye = np.eye(n)
    val = f(np.zeros(n))
    m = val.size
    d1 = np.zeros((m, n))
    for i in range(n):
        e = eye[i]
        d1[:, i] = _richardson(lambda h: (f(h * e) - f(-h * e)) / (2.0 * h), h1)
    d2 = None
    if order >= 2:
        d2 = np.zeros((m, n, n))
        for i in range(n):
            e = eye[i]
            d2[:, i, i] = _richardson(
                lambda h: (f(h * e) - 2.0 * val + f(-h * e)) / (h * h), h2
            )
            for j in range(i + 1, n):
                ej = eye[j]

                def mixed(h):
                    return (f(h * (e + ej)) - f(h * (e - ej))
                            - f(h * (ej - e)) + f(-h * (e + ej))) / (4.0 * h * h)

                d2[:, i, j] = d2[:, j, i] = _richardson(mixed, h2)
    return val, d1, d2


def _second_order(smap, x, backend):
    if backend == "dual" and smap.traceable:
        return _dual_eval(smap, x)
    return _fd_eval(smap, x, 2)


def eval_jet(smap, point, order=2, backend="dual"):
    """Evaluate the jet of ``smap`` at ``point`` up to ``order`` (1..3)."""
    backend = _normalize_backend(backend)
    if order not in (1, 2, 3):
        raise UnsupportedOrderError(f"jet order {order} is not supported (1..3)")
    x = np.asarray(point, dtype=float).reshape(-1)
    smap.check_point(x, stencil_radius(smap, order, backend))
    used = backend if smap.traceable else "finite_diff"
    if order == 1 and used == "finite_diff":
        val, d1, _ = _fd_eval(smap, x, 1)
        return Jet(1, x, val, d1, backend=used)
    val, d1, d2 = _second_order(smap, x, used)
    if order == 1:
        return Jet(1, x, val, d1, backend=used)
    if order == 2:
        return Jet(2, x, val, d1, d2, backend=used)
    n = smap.domain_dim
    h3 = DUAL_THIRD_STEP if used == "dual" else smap.fd_steps[2]
    d3 = np.zeros(d2.shape + (n,))
    eye = np.eye(n)
    for k in range(n):
        e = eye[k]

        def diff(h):
            hp = _second_order(smap, x + h * e, used)[2]
            hm = _second_order(smap, x - h * e, used)[2]
            return (hp - hm) / (2.0 * h)

        d3[..., k] = _richardson(diff, h3)
    return Jet(3, x, val, d1, d2, d3, backend=used)


def directional_derivative(field, point, direction, backend="dual"):
    """Derivative of ``field`` at ``point`` along the chart vector ``direction``."""
    backend = _normalize_backend(backend)
    x = np.asarray(point, dtype=float).reshape(-1)
    v = np.asarray(direction, dtype=float).reshape(-1)
    if v.shape != x.shape:
        raise InputError("direction must have the same length as the point")
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm):
        raise InputError("direction must have finite norm")
    if backend == "dual" and field.traceable:
        return eval_jet(field, x, 1, "dual").first @ v
    field.check_point(x, field.fd_steps[0])
    if norm == 0.0:
        return np.zeros(field.codomain_dim)
    u = v / norm
    h1 = field.fd_steps[0]
    d = _richardson(lambda h: (field(x + h * u) - field(x - h * u)) / (2.0 * h), h1)
    return d * norm


def gradient(field, point, backend="dual"):
    """Gradient (first partials) of a scalar field as a 1-D array."""
    return eval_jet(field, point, 1, backend).first[0]
