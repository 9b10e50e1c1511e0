"""Function representations used throughout tklab.

Everything lives in log coordinates ``w = x + iy`` with ``z = exp(w)``, so a
function on ``(C*)^n`` is a function of ``(x, y)`` that is ``2*pi``-periodic
in each ``y_j``.

Two families of objects are provided:

* :class:`InvariantPotential` -- a function of ``x`` alone (a torus-invariant
  Kahler potential), with derivatives up to order 4.
* :class:`ScalarField` / :class:`PeriodicScalarField` -- functions of
  ``(x, y)`` with derivatives up to order 2 in the ``2n`` real variables
  ``(x_1..x_n, y_1..y_n)``.

All evaluators broadcast over leading axes: a point batch has shape
``(..., n)`` and values come back with shape ``(...)``.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

# Finite-difference stencils, both fourth-order accurate.
_D1 = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))
_D2 = ((-2, -1.0 / 12), (-1, 16.0 / 12), (0, -30.0 / 12), (1, 16.0 / 12), (2, -1.0 / 12))


class DomainError(ValueError):
    """A stencil or evaluation point leaves the declared domain."""


# --------------------------------------------------------------------------
# Finite differences
# --------------------------------------------------------------------------


def _compose(a, b):
    out = Counter()
    for oa, wa in a:
        for ob, wb in b:
            out[oa + ob] += wa * wb
    return tuple(sorted(out.items()))


def _axis_stencil(count):
    """1-D stencil (offset, weight) for ``d^count`` at unit step."""
    if count == 0:
        return ((0, 1.0),)
    if count == 1:
        return _D1
    if count == 2:
        return _D2
    if count == 3:
        return _compose(_D1, _D2)
    if count == 4:
        return _compose(_D2, _D2)
    raise ValueError(f"derivative order {count} per axis is not supported")


def _stencil(alpha):
    """Tensor-product stencil for the multi-index ``alpha`` (counts per axis)."""
    per_axis = [_axis_stencil(c) for c in alpha]
    offsets, weights = [], []
    for combo in itertools.product(*per_axis):
        offsets.append([o for o, _ in combo])
        weights.append(math.prod(w for _, w in combo))
    return np.array(offsets, dtype=float), np.array(weights)


def default_step(order, p):
    """Default finite-difference step for a derivative of total ``order`` at ``p``."""
    scale = np.maximum(1.0, np.max(np.abs(p), axis=-1))
    if order <= 2:
        # dyadic step: p + k*h is exact, so low-degree polynomials come out exact
        return 2.0 ** np.floor(np.log2(1e-3 * scale))
    return 1e-2 * scale


def fd_partial(f, alpha, p, h=None, lower=None, upper=None):
    """Central-difference estimate of the partial derivative ``d^alpha f(p)``.

    Parameters
    ----------
    f : callable
        Scalar function of an ``(..., m)`` array.  It is called once with all
        stencil points stacked along a new axis, so it must broadcast.
    alpha : sequence of int
        Multi-index of derivative counts, one entry per coordinate,
        ``sum(alpha) <= 4``.
    p : array_like, shape (..., m)
        Evaluation point(s).
    h : float or array, optional
        Step.  Defaults to ``1e-3 * max(1, |p|_inf)`` (rounded down to a power
        of two) for orders up to 2 and
        ``1e-2 * max(1, |p|_inf)`` for orders 3 and 4.
    lower, upper : array_like, optional
        Box bounds; a stencil point outside them raises :class:`DomainError`.

    Returns
    -------
    ndarray, shape (...)
    """
    alpha = tuple(int(a) for a in alpha)
    p = np.asarray(p, dtype=float)
    if len(alpha) != p.shape[-1]:
        raise ValueError(f"multi-index has {len(alpha)} entries, point has {p.shape[-1]}")
    order = sum(alpha)
    if order > 4 or min(alpha) < 0:
        raise ValueError(f"unsupported multi-index {alpha}")
    if order == 0:
        return np.asarray(f(p), dtype=float)
    if h is None:
        h = default_step(order, p)
    h = np.asarray(h, dtype=float)
    offsets, weights = _stencil(alpha)
    pts = p[..., None, :] + h[..., None, None] * offsets
    if lower is not None and np.any(pts < np.asarray(lower)):
        raise DomainError("finite-difference stencil exits the domain (below)")
    if upper is not None and np.any(pts > np.asarray(upper)):
        raise DomainError("finite-difference stencil exits the domain (above)")
    vals = np.asarray(f(pts), dtype=float)
    return np.sum(vals * weights, axis=-1) / h**order


def counts_to_indices(alpha):
    return tuple(i for i, c in enumerate(alpha) for _ in range(c))


def indices_to_counts(idx, m):
    alpha = [0] * m
    for i in idx:
        alpha[i] += 1
    return tuple(alpha)


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [(first,)] + part
        for k in range(len(part)):
            yield part[:k] + [(first,) + part[k]] + part[k + 1:]


def log_chain(deriv, idx, coeff=1.0):
    """Derivative ``d^idx`` of ``coeff * log(u)`` given the derivatives of ``u``.

    ``deriv(sub_idx)`` must return the derivative of ``u`` for any sub-tuple
    of ``idx`` (``deriv(())`` is ``u`` itself).  Uses Faa di Bruno over set
    partitions of ``idx``.
    """
    u = deriv(())
    if not idx:
        return coeff * np.log(u)
    total = 0.0
    cache = {}
    for part in _set_partitions(tuple(idx)):
        k = len(part)
        term = (-1.0) ** (k - 1) * math.factorial(k - 1) / u**k
        for block in part:
            key = tuple(sorted(block))
            if key not in cache:
                cache[key] = deriv(key)
            term = term * cache[key]
        total = total + term
    return coeff * total


# --------------------------------------------------------------------------
# Potentials
# --------------------------------------------------------------------------


class InvariantPotential:
    """Torus-invariant Kahler potential ``phi(x)`` on (a box in) ``R^n``.

    Subclasses implement ``_derivative(idx, x)`` where ``idx`` is a sorted
    tuple of coordinate indices (``()`` gives the value).
    """

    oracle_kind = "analytic"

    def __init__(self, n, name="potential", params=None, lower=None, upper=None,
                 compactifiable=False):
        if int(n) < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        self.n = int(n)
        self.name = name
        self.params = dict(params or {})
        self.lower = np.full(self.n, -np.inf) if lower is None else np.asarray(lower, float)
        self.upper = np.full(self.n, np.inf) if upper is None else np.asarray(upper, float)
        self.compactifiable = compactifiable

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, n={self.n})"

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected points with {self.n} coordinates, got shape {x.shape}")
        return x

    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        return self._derivative((), self._check(x))

    def stable_logdet(self, x):
        """``log det Hess phi(x)`` by a cancellation-free route, or ``None``.

        Potentials returning a value here guarantee a positive definite
        Hessian; the default defers to the generic eigenvalue check.
        """
        return None

    def derivative(self, idx, x):
        """Partial derivative along the coordinate indices ``idx`` (order <= 4)."""
        idx = tuple(sorted(int(i) for i in idx))
        if len(idx) > 4:
            raise ValueError("derivative oracle supports order <= 4")
        return self._derivative(idx, self._check(x))

    def partial(self, alpha, x):
        """Partial derivative for the multi-index of counts ``alpha``."""
        if len(alpha) != self.n:
            raise ValueError(f"multi-index must have {self.n} entries")
        return self.derivative(counts_to_indices(alpha), x)

    def tensor(self, order, x):
        """Symmetric derivative tensor of shape ``(..., n, ..., n)``."""
        x = self._check(x)
        shape = x.shape[:-1] + (self.n,) * order
        out = np.empty(shape)
        for idx in itertools.combinations_with_replacement(range(self.n), order):
            val = self._derivative(idx, x)
            for perm in set(itertools.permutations(idx)):
                out[(Ellipsis,) + perm] = val
        return out

    def gradient(self, x):
        return self.tensor(1, x)

    def hessian(self, x):
        return self.tensor(2, x)

    def _derivative(self, idx, x):
        raise NotImplementedError


class SumExpPotential(InvariantPotential):
    """``c0 + sum_k c_k exp(<a_k, x>)``."""

    def __init__(self, coeffs, exponents, const=0.0, **kw):
        exponents = np.atleast_2d(np.asarray(exponents, dtype=float))
        super().__init__(exponents.shape[1], **kw)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.exponents = exponents
        self.const = float(const)
        if self.coeffs.shape != (exponents.shape[0],):
            raise ValueError("one coefficient per exponent vector is required")

    def _derivative(self, idx, x):
        e = np.exp(x @ self.exponents.T)
        c = self.coeffs * np.prod(self.exponents[:, list(idx)], axis=1)
        out = e @ c
        return out + self.const if not idx else out


class QuadraticPotential(InvariantPotential):
    """``1/2 x^T Q x + b.x + c``."""

    def __init__(self, Q, b=None, c=0.0, **kw):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        super().__init__(Q.shape[0], **kw)
        self.Q = 0.5 * (Q + Q.T)
        self.b = np.zeros(self.n) if b is None else np.asarray(b, dtype=float)
        self.c = float(c)

    def _derivative(self, idx, x):
        if len(idx) == 0:
            return 0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x) + x @ self.b + self.c
        if len(idx) == 1:
            return x @ self.Q[idx[0]] + self.b[idx[0]]
        if len(idx) == 2:
            return np.full(x.shape[:-1], self.Q[idx[0], idx[1]])
        return np.zeros(x.shape[:-1])


class QuadraticCosinePotential(QuadraticPotential):
    """``1/2 x^T Q x + sum_j a_j cos(x_j)``.

    Its Hessian ``Q - diag(a cos x)`` is ``2pi``-periodic, so the metric
    descends to a complex torus whenever it stays positive.
    """

    def __init__(self, Q, amps, **kw):
        super().__init__(Q, **kw)
        self.amps = np.broadcast_to(np.asarray(amps, dtype=float), (self.n,)).copy()

    def _derivative(self, idx, x):
        out = super()._derivative(idx, x)
        if not idx:
            return out + np.cos(x) @ self.amps
        if len(set(idx)) > 1:
            return out
        j, k = idx[0], len(idx)
        # k-th derivative of cos is cos(x + k pi/2)
        return out + self.amps[j] * np.cos(x[..., j] + 0.5 * np.pi * k)


class LogPotential(InvariantPotential):
    """``log(inner(x))`` for a positive inner potential."""

    def __init__(self, inner, **kw):
        super().__init__(inner.n, **kw)
        self.inner = inner

    def _derivative(self, idx, x):
        return log_chain(lambda sub: self.inner._derivative(sub, x), idx)


class LogSumExpPotential(InvariantPotential):
    """``log sum_k c_k exp(<a_k, x>)`` with cumulant-form derivatives.

    Derivatives are the joint cumulants of the exponent vectors under the
    softmax weights ``p_k``.  Centred exponents are formed as
    ``sum_l p_l (a_k - a_l)``, which avoids the cancellation in
    ``a_k - E[a]`` far out where one weight is close to 1.
    """

    def __init__(self, coeffs, exponents, **kw):
        exponents = np.atleast_2d(np.asarray(exponents, dtype=float))
        super().__init__(exponents.shape[1], **kw)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if np.any(self.coeffs <= 0):
            raise ValueError("log-sum-exp coefficients must be positive")
        self.exponents = exponents
        self._diff = exponents[:, None, :] - exponents[None, :, :]
        # (n+1)-subsets of exponents with affinely independent members, and
        # log det([1, a_k]_{k in S})^2 for each
        n = self.n
        subsets, weights = [], []
        for S in itertools.combinations(range(len(exponents)), n + 1):
            M = np.hstack([np.ones((n + 1, 1)), exponents[list(S)]])
            d = abs(np.linalg.det(M))
            if d > 1e-12:
                subsets.append(S)
                weights.append(2.0 * np.log(d))
        self._subsets = np.array(subsets, dtype=int).reshape(-1, n + 1)
        self._subset_logw = np.array(weights)

    def _weights(self, x):
        logits = x @ self.exponents.T + np.log(self.coeffs)
        top = logits.max(axis=-1, keepdims=True)
        e = np.exp(logits - top)
        s = e.sum(axis=-1, keepdims=True)
        return e / s, top[..., 0] + np.log(s[..., 0])

    def stable_logdet(self, x):
        """Cauchy-Binet: ``det Hess = sum_S prod_{k in S} p_k det([1, a_k]_S)^2``.

        Every term is positive, so the sum keeps full relative accuracy even
        when the Hessian is nearly singular.  ``None`` if the exponents do not
        affinely span ``R^n`` (then the Hessian is singular).
        """
        if len(self._subsets) == 0:
            return None
        x = self._check(x)
        logits = x @ self.exponents.T + np.log(self.coeffs)
        top = logits.max(axis=-1, keepdims=True)
        logp = logits - top - np.log(np.exp(logits - top).sum(axis=-1, keepdims=True))
        terms = logp[..., self._subsets].sum(axis=-1) + self._subset_logw
        t0 = terms.max(axis=-1, keepdims=True)
        return t0[..., 0] + np.log(np.exp(terms - t0).sum(axis=-1))

    def _derivative(self, idx, x):
        p, value = self._weights(x)
        if not idx:
            return value
        if len(idx) == 1:
            return p @ self.exponents[:, idx[0]]
        # centred exponents for the coordinates involved: (..., K) per index
        cen = {i: np.einsum("...l,kl->...k", p, self._diff[:, :, i]) for i in set(idx)}

        def mom(ix):
            return np.sum(p * np.prod([cen[i] for i in ix], axis=0), axis=-1)

        if len(idx) < 4:
            return mom(idx)
        i, j, k, l = idx
        return (mom(idx) - mom((i, j)) * mom((k, l)) - mom((i, k)) * mom((j, l))
                - mom((i, l)) * mom((j, k)))


class ScaledPotential(InvariantPotential):
    def __init__(self, inner, factor, **kw):
        super().__init__(inner.n, **kw)
        self.inner = inner
        self.factor = float(factor)

    def _derivative(self, idx, x):
        return self.factor * self.inner._derivative(idx, x)

    def stable_logdet(self, x):
        inner = self.inner.stable_logdet(x) if self.factor > 0 else None
        return None if inner is None else inner + self.n * np.log(self.factor)


class TranslatedPotential(InvariantPotential):
    """``inner(x - shift)``."""

    def __init__(self, inner, shift, **kw):
        super().__init__(inner.n, **kw)
        self.inner = inner
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), (inner.n,)).copy()

    def _derivative(self, idx, x):
        return self.inner._derivative(idx, x - self.shift)

    def stable_logdet(self, x):
        return self.inner.stable_logdet(self._check(x) - self.shift)


class DirectSumPotential(InvariantPotential):
    """``phi_1(x_1) + phi_2(x_2) + ...`` on the product of the factors' spaces."""

    def __init__(self, parts, **kw):
        parts = list(parts)
        super().__init__(sum(p.n for p in parts), **kw)
        self.parts = parts
        self.offsets = np.cumsum([0] + [p.n for p in parts])

    def _derivative(self, idx, x):
        if not idx:
            return sum(p._derivative((), x[..., a:b])
                       for p, a, b in zip(self.parts, self.offsets[:-1], self.offsets[1:]))
        for p, a, b in zip(self.parts, self.offsets[:-1], self.offsets[1:]):
            if all(a <= i < b for i in idx):
                return p._derivative(tuple(i - a for i in idx), x[..., a:b])
        return np.zeros(x.shape[:-1])


class FiniteDifferencePotential(InvariantPotential):
    """Potential given only by an evaluator; derivatives by :func:`fd_partial`."""

    oracle_kind = "finite-difference"

    def __init__(self, func, n, **kw):
        super().__init__(n, **kw)
        self.func = func

    def _derivative(self, idx, x):
        if not idx:
            return np.asarray(self.func(x), dtype=float)
        return fd_partial(self.func, indices_to_counts(idx, self.n), x,
                          lower=self.lower, upper=self.upper)


# --------------------------------------------------------------------------
# Catalog
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    n: int
    params: dict
    expected_ricci: str
    expected_logvol: str
    potential: InvariantPotential


def _sum_exp_defaults(n):
    exps = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 2.0
        exps.append(e.copy())
        e[j] = -1.0
        exps.append(e.copy())
    return [1.0] * (2 * n), [list(e) for e in exps]


_COMMON = {"scale", "shift"}
_ALLOWED = {
    "flat": _COMMON,
    "flat_cylinder": _COMMON,
    "fubini_study": _COMMON,
    "cosh_neg": _COMMON,
    "sum_exp": _COMMON | {"coeffs", "exponents"},
}
COMPACTIFIABLE = {"fubini_study"}


def make_builtin_potential(name, n, params=None):
    """Build a catalog potential with closed-form derivatives.

    ==============  ==========================================
    flat            ``sum_j exp(2 x_j)``  (Euclidean ``|z|^2``)
    flat_cylinder   ``sum_j x_j^2``
    fubini_study    ``log(1 + sum_j exp(2 x_j))``
    cosh_neg        ``sum_j cosh(2 x_j)``
    sum_exp         ``sum_k c_k exp(<a_k, x>)``, ``c_k > 0``
    ==============  ==========================================

    Every entry also accepts ``scale`` (multiplies ``phi``) and ``shift``
    (``phi(x - shift)``).
    """
    params = dict(params or {})
    if name not in _ALLOWED:
        raise ValueError(f"unknown potential {name!r}; expected one of {sorted(_ALLOWED)}")
    n = int(n)
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    unknown = set(params) - _ALLOWED[name]
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")

    eye = np.eye(n)
    if name == "flat":
        base = SumExpPotential(np.ones(n), 2 * eye)
    elif name == "flat_cylinder":
        base = QuadraticPotential(2 * eye)
    elif name == "fubini_study":
        base = LogSumExpPotential(np.ones(n + 1), np.vstack([np.zeros(n), 2 * eye]))
    elif name == "cosh_neg":
        base = SumExpPotential(0.5 * np.ones(2 * n), np.vstack([2 * eye, -2 * eye]))
    else:
        dc, de = _sum_exp_defaults(n)
        coeffs = np.asarray(params.get("coeffs", dc), dtype=float)
        exps = np.asarray(params.get("exponents", de), dtype=float)
        if exps.ndim != 2 or exps.shape[1] != n:
            raise ValueError(f"sum_exp exponents must be a list of length-{n} vectors")
        if coeffs.shape != (exps.shape[0],):
            raise ValueError("sum_exp needs one coefficient per exponent vector")
        if np.any(coeffs <= 0):
            raise ValueError("sum_exp coefficients must be positive")
        base = SumExpPotential(coeffs, exps)

    pot = base
    if "shift" in params:
        pot = TranslatedPotential(pot, params["shift"])
    if "scale" in params:
        pot = ScaledPotential(pot, params["scale"])
    pot.name = name
    pot.params = params
    pot.compactifiable = name in COMPACTIFIABLE
    return pot


def direct_sum(*parts, name=None):
    """Product potential ``phi_1(x_1) + phi_2(x_2) + ...``."""
    pot = DirectSumPotential(parts)
    pot.name = name or "+".join(p.name for p in parts)
    pot.compactifiable = all(p.compactifiable for p in parts)
    return pot


_EXPECTED = {
    "flat": ("zero", "linear"),
    "flat_cylinder": ("zero", "linear"),
    "fubini_study": ("positive", "strictly-concave"),
    "cosh_neg": ("negative", "strictly-convex"),
    "sum_exp": ("negative", "strictly-convex"),
}


def catalog(n=1):
    """Default catalog entries in dimension ``n`` with their expected tags."""
    out = []
    for name, (ric, lv) in _EXPECTED.items():
        out.append(CatalogEntry(name, n, {}, ric, lv, make_builtin_potential(name, n)))
    return out


# --------------------------------------------------------------------------
# Fields on (x, y)
# --------------------------------------------------------------------------


class ScalarField:
    """Real function ``f(x, y)`` on ``C^n`` written in real coordinates.

    Derivative indices run over ``0..2n-1``: ``x_1..x_n`` then ``y_1..y_n``.
    """

    periodic = False
    oracle_kind = "analytic"
    y_independent = False

    def __init__(self, n, name="field"):
        if int(n) < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        self.n = int(n)
        self.name = name
        self.extendable_axes = frozenset()

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, n={self.n})"

    def _prep(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-1] != self.n or y.shape[-1] != self.n:
            raise ValueError(f"expected {self.n} coordinates in x and y")
        if self.periodic:
            y = np.mod(y, TWO_PI)
        return x, y

    def __call__(self, x, y):
        x, y = self._prep(x, y)
        return self._derivative((), x, y)

    def derivative(self, idx, x, y):
        idx = tuple(sorted(int(i) for i in idx))
        if len(idx) > 2:
            raise ValueError("field derivative oracle supports order <= 2")
        x, y = self._prep(x, y)
        return self._derivative(idx, x, y)

    def partial(self, alpha, x, y):
        """Partial for a length-``2n`` multi-index of counts over ``(x, y)``."""
        if len(alpha) != 2 * self.n:
            raise ValueError(f"multi-index must have {2 * self.n} entries")
        return self.derivative(counts_to_indices(alpha), x, y)

    def hessian(self, x, y):
        """Full ``2n x 2n`` real Hessian in the basis ``(x_1..x_n, y_1..y_n)``."""
        x, y = self._prep(x, y)
        m = 2 * self.n
        out = np.empty(np.broadcast_shapes(x.shape, y.shape)[:-1] + (m, m))
        for i, j in itertools.combinations_with_replacement(range(m), 2):
            out[..., i, j] = out[..., j, i] = self._derivative((i, j), x, y)
        return out

    def _derivative(self, idx, x, y):
        raise NotImplementedError

    def __add__(self, other):
        return SumField([self, other])

    def __neg__(self):
        return SumField([self], [-1.0])

    def __rmul__(self, c):
        return SumField([self], [float(c)])


class PeriodicScalarField(ScalarField):
    """Field that is ``2*pi``-periodic in every ``y_j``; ``y`` is reduced mod ``2*pi``."""

    periodic = True


def _bcast(x, y):
    return np.broadcast_shapes(x.shape, y.shape)[:-1]


class PullbackField(PeriodicScalarField):
    """``y``-independent field ``phi(x)``."""

    y_independent = True

    def __init__(self, potential, name=None):
        super().__init__(potential.n, name or f"pullback({potential.name})")
        self.potential = potential
        self.oracle_kind = potential.oracle_kind

    def _derivative(self, idx, x, y):
        shape = _bcast(x, y)
        if any(i >= self.n for i in idx):
            return np.zeros(shape)
        return np.broadcast_to(self.potential._derivative(idx, x), shape)


def _complex(c):
    if isinstance(c, (list, tuple)):
        return complex(float(c[0]), float(c[1]))
    return complex(c)


class LaurentPolynomial:
    """``P(w) = sum_m c_m exp(<k_m, w>)`` with ``k_m`` integer vectors."""

    def __init__(self, coeffs, exponents):
        self.coeffs = np.array([_complex(c) for c in coeffs], dtype=complex)
        self.exponents = np.atleast_2d(np.asarray(exponents))
        if not np.all(self.exponents == np.round(self.exponents)):
            raise ValueError("Laurent exponents must be integers")
        self.exponents = self.exponents.astype(float)
        if self.coeffs.shape != (self.exponents.shape[0],):
            raise ValueError("one coefficient per exponent vector is required")
        self.n = self.exponents.shape[1]

    def __call__(self, x, y):
        phase = (x @ self.exponents.T) + 1j * (y @ self.exponents.T)
        return np.exp(phase) @ self.coeffs


class LaurentPartField(PeriodicScalarField):
    """Real or imaginary part of a Laurent polynomial (pluriharmonic)."""

    def __init__(self, poly, part="re", name=None):
        if part not in ("re", "im"):
            raise ValueError("part must be 're' or 'im'")
        super().__init__(poly.n, name or f"laurent_{part}")
        self.poly = poly
        self.part = part

    def _derivative(self, idx, x, y):
        K = self.poly.exponents
        factor = np.ones(K.shape[0], dtype=complex)
        for i in idx:
            factor = factor * (K[:, i] if i < self.n else 1j * K[:, i - self.n])
        val = np.exp(x @ K.T + 1j * (y @ K.T)) @ (self.poly.coeffs * factor)
        return val.real if self.part == "re" else val.imag


class LaurentAbs2Field(PeriodicScalarField):
    """``|P|^2`` for a Laurent polynomial ``P``."""

    def __init__(self, poly, name=None):
        super().__init__(poly.n, name or "laurent_abs2")
        self.poly = poly
        K = poly.exponents
        self._ksum = (K[:, None, :] + K[None, :, :]).reshape(-1, self.n)
        self._kdiff = (K[:, None, :] - K[None, :, :]).reshape(-1, self.n)
        self._cc = np.outer(poly.coeffs, poly.coeffs.conj()).ravel()

    def _derivative(self, idx, x, y):
        if not idx:
            return np.abs(self.poly(x, y)) ** 2
        factor = np.ones(self._cc.shape, dtype=complex)
        for i in idx:
            factor = factor * (self._ksum[:, i] if i < self.n else 1j * self._kdiff[:, i - self.n])
        val = np.exp(x @ self._ksum.T + 1j * (y @ self._kdiff.T)) @ (self._cc * factor)
        return val.real


class LogField(PeriodicScalarField):
    """``coeff * log(base)`` for a positive base field."""

    def __init__(self, base, coeff=1.0, name=None):
        super().__init__(base.n, name or f"log({base.name})")
        self.base = base
        self.coeff = float(coeff)
        self.periodic = base.periodic
        self.oracle_kind = base.oracle_kind

    def _derivative(self, idx, x, y):
        u = self.base._derivative((), x, y)
        if np.any(u <= 0):
            raise DomainError(f"log of non-positive values of {self.base.name}")
        return log_chain(lambda sub: u if not sub else self.base._derivative(sub, x, y),
                         idx, self.coeff)


class LogModulusField(LogField):
    """``log|P|`` restricted to a caller-declared zero-free box in ``x``."""

    def __init__(self, poly, zero_free_box, name=None):
        if zero_free_box is None:
            raise ValueError("log-modulus fields need a declared zero-free box")
        super().__init__(LaurentAbs2Field(poly), 0.5, name or "laurent_logabs")
        box = np.asarray(zero_free_box, dtype=float)
        if box.shape != (poly.n, 2):
            raise ValueError(f"zero-free box must be {poly.n} pairs [lo, hi]")
        self.box = box

    def _derivative(self, idx, x, y):
        if np.any(x < self.box[:, 0] - 1e-12) or np.any(x > self.box[:, 1] + 1e-12):
            raise DomainError("point outside the declared zero-free box")
        return super()._derivative(idx, x, y)


class SumField(ScalarField):
    """Weighted sum of fields (periodic when every term is)."""

    def __init__(self, terms, weights=None, name=None):
        terms = list(terms)
        if not terms:
            raise ValueError("sum of zero fields")
        super().__init__(terms[0].n, name or "sum")
        if any(t.n != self.n for t in terms):
            raise ValueError("all summands must have the same dimension")
        self.terms = terms
        self.weights = [1.0] * len(terms) if weights is None else [float(w) for w in weights]
        self.periodic = all(t.periodic for t in terms)
        self.extendable_axes = frozenset.intersection(*[t.extendable_axes for t in terms])
        if any(t.oracle_kind != "analytic" for t in terms):
            self.oracle_kind = "finite-difference"

    def _derivative(self, idx, x, y):
        return sum(w * t._derivative(idx, x, y) for w, t in zip(self.weights, self.terms))


class QuadraticField(ScalarField):
    """``1/2 u^T Q u + b.u`` with ``u = (x, y)``; not periodic."""

    def __init__(self, Q, b=None, name="quadratic"):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] % 2:
            raise ValueError("Q must be a square matrix of even size 2n")
        super().__init__(Q.shape[0] // 2, name)
        self.Q = 0.5 * (Q + Q.T)
        self.b = np.zeros(2 * self.n) if b is None else np.asarray(b, dtype=float)

    def _derivative(self, idx, x, y):
        u = np.concatenate(np.broadcast_arrays(x, y), axis=-1)
        if not idx:
            return 0.5 * np.einsum("...i,ij,...j->...", u, self.Q, u) + u @ self.b
        if len(idx) == 1:
            return u @ self.Q[idx[0]] + self.b[idx[0]]
        return np.full(u.shape[:-1], self.Q[idx[0], idx[1]])


class CallableField(ScalarField):
    """Field given by an evaluator ``func(x, y)``; derivatives by finite differences."""

    oracle_kind = "finite-difference"

    def __init__(self, func, n, periodic=True, name="callable"):
        super().__init__(n, name)
        self.func = func
        self.periodic = periodic

    def _flat(self, u):
        return self.func(u[..., : self.n], u[..., self.n:])

    def _derivative(self, idx, x, y):
        if not idx:
            return np.asarray(self.func(x, y), dtype=float)
        u = np.concatenate(np.broadcast_arrays(x, y), axis=-1)
        return fd_partial(self._flat, indices_to_counts(idx, 2 * self.n), u)


def _parse_poly(desc, n):
    exps = desc.get("exponents", desc.get("k"))
    if exps is None:
        raise ValueError("Laurent descriptor needs 'exponents'")
    exps = np.atleast_2d(np.asarray(exps))
    if "coeffs" in desc:
        coeffs = desc["coeffs"]
    else:
        coeffs = [desc.get("coeff", 1.0)] * exps.shape[0]
    poly = LaurentPolynomial(coeffs, exps)
    if n is not None and poly.n != n:
        raise ValueError(f"exponent vectors have length {poly.n}, expected n={n}")
    return poly


def make_periodic_field(desc):
    """Build a field from a JSON-compatible descriptor.

    Kinds: ``pullback`` (``{"potential": {...}}``), ``laurent_re`` /
    ``laurent_im`` / ``laurent_abs2`` / ``laurent_logabs`` (``coeffs``,
    ``exponents``; ``laurent_logabs`` also needs ``zero_free_box``), and
    ``sum`` (``terms``, optional ``weights``).  Complex coefficients are
    written as ``[re, im]``.  ``extends_across_zero`` lists axes ``i`` for
    which the caller declares that the underlying ``g`` extends PSH across
    ``z_i = 0``.
    """
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ValueError("field descriptor must be an object with a 'kind'")
    kind = desc["kind"]
    n = desc.get("n")
    if kind == "pullback":
        pd = dict(desc.get("potential", {}))
        if "kind" not in pd:
            raise ValueError("pullback descriptor needs a potential with a 'kind'")
        pot = make_builtin_potential(pd.pop("kind"), pd.pop("n", n or 1), pd.pop("params", pd))
        f = PullbackField(pot)
    elif kind in ("laurent_re", "laurent_im"):
        f = LaurentPartField(_parse_poly(desc, n), kind[-2:], name=kind)
    elif kind == "laurent_abs2":
        f = LaurentAbs2Field(_parse_poly(desc, n))
    elif kind == "laurent_logabs":
        if "zero_free_box" not in desc:
            raise ValueError("laurent_logabs requires a declared 'zero_free_box'")
        f = LogModulusField(_parse_poly(desc, n), desc["zero_free_box"])
    elif kind == "sum":
        terms = [make_periodic_field(t) for t in desc.get("terms", [])]
        f = SumField(terms, desc.get("weights"))
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    if "extends_across_zero" in desc:
        f.extendable_axes = frozenset(int(i) for i in desc["extends_across_zero"])
    if "name" in desc:
        f.name = desc["name"]
    return f


# --------------------------------------------------------------------------
# Torus quadrature
# --------------------------------------------------------------------------

# Cap on N**n so that n = 3 stays within memory; see QuadratureRule.max_for.
MAX_NODES = 2**21


@dataclass(frozen=True)
class QuadratureRule:
    """Uniform trapezoidal rule with ``N`` nodes per angle on ``[0, 2pi)^n``."""

    N: int
    n: int = 1
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 1 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two, got {self.N}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        ang = TWO_PI * np.arange(self.N) / self.N
        grids = np.meshgrid(*([ang] * self.n), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def weight(self):
        return (TWO_PI / self.N) ** self.n

    @staticmethod
    def max_for(n):
        """Largest allowed ``N`` in dimension ``n`` (1024, or less if ``N**n`` is too big)."""
        N = 1024
        while N**n > MAX_NODES:
            N //= 2
        return N


def _apply_rule(f, x, rule, chunk=2**22):
    x = np.asarray(x, dtype=float)
    batch = x.reshape(-1, x.shape[-1])
    M = rule.nodes.shape[0]
    step = max(1, chunk // M)
    out = np.empty(batch.shape[0])
    for s in range(0, batch.shape[0], step):
        xb = batch[s:s + step, None, :]
        vals = np.asarray(f(np.broadcast_to(xb, (xb.shape[0], M, x.shape[-1])),
                            rule.nodes[None, :, :]), dtype=float)
        out[s:s + step] = np.sum(np.ascontiguousarray(vals), axis=-1)
    return out.reshape(x.shape[:-1]) * rule.weight


def torus_quadrature(field, x, rule=None, refine=True, rtol=1e-10):
    """Integral of ``field(x, .)`` over ``[0, 2pi)^n`` (no normalisation).

    ``field`` is a :class:`ScalarField` or any callable ``f(x, y)`` that
    broadcasts; fields flagged ``y_independent`` skip the sum.  The default
    rule starts at 8 nodes per angle.  With ``refine`` the node count doubles from ``rule.N``
    until the change is below ``rtol`` relative to ``int |f|`` (plus an
    absolute floor of ``1e-13`` per unit torus volume, so functions that
    vanish identically at ``x`` terminate) or the per-angle cap
    (:meth:`QuadratureRule.max_for`) is reached.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if rule is None:
        rule = QuadratureRule(8, n)
    if rule.n != n:
        raise ValueError("quadrature rule dimension does not match the point")
    if getattr(field, "y_independent", False):
        return TWO_PI**n * np.asarray(field(x, np.zeros_like(x)), dtype=float)
    val = _apply_rule(field, x, rule)
    if not refine:
        return val
    cap = QuadratureRule.max_for(n)
    N = rule.N
    floor = 1e-13 * TWO_PI**n
    scale = _apply_rule(lambda a, b: np.abs(field(a, b)), x, rule)
    while N < cap:
        N *= 2
        new = _apply_rule(field, x, QuadratureRule(N, n))
        done = np.all(np.abs(new - val) <= rtol * scale + floor)
        val = new
        if done:
            break
    return val


# --------------------------------------------------------------------------
# Regions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with a sampling step per axis."""

    lower: tuple
    upper: tuple
    step: tuple

    def __post_init__(self):
        lo, hi, st = (tuple(float(v) for v in np.atleast_1d(a))
                      for a in (self.lower, self.upper, self.step))
        if not (len(lo) == len(hi) == len(st)) or not lo:
            raise ValueError("box bounds and steps must have the same nonzero length")
        for a, b, s in zip(lo, hi, st):
            if not a < b:
                raise ValueError(f"empty box axis [{a}, {b}]")
            if not s > 0:
                raise ValueError(f"step must be positive, got {s}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "step", st)

    @classmethod
    def cube(cls, lo, hi, step, n):
        return cls((lo,) * n, (hi,) * n, (step,) * n)

    @classmethod
    def parse(cls, specs, n):
        """From ``"a:b:s"`` strings, one per axis or a single one for all axes."""
        specs = list(specs)
        if len(specs) == 1:
            specs = specs * n
        if len(specs) != n:
            raise ValueError(f"need 1 or {n} range specs, got {len(specs)}")
        parts = []
        for s in specs:
            bits = s.split(":")
            if len(bits) != 3:
                raise ValueError(f"range must look like a:b:s, got {s!r}")
            parts.append([float(b) for b in bits])
        lo, hi, st = zip(*parts)
        return cls(lo, hi, st)

    @property
    def n(self):
        return len(self.lower)

    def axes(self):
        out = []
        for a, b, s in zip(self.lower, self.upper, self.step):
            count = int(np.floor((b - a) / s + 1e-9)) + 1
            out.append(a + s * np.arange(count))
        return out

    def shape(self):
        return tuple(len(a) for a in self.axes())

    def grid(self):
        """Grid points in lexicographic order, shape ``(M, n)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample(self, rng, size):
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + (hi - lo) * rng.random((size, self.n))

    def contains(self, x, pad=0.0):
        x = np.asarray(x)
        return bool(np.all(x >= np.array(self.lower) - pad) and np.all(x <= np.array(self.upper) + pad))


# --------------------------------------------------------------------------
# Field catalog
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldEntry:
    name: str
    field: ScalarField
    psh: bool
    harmonic: bool = False


def _declare(f, axes):
    f.extendable_axes = frozenset(axes)
    return f


def field_catalog(n, include_controls=True):
    """Test fields in dimension ``n``: squared- and log-modulus Laurent
    families, pluriharmonic parts, pullbacks of convex potentials, and (with
    ``include_controls``) non-PSH negative controls.

    ``extendable_axes`` is set only where the underlying function of ``z``
    extends smoothly and PSH across ``z_i = 0``.
    """
    eye = np.eye(n, dtype=int)
    all_axes = range(n)
    out = []

    coords = SumField([LaurentAbs2Field(LaurentPolynomial([1.0], [eye[j]])) for j in all_axes],
                      name="abs2_coords")
    out.append(FieldEntry("abs2_coords", _declare(coords, all_axes), True))

    poly = LaurentPolynomial([1.0] * (n + 2), np.vstack([np.zeros(n, int), eye, np.ones(n, int)]))
    out.append(FieldEntry("abs2_poly", _declare(LaurentAbs2Field(poly, "abs2_poly"), all_axes), True))

    terms = [LaurentAbs2Field(LaurentPolynomial([1.0, 1.0], [eye[0], -eye[0]]))]
    terms += [LaurentAbs2Field(LaurentPolynomial([1.0], [eye[j]])) for j in range(1, n)]
    laurent = SumField(terms, name="abs2_laurent")
    out.append(FieldEntry("abs2_laurent", _declare(laurent, range(1, n)), True))

    c = 10.0 * n * np.exp(3.0)
    shifted = LaurentPolynomial([c] + [1.0] * n, np.vstack([np.zeros(n, int), eye]))
    box = [[-np.inf, 3.0]] * n
    out.append(FieldEntry("logabs_shifted",
                          _declare(LogModulusField(shifted, box, "logabs_shifted"), all_axes),
                          True, harmonic=True))
    out.append(FieldEntry("logabs_monomial",
                          LogModulusField(LaurentPolynomial([1.0], [eye[0]]), box, "logabs_monomial"),
                          True))

    k = np.ones(n, dtype=int)
    k[0] = 2
    re = LaurentPartField(LaurentPolynomial([1.0], [k]), "re", "re_monomial")
    out.append(FieldEntry("re_monomial", _declare(re, all_axes), True, harmonic=True))

    extend = {"flat", "fubini_study"}
    for name in _EXPECTED:
        f = PullbackField(make_builtin_potential(name, n), f"pullback_{name}")
        out.append(FieldEntry(f.name, _declare(f, all_axes if name in extend else ()), True))

    mixed = SumField([PullbackField(make_builtin_potential("flat", n)),
                      LaurentPartField(LaurentPolynomial([1.0], [2 * eye[0]]), "re")], name="mixed")
    out.append(FieldEntry("mixed", _declare(mixed, all_axes), True))

    if include_controls:
        out.append(FieldEntry("neg_abs2_coords",
                              _declare(SumField([coords], [-1.0], name="neg_abs2_coords"), ()),
                              False))
        if n >= 2:
            q = np.zeros((n, n))
            q[0, 0], q[1, 1] = 2.0, -2.0
            out.append(FieldEntry("saddle", PullbackField(QuadraticPotential(q), "saddle"), False))
    return out
