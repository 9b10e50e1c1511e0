"""Levi forms, plurisubharmonicity and torus-averaged convexity.

The Levi form of ``f`` at ``p`` is the symmetric form ``i ddbar f(., J.)``.
In the real basis ``(dx_1..dx_n, dy_1..dy_n)`` it reads::

    L = 1/2 [[A, B^T],
             [B, A  ]]

    A_jk = f_{x_j x_k} + f_{y_j y_k}
    B_jk = f_{x_j y_k} - f_{x_k y_j}

which for ``n = 2`` is, entry for entry, the classical 4x4 matrix in the
basis ``(x, xi, y, eta)``.  ``f`` is PSH when ``L`` is positive
semi-definite everywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .funcspace import (
    TWO_PI,
    Box,
    QuadratureRule,
    ScalarField,
    fd_partial,
    torus_quadrature,
)

SEED = 0x5EED


@dataclass(frozen=True)
class LeviForm:
    n: int
    matrix: np.ndarray
    A: np.ndarray
    B: np.ndarray

    @property
    def trace(self):
        return np.trace(self.matrix, axis1=-2, axis2=-1)

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)


def levi_form(f: ScalarField, x, y) -> LeviForm:
    """Assemble the Levi form of ``f`` at ``(x, y)`` (batched over leading axes)."""
    n = f.n
    H = f.hessian(x, y)
    Hxx, Hyy, Hxy = H[..., :n, :n], H[..., n:, n:], H[..., :n, n:]
    A = Hxx + Hyy
    B = Hxy - np.swapaxes(Hxy, -1, -2)
    top = np.concatenate([A, np.swapaxes(B, -1, -2)], axis=-1)
    bottom = np.concatenate([B, A], axis=-1)
    return LeviForm(n, 0.5 * np.concatenate([top, bottom], axis=-2), A, B)


def complex_hessian(f: ScalarField, x, y):
    """Hermitian matrix ``d^2 f / dw_j dwbar_k``."""
    lf = levi_form(f, x, y)
    return 0.25 * (lf.A + 1j * lf.B)


def laplacian(f: ScalarField, x, y):
    n = f.n
    return sum(f.derivative((i, i), x, y) for i in range(2 * n))


@dataclass(frozen=True)
class PSHReport:
    holds: bool
    min_eigenvalue: float
    witness: tuple
    tol: float


def _torus_points(box: Box, N):
    xs = box.grid()
    ys = QuadratureRule(N, box.n).nodes
    X = np.repeat(xs, len(ys), axis=0)
    Y = np.tile(ys, (len(xs), 1))
    return X, Y


def is_psh(f: ScalarField, region: Box, N=8, tol=None) -> PSHReport:
    """Minimum Levi-form eigenvalue over ``region x (N uniform angles)^n``.

    The check at a point passes when the smallest eigenvalue is at least
    ``-tol``; by default ``tol = 1e-8 * (1 + ||L||)`` pointwise.
    """
    X, Y = _torus_points(region, N)
    ev = levi_form(f, X, Y).eigenvalues()
    lo = ev[:, 0]
    norm = np.max(np.abs(ev), axis=-1)
    thresh = 1e-8 * (1.0 + norm) if tol is None else np.full_like(lo, tol)
    k = int(np.argmin(lo + thresh))
    holds = bool(np.all(lo >= -thresh))
    witness = (tuple(X[k]), tuple(Y[k]))
    return PSHReport(holds, float(lo.min()), witness, float(thresh[k]))


def torus_average(f, x, rule=None):
    """Average of ``f(x, .)`` over the torus: ``(2pi)^-n * int f(x, y) dy``."""
    x = np.asarray(x, dtype=float)
    return torus_quadrature(f, x, rule) / TWO_PI ** x.shape[-1]


_GOLD = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_max(g, lo, hi, tol):
    """Vectorised golden-section maximisation of ``g`` on ``[lo, hi]`` (arrays)."""
    width = float(np.max(hi - lo))
    iters = int(np.ceil(np.log(tol / width) / np.log(_GOLD))) if width > tol else 0
    a, b = lo.copy(), hi.copy()
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(iters):
        # left: maximum lies in [a, d]; otherwise in [c, b]
        left = gc > gd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        new = np.where(left, b - _GOLD * (b - a), a + _GOLD * (b - a))
        gnew = g(new)
        c, d, gc, gd = (np.where(left, new, d), np.where(left, c, new),
                        np.where(left, gnew, gd), np.where(left, gc, gnew))
    mid = 0.5 * (a + b)
    return mid, g(mid)


def _default_angles(n):
    return {1: 64, 2: 32}.get(n, 16)


def hadamard_max(f, x, N=None, levels=4, angle_tol=1e-10):
    """``M(x) = max_y f(x, y)``: grid search then coordinate golden-section refinement.

    Returns the maximum value; batched over the leading axes of ``x``.  The
    default grid has 64, 32 or 16 angles per variable for n = 1, 2, >= 3.
    """
    value, _ = hadamard_argmax(f, x, N, levels, angle_tol)
    return value


def hadamard_argmax(f, x, N=None, levels=4, angle_tol=1e-10):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    N = _default_angles(n) if N is None else N
    xb = x.reshape(-1, n)
    nodes = QuadratureRule(N, n).nodes
    vals = np.asarray(f(np.broadcast_to(xb[:, None, :], (len(xb), len(nodes), n)),
                        nodes[None, :, :]), dtype=float)
    k = np.argmax(vals, axis=1)
    best_y = nodes[k].copy()
    best = vals[np.arange(len(xb)), k]
    half = TWO_PI / N
    for _ in range(levels):
        for j in range(n):
            def along(t, j=j):
                y = best_y.copy()
                y[:, j] = t
                return np.asarray(f(xb, y), dtype=float)

            t, v = _golden_max(along, best_y[:, j] - half, best_y[:, j] + half, angle_tol)
            better = v > best
            best = np.where(better, v, best)
            best_y[better, j] = t[better]
        half = max(half / 4.0, 10 * angle_tol)
    return best.reshape(x.shape[:-1]), np.mod(best_y, TWO_PI).reshape(x.shape)


# --------------------------------------------------------------------------
# Convexity verdicts
# --------------------------------------------------------------------------

CONVEXITY_TAGS = ("strictly-convex", "convex", "linear", "concave", "strictly-concave",
                  "indefinite")


@dataclass(frozen=True)
class ConvexityVerdict:
    tag: str
    hessian_min: float
    hessian_max: float
    midpoint_convex_gap: float   # max of F(mid) - (F(a)+F(b))/2
    midpoint_concave_gap: float  # max of (F(a)+F(b))/2 - F(mid)
    witnesses: list = field(default_factory=list)
    tol: float = 0.0

    @property
    def is_convex(self):
        return self.tag in ("strictly-convex", "convex", "linear")

    @property
    def is_concave(self):
        return self.tag in ("strictly-concave", "concave", "linear")


def _fd_hessians(F, pts, h):
    n = pts.shape[-1]
    out = np.empty(pts.shape[:-1] + (n, n))
    for i in range(n):
        for j in range(i, n):
            alpha = [0] * n
            alpha[i] += 1
            alpha[j] += 1
            out[..., i, j] = out[..., j, i] = fd_partial(F, alpha, pts, h=h)
    return out


def _grid_curvatures(vals, steps):
    """Directional second differences ``F(p+d) - 2F(p) + F(p-d)`` over ``|d|^2``
    at interior grid points, for every neighbour direction ``d``.

    Unlike a discrete Hessian these are exactly non-negative for convex
    samples, so no discretisation error enters the sign.
    """
    n = vals.ndim
    inner = tuple(slice(1, -1) for _ in range(n))
    steps = np.asarray(steps, dtype=float)
    dirs = [d for d in itertools.product((-1, 0, 1), repeat=n) if any(d) and d[next(
        k for k in range(n) if d[k])] > 0]

    def shifted(offs):
        return vals[tuple(slice(1 + o, s - 1 + o) for o, s in zip(offs, vals.shape))]

    out = []
    for d in dirs:
        m = tuple(-v for v in d)
        norm2 = float(np.sum((np.array(d) * steps) ** 2))
        out.append((shifted(d) - 2 * vals[inner] + shifted(m)) / norm2)
    return np.stack([c.ravel() for c in out], axis=-1), vals[inner].ravel()


def check_convexity(F, region: Box, tol=1e-6, segments=1000, seed=SEED, h=1e-2):
    """Classify ``F`` on ``region`` as convex / concave / linear / indefinite.

    Two independent tests must agree: the eigenvalues of a finite-difference
    Hessian at every grid point of ``region``, and the midpoint inequality on
    ``segments`` random segments.  ``F`` is either a callable on ``(..., n)``
    arrays, or an array of samples on ``region.grid()``; then curvature comes
    from directional second differences toward every grid neighbour and
    segments join grid points whose midpoint is also a grid point.

    ``tol`` is relative: a value ``t`` at a point where ``|F| = s`` counts as
    zero when ``|t| <= tol * max(1, s)``.
    """
    rng = np.random.default_rng(seed)
    n = region.n
    if callable(F):
        pts = region.grid()
        ev = np.linalg.eigvalsh(_fd_hessians(F, pts, h))
        curv_lo, curv_hi = ev[:, 0], ev[:, -1]
        fscale = np.abs(F(pts))
        hpts = pts
        a = region.sample(rng, segments)
        b = region.sample(rng, segments)
        fa, fb, fm = F(a), F(b), F(0.5 * (a + b))
    else:
        shape = region.shape()
        vals = np.asarray(F, dtype=float).reshape(shape)
        if min(shape) < 3:
            raise ValueError("sampled convexity check needs at least 3 points per axis")
        curv, centre = _grid_curvatures(vals, region.step)
        curv_lo, curv_hi = curv.min(axis=1), curv.max(axis=1)
        fscale = np.abs(centre)
        axes = region.axes()
        inner = np.meshgrid(*[ax[1:-1] for ax in axes], indexing="ij")
        hpts = np.stack([g.ravel() for g in inner], axis=-1)
        shp = np.array(shape)
        ia = rng.integers(0, shp, size=(segments, n))
        ib = rng.integers(0, shp, size=(segments, n))
        odd = (ib - ia) % 2 == 1
        ib = np.where(odd, np.where(ib > 0, ib - 1, ib + 1), ib)
        im = (ia + ib) // 2
        fa, fb, fm = (vals[tuple(ix.T)] for ix in (ia, ib, im))
        a = np.stack([axes[k][ia[:, k]] for k in range(n)], axis=-1)
        b = np.stack([axes[k][ib[:, k]] for k in range(n)], axis=-1)

    thr = tol * np.maximum(1.0, fscale)
    lo, hi = curv_lo / thr, curv_hi / thr
    gap = fm - 0.5 * (fa + fb)
    rgap = gap / (tol * np.maximum.reduce([np.ones_like(fa), np.abs(fa), np.abs(fb), np.abs(fm)]))
    hmin, hmax = float(curv_lo.min()), float(curv_hi.max())
    cvx_gap, ccv_gap = float(gap.max()), float((-gap).max())

    convex_ok = lo.min() >= -1 and rgap.max() <= 1
    concave_ok = hi.max() <= 1 and (-rgap).max() <= 1
    if convex_ok and concave_ok:
        tag = "linear"
    elif convex_ok:
        tag = "strictly-convex" if lo.min() > 1 else "convex"
    elif concave_ok:
        tag = "strictly-concave" if hi.max() < -1 else "concave"
    else:
        tag = "indefinite"

    kmin, kmax = int(np.argmin(lo)), int(np.argmax(hi))
    kg = int(np.argmax(np.abs(rgap)))
    witnesses = [
        ("hessian_min", tuple(hpts[kmin]), float(curv_lo[kmin])),
        ("hessian_max", tuple(hpts[kmax]), float(curv_hi[kmax])),
        ("midpoint", (tuple(a[kg]), tuple(b[kg])), float(gap[kg])),
    ]
    return ConvexityVerdict(tag, hmin, hmax, cvx_gap, ccv_gap, witnesses, tol)


# --------------------------------------------------------------------------
# Monotonicity and maximum principles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MonotonicityReport:
    axis: int
    statistic: str
    nondecreasing: bool
    max_decrease: float
    constant: bool
    separately_harmonic: bool | None
    kernel_consistent: bool | None
    limit_value: float

    @property
    def passed(self):
        return self.nondecreasing and self.kernel_consistent is not False


def monotone_in_radius(f, axis, x_range=(-12.0, 2.0, 0.25), base=None, extendable=False,
                       statistic="average", tol=1e-10, N=8):
    """Check that the torus average (or maximum) is non-decreasing in ``x_axis``.

    ``extendable`` is the caller's declaration that the function extends as
    a PSH function across ``z_axis = 0``; it cannot be verified numerically
    and the check refuses to run without it.  For averages, also reports
    whether constancy along the axis coincides with the vanishing of the
    Laplacian in ``z_axis`` (harmonic in that variable).
    """
    if not extendable and axis not in getattr(f, "extendable_axes", ()):
        raise ValueError(f"field is not declared to extend PSH across z_{axis} = 0")
    n = f.n
    if not 0 <= axis < n:
        raise ValueError(f"axis {axis} out of range for n={n}")
    lo, hi, st = x_range
    ts = lo + st * np.arange(int(np.floor((hi - lo) / st + 1e-9)) + 1)
    if base is None:
        base = list(itertools.product([-1.0, 0.0, 0.5], repeat=n - 1))
    base = np.atleast_2d(np.asarray(base, dtype=float))
    base = base.reshape(len(base), n - 1)
    pts = np.empty((len(base), len(ts), n))
    pts[..., axis] = ts[None, :]
    others = [k for k in range(n) if k != axis]
    pts[..., others] = base[:, None, :]

    if statistic == "average":
        vals = torus_average(f, pts, QuadratureRule(N, n))
    elif statistic == "max":
        vals = hadamard_max(f, pts)
    else:
        raise ValueError("statistic must be 'average' or 'max'")

    scale = np.maximum(1.0, np.abs(vals))
    drops = -(np.diff(vals, axis=1))
    max_decrease = float(drops.max()) if drops.size else 0.0
    nondecreasing = bool(np.all(drops <= tol * scale[:, 1:]))
    spread = vals.max(axis=1) - vals.min(axis=1)
    constant = bool(np.all(spread <= 1e-9 * scale.max(axis=1)))

    harmonic = consistent = None
    if statistic == "average":
        nodes = QuadratureRule(8, n).nodes
        X = np.repeat(pts.reshape(-1, n), len(nodes), axis=0)
        Y = np.tile(nodes, (pts.shape[0] * pts.shape[1], 1))
        lap = f.derivative((axis, axis), X, Y) + f.derivative((axis + n, axis + n), X, Y)
        ref = 1.0 + np.abs(f.derivative((axis, axis), X, Y)) + np.abs(
            f.derivative((axis + n, axis + n), X, Y))
        harmonic = bool(np.all(np.abs(lap) <= 1e-8 * ref))
        consistent = constant == harmonic
    return MonotonicityReport(axis, statistic, nondecreasing, max_decrease, constant, harmonic,
                              consistent, float(vals[0, 0]))


@dataclass(frozen=True)
class BoundaryMaxReport:
    radii: tuple
    interior_max: float
    boundary_max: float
    passed: bool


def distinguished_boundary_max(f, radii, fractions=None, N=16, tol=1e-9):
    """Compare the maximum of ``f`` inside a polydisk with its maximum on the
    distinguished boundary torus ``|z_i| = r_i``.

    Interior samples sit at moduli ``s * r_i`` for ``s`` in ``fractions``
    (default ``0.02 .. 0.98``) times ``N`` uniform angles per variable.
    """
    r = np.asarray(radii, dtype=float)
    n = len(r)
    if np.any(r <= 0):
        raise ValueError("radii must be positive")
    if fractions is None:
        fractions = np.linspace(0.02, 0.98, 13 if n == 1 else 7)
    logs = [np.log(np.asarray(fractions) * ri) for ri in r]
    xs = np.stack([m.ravel() for m in np.meshgrid(*logs, indexing="ij")], axis=-1)
    nodes = QuadratureRule(N, n).nodes
    interior = float(np.max(f(np.broadcast_to(xs[:, None, :], (len(xs), len(nodes), n)),
                              nodes[None, :, :])))
    boundary = float(hadamard_max(f, np.log(r)))
    return BoundaryMaxReport(tuple(r), interior, boundary, boundary >= interior - tol)


@dataclass(frozen=True)
class MaxPrincipleReport:
    interior_maximum: bool
    constant: bool
    holds: bool
    argmax: tuple


def maximum_principle(F, region: Box, tol=1e-9):
    """If sampled ``F`` peaks strictly inside ``region`` it must be constant there."""
    shape = region.shape()
    vals = (F(region.grid()) if callable(F) else np.asarray(F, dtype=float)).reshape(shape)
    k = np.unravel_index(int(np.argmax(vals)), shape)
    interior = all(0 < ki < s - 1 for ki, s in zip(k, shape))
    constant = bool(vals.max() - vals.min() <= tol * max(1.0, float(np.abs(vals).max())))
    point = tuple(float(ax[ki]) for ax, ki in zip(region.axes(), k))
    return MaxPrincipleReport(interior, constant, (not interior) or constant, point)
