"""Metric, volume density and Ricci curvature of torus-invariant Kahler potentials.

Conventions (log coordinates ``w = x + iy``):

* ``h_{jk} = d^2 phi / dw_j dwbar_k = 1/4 Hess_x phi``,
* ``H = det h`` is the anti-canonical density,
* ``R = 1/4 Hess_x(-log H)`` is the Ricci form as a Hermitian matrix, so that
  Kahler-Einstein metrics satisfy ``R = lambda * h``.

With these choices the flat metric ``phi = sum exp(2 x_j)`` is the Euclidean
one and Fubini-Study ``log(1 + sum exp(2 x_j))`` has ``R = 2 h``.

The Levi form of ``-log H`` (see :func:`tklab.psh.levi_form`) has ``x``-block
``2 R``; :func:`ricci_levi_embedding` performs that doubling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .funcspace import Box, InvariantPotential, LogField, PeriodicScalarField, fd_partial
from .psh import levi_form

FD_RICCI_STEP = 0.05


class NotKahlerError(ValueError):
    """The Hessian of the potential is not positive definite at some point."""

    def __init__(self, point, eigenvalue):
        self.point = tuple(np.atleast_1d(point).tolist())
        self.eigenvalue = float(eigenvalue)
        super().__init__(f"not Kahler at x={self.point}: Hessian eigenvalue {self.eigenvalue:.6g}")


@dataclass(frozen=True)
class MetricAtPoint:
    n: int
    h: np.ndarray
    H: np.ndarray


@dataclass(frozen=True)
class RicciAtPoint:
    n: int
    R: np.ndarray
    eig_min: np.ndarray
    eig_max: np.ndarray


def _positive_hessian(phi: InvariantPotential, x):
    x = np.asarray(x, dtype=float)
    P = phi.hessian(x)
    ev = np.linalg.eigvalsh(P)[..., 0]
    if np.any(~(ev > 0)):
        k = np.unravel_index(int(np.nanargmin(np.where(np.isnan(ev), -np.inf, ev))), ev.shape)
        raise NotKahlerError(x[k], ev[k])
    return P


def log_det_hessian(phi: InvariantPotential, x):
    """``log det Hess phi``; uses the potential's cancellation-free route when
    it has one, otherwise checks positivity and takes ``slogdet``."""
    ld = phi.stable_logdet(x)
    if ld is not None:
        return ld
    return np.linalg.slogdet(_positive_hessian(phi, x))[1]


def metric_at(phi: InvariantPotential, x) -> MetricAtPoint:
    """``h = 1/4 Hess phi`` and ``H = det h``; raises :class:`NotKahlerError`."""
    h = 0.25 * _positive_hessian(phi, x)
    return MetricAtPoint(phi.n, h, np.exp(log_det_hessian(phi, x) - phi.n * np.log(4.0)))


def ricci_potential(phi: InvariantPotential, x):
    """``-log det(1/4 Hess phi)``."""
    return phi.n * np.log(4.0) - log_det_hessian(phi, x)


def _logdet_derivatives(phi, x):
    """Hessian inverse, ``Pinv @ dP_a`` and the two log-det second-derivative traces."""
    P = _positive_hessian(phi, x)
    T3 = phi.tensor(3, x)
    T4 = phi.tensor(4, x)
    Pinv = np.linalg.inv(P)
    Q = np.einsum("...ik,...akj->...aij", Pinv, T3)
    t1 = np.einsum("...ij,...abji->...ab", Pinv, T4)
    t2 = np.einsum("...aij,...bji->...ab", Q, Q)
    return P, Pinv, Q, t1 - t2


def logdet_gradient(phi, x):
    """Gradient of ``log det Hess phi``."""
    _, _, Q, _ = _logdet_derivatives(phi, x)
    return np.trace(Q, axis1=-2, axis2=-1)


def logdet_hessian(phi, x):
    """Hessian of ``log det Hess phi`` (analytic, or FD for FD potentials)."""
    if phi.oracle_kind == "analytic":
        return _logdet_derivatives(phi, x)[3]
    return -4.0 * ricci_form(phi, x).R


def ricci_form(phi: InvariantPotential, x) -> RicciAtPoint:
    """``R = 1/4 Hess_x(-log det Hess phi)`` at ``x`` (batched).

    Analytic through ``d log det P = tr(P^-1 dP)`` when the potential has
    closed-form derivatives; otherwise fourth-order central differences of
    :func:`ricci_potential` with step ``FD_RICCI_STEP``.
    """
    x = np.asarray(x, dtype=float)
    n = phi.n
    if phi.oracle_kind == "analytic":
        R = -0.25 * _logdet_derivatives(phi, x)[3]
    else:
        R = np.empty(x.shape[:-1] + (n, n))
        f = lambda p: ricci_potential(phi, p)
        for i in range(n):
            for j in range(i, n):
                alpha = [0] * n
                alpha[i] += 1
                alpha[j] += 1
                R[..., i, j] = R[..., j, i] = 0.25 * fd_partial(f, alpha, x, h=FD_RICCI_STEP)
    R = 0.5 * (R + np.swapaxes(R, -1, -2))
    ev = np.linalg.eigvalsh(R)
    return RicciAtPoint(n, R, ev[..., 0], ev[..., -1])


def ricci_levi_embedding(R):
    """The ``2n x 2n`` Levi-form matrix of ``-log H`` for an invariant metric: ``diag(2R, 2R)``."""
    R = np.asarray(R)
    z = np.zeros_like(R)
    top = np.concatenate([2 * R, z], axis=-1)
    return np.concatenate([top, np.concatenate([z, 2 * R], axis=-1)], axis=-2)


SIGN_TAGS = ("positive", "semi-positive", "zero", "semi-negative", "negative", "indefinite")


@dataclass(frozen=True)
class SignClassification:
    tag: str
    eig_min: float
    eig_max: float
    witnesses: list = field(default_factory=list)
    tol: float = 0.0


def classify_eigenvalues(lo, hi, points, tol):
    lo, hi = np.asarray(lo).ravel(), np.asarray(hi).ravel()
    emin, emax = float(lo.min()), float(hi.max())
    if max(abs(emin), abs(emax)) <= tol:
        tag = "zero"
    elif emin >= tol:
        tag = "positive"
    elif emax <= -tol:
        tag = "negative"
    elif emin >= -tol:
        tag = "semi-positive"
    elif emax <= tol:
        tag = "semi-negative"
    else:
        tag = "indefinite"
    kmin, kmax = int(np.argmin(lo)), int(np.argmax(hi))
    witnesses = [("min", tuple(np.atleast_1d(points[kmin]).tolist()), emin),
                 ("max", tuple(np.atleast_1d(points[kmax]).tolist()), emax)]
    return SignClassification(tag, emin, emax, witnesses, tol)


def classify_ricci(phi: InvariantPotential, region: Box, tol=1e-7, chunk=4096):
    """Sign of the Ricci form over the grid of ``region``."""
    pts = region.grid()
    lo = np.empty(len(pts))
    hi = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        r = ricci_form(phi, pts[s:s + chunk])
        lo[s:s + chunk], hi[s:s + chunk] = r.eig_min, r.eig_max
    return classify_eigenvalues(lo, hi, pts, tol)


class DensityField(PeriodicScalarField):
    """``H(x) = det(1/4 Hess phi(x))`` as a ``y``-independent field.

    Derivatives up to order 2 are exact, using the potential's third and
    fourth derivatives.
    """

    y_independent = True

    def __init__(self, phi: InvariantPotential):
        super().__init__(phi.n, f"H[{phi.name}]")
        self.phi = phi
        self.oracle_kind = phi.oracle_kind

    def _derivative(self, idx, x, y):
        shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
        x = np.broadcast_to(x, shape + (self.n,))
        if any(i >= self.n for i in idx):
            return np.zeros(shape)
        P = self.phi.hessian(x)
        H = np.linalg.det(0.25 * P)
        if not idx:
            return H
        _, _, Q, second = _logdet_derivatives(self.phi, x)
        g = np.trace(Q, axis1=-2, axis2=-1)
        if len(idx) == 1:
            return H * g[..., idx[0]]
        a, b = idx
        return H * (g[..., a] * g[..., b] + second[..., a, b])


def ricci_general(H: PeriodicScalarField, x, y):
    """Levi form of ``-log H`` at ``(x, y)`` for a positive density field."""
    return levi_form(LogField(H, -1.0), x, y)
