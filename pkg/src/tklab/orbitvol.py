"""J-volume of the canonical tori, volume convexity, moment maps and the
critical (minimal Lagrangian) orbit.

For an invariant potential the orbit through ``x`` has J-volume::

    Vol(x) = (2 pi)^n sqrt(H(x)) = pi^n sqrt(det Hess phi(x))

and ``Hess log Vol = -2 R`` with ``R`` the Ricci matrix of
:mod:`tklab.kahler`, so the sign of the Ricci curvature is the concavity of
``log Vol``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .funcspace import (
    TWO_PI,
    Box,
    InvariantPotential,
    PeriodicScalarField,
    QuadratureRule,
    ScalarField,
    fd_partial,
    torus_quadrature,
)
from .kahler import (
    NotKahlerError,
    _positive_hessian,
    classify_eigenvalues,
    classify_ricci,
    log_det_hessian,
    logdet_gradient,
    logdet_hessian,
    ricci_form,
    ricci_general,
)
from .psh import check_convexity, levi_form


def j_volume(phi: InvariantPotential, x):
    """J-volume ``pi^n sqrt(det Hess phi(x))`` of the orbit over ``x``."""
    return np.exp(log_j_volume(phi, x))


def log_j_volume(phi: InvariantPotential, x):
    return phi.n * np.log(np.pi) + 0.5 * log_det_hessian(phi, x)


def j_volume_general(H: ScalarField, x, rule=None):
    """``int sqrt(H(x, y)) dy`` over the torus for a positive density field."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    probe = QuadratureRule(16, n).nodes
    xb = x.reshape(-1, n)
    hv = H(np.broadcast_to(xb[:, None, :], (len(xb), len(probe), n)), probe[None])
    if np.any(hv <= 0):
        raise ValueError(f"density {H.name} is not positive on the orbit")
    return torus_quadrature(lambda a, b: np.sqrt(H(a, b)), x, rule)


def moment_map(phi: InvariantPotential, x):
    """``mu(x) = 1/2 grad phi(x)``."""
    return 0.5 * phi.gradient(x)


def symplectic_matrix(phi: InvariantPotential, x):
    """``omega(e_a, e_b)`` in the basis ``(dx, dy)`` from the Levi form: ``omega(u, v) = L(u, -Jv)``."""
    from .funcspace import PullbackField

    n = phi.n
    x = np.asarray(x, dtype=float)
    L = levi_form(PullbackField(phi), x, np.zeros_like(x)).matrix
    J = np.block([[np.zeros((n, n)), -np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    return L @ (-J)


def hamiltonian_residual(phi: InvariantPotential, x):
    """Max over ``j`` of ``|d(mu_j) - omega(X_j, .)|`` at ``x``.

    ``X_j = -d/dy_j`` is the fundamental vector field of the ``j``-th circle
    factor for the right action.  ``d(mu_j)`` is taken by finite differences
    over all ``2n`` real coordinates; ``omega`` comes from the Levi form.
    """
    n = phi.n
    x = np.asarray(x, dtype=float)
    omega = symplectic_matrix(phi, x)
    u0 = np.concatenate([x, np.zeros_like(x)], axis=-1)
    worst = np.zeros(x.shape[:-1])
    for j in range(n):
        mu_j = lambda u, j=j: moment_map(phi, u[..., :n])[..., j]
        dmu = np.stack([fd_partial(mu_j, np.eye(2 * n, dtype=int)[a], u0) for a in range(2 * n)],
                       axis=-1)
        contraction = -omega[..., n + j, :]
        err = np.max(np.abs(dmu - contraction), axis=-1) / (1.0 + np.max(np.abs(contraction), axis=-1))
        worst = np.maximum(worst, err)
    return worst


# --------------------------------------------------------------------------
# Profiles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitProfile:
    name: str
    region: Box
    grid: np.ndarray
    H: np.ndarray
    vol: np.ndarray
    logvol: np.ndarray
    ric_min: np.ndarray
    ric_max: np.ndarray
    mu: np.ndarray

    @property
    def n(self):
        return self.grid.shape[1]

    def columns(self):
        n = self.n
        return ([f"x{i + 1}" for i in range(n)] + ["H", "vol", "logvol", "ric_min", "ric_max"]
                + [f"mu{i + 1}" for i in range(n)])

    def rows(self):
        data = np.column_stack([self.grid, self.H, self.vol, self.logvol, self.ric_min,
                                self.ric_max, self.mu])
        return data


def _is_potential(model):
    return isinstance(model, InvariantPotential)


def orbit_profile(model, region: Box, chunk=4096) -> OrbitProfile:
    """Sample ``H``, ``Vol_J``, ``log Vol_J``, Ricci eigenvalue range and ``mu`` on a grid."""
    pts = region.grid()
    n = region.n
    if _is_potential(model):
        if model.n != n:
            raise ValueError("region dimension does not match the potential")
        H = np.empty(len(pts))
        lo, hi = np.empty(len(pts)), np.empty(len(pts))
        for s in range(0, len(pts), chunk):
            p = pts[s:s + chunk]
            H[s:s + chunk] = np.exp(log_det_hessian(model, p) - n * np.log(4.0))
            r = ricci_form(model, p)
            lo[s:s + chunk], hi[s:s + chunk] = r.eig_min, r.eig_max
        vol = TWO_PI**n * np.sqrt(H)
        logvol = log_j_volume(model, pts)
        mu = moment_map(model, pts)
    else:
        vol = j_volume_general(model, pts)
        logvol = np.log(vol)
        H = np.full(len(pts), np.nan)
        nodes = QuadratureRule(8, n).nodes
        X = np.repeat(pts, len(nodes), axis=0)
        Y = np.tile(nodes, (len(pts), 1))
        ev = ricci_general(model, X, Y).eigenvalues().reshape(len(pts), len(nodes), -1) / 2
        lo, hi = ev[..., 0].min(axis=1), ev[..., -1].max(axis=1)
        H = model(pts, np.zeros_like(pts)) if isinstance(model, PeriodicScalarField) else H
        mu = np.full((len(pts), n), np.nan)
    return OrbitProfile(getattr(model, "name", "model"), region, pts, H, vol, logvol, lo, hi, mu)


def _volume_callables(model):
    if _is_potential(model):
        return (lambda p: log_j_volume(model, p)), (lambda p: j_volume(model, p))
    return (lambda p: np.log(j_volume_general(model, p))), (lambda p: j_volume_general(model, p))


def logvol_profile(model, region: Box, tol=2e-7, segments=1000):
    """Orbit profile plus convexity verdicts for ``log Vol``, ``Vol`` and ``1/Vol``.

    Invariant potentials are judged through finite-difference Hessians of
    the closed form; density fields, whose volumes each cost a quadrature,
    through the sampled profile on the grid of ``region``.
    """
    prof = orbit_profile(model, region)
    if _is_potential(model):
        logvol, vol = _volume_callables(model)
        inv = lambda p: 1.0 / vol(p)
    else:
        shape = region.shape()
        logvol, vol = prof.logvol.reshape(shape), prof.vol.reshape(shape)
        inv = 1.0 / vol
    verdicts = {
        "logvol": check_convexity(logvol, region, tol, segments),
        "vol": check_convexity(vol, region, tol, segments),
        "inv_vol": check_convexity(inv, region, tol, segments),
    }
    return prof, verdicts


# --------------------------------------------------------------------------
# Curvature / volume equivalence
# --------------------------------------------------------------------------

EQUIVALENCE = {
    "positive": "strictly-concave",
    "semi-positive": "concave",
    "zero": "linear",
    "semi-negative": "convex",
    "negative": "strictly-convex",
    "indefinite": "indefinite",
}


@dataclass(frozen=True)
class ConsistencyReport:
    name: str
    ricci_tag: str
    logvol_tag: str
    expected_logvol: str | None
    vol_tag: str
    inv_vol_tag: str
    passed: bool
    notes: list = field(default_factory=list)


def _ricci_sign_field(H, region, tol, N=8):
    pts = region.grid()
    nodes = QuadratureRule(N, region.n).nodes
    X = np.repeat(pts, len(nodes), axis=0)
    Y = np.tile(nodes, (len(pts), 1))
    ev = ricci_general(H, X, Y).eigenvalues() / 2
    return classify_eigenvalues(ev[:, 0], ev[:, -1], X, tol)


def consistency_theorem(model, region: Box, tol=1e-7, segments=1000) -> ConsistencyReport:
    """Cross-tabulate the Ricci sign against the convexity of ``log Vol``.

    Invariant potentials must match :data:`EQUIVALENCE` exactly; in addition
    ``Ric <= 0`` must give a convex ``Vol`` and ``Ric >= 0`` a convex
    ``1/Vol``.  For a general density field only the one-way statement
    ``Ric <= 0  =>  Vol convex`` is asserted.
    """
    notes = []
    if _is_potential(model):
        sign = classify_ricci(model, region, tol)
    else:
        sign = _ricci_sign_field(model, region, tol)
    _, verdicts = logvol_profile(model, region, 2 * tol, segments)
    lv, v, iv = verdicts["logvol"], verdicts["vol"], verdicts["inv_vol"]
    nonpos = sign.tag in ("negative", "semi-negative", "zero")
    nonneg = sign.tag in ("positive", "semi-positive", "zero")
    ok = True
    expected = None
    if _is_potential(model):
        expected = EQUIVALENCE[sign.tag]
        if lv.tag != expected:
            ok = False
            notes.append(f"Ricci {sign.tag} but log Vol {lv.tag} (expected {expected})")
        if nonneg and not iv.is_convex:
            ok = False
            notes.append(f"Ricci {sign.tag} but 1/Vol {iv.tag}")
    if nonpos and not v.is_convex:
        ok = False
        notes.append(f"Ricci {sign.tag} but Vol {v.tag}")
    return ConsistencyReport(getattr(model, "name", "model"), sign.tag, lv.tag, expected, v.tag,
                             iv.tag, ok, notes)


# --------------------------------------------------------------------------
# Critical orbit
# --------------------------------------------------------------------------


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class CriticalOrbitResult:
    x: np.ndarray
    vol: float
    grad_norm: float
    iterations: int
    certificate: str
    unique: bool
    converged: bool


def _certificate(phi, region):
    return check_convexity(lambda p: log_j_volume(phi, p), region, tol=2e-7, segments=1000).tag


def find_critical_orbit(phi: InvariantPotential, seed, region: Box | None = None,
                        require_unique=False, max_iter=100, gtol=1e-10, armijo=1e-4,
                        certificate=None) -> CriticalOrbitResult:
    """Maximise ``log Vol`` by damped Newton ascent with Armijo backtracking.

    The uniqueness flag is set when ``log Vol`` is certified strictly concave
    on ``region`` (pass a precomputed ``certificate`` tag to skip that
    check when restarting from several seeds).
    """
    n = phi.n
    if region is None:
        region = Box.cube(-3.0, 3.0, 0.1, n)
    x = np.asarray(seed, dtype=float).reshape(n)
    if not region.contains(x):
        raise ValueError(f"seed {x.tolist()} lies outside the search region")
    tag = certificate or _certificate(phi, region)
    unique = tag == "strictly-concave"
    f = lambda p: log_j_volume(phi, p)

    def inside(p):
        if not region.contains(p):
            return False
        try:
            _positive_hessian(phi, p)
        except NotKahlerError:
            return False
        return True

    g = 0.5 * logdet_gradient(phi, x)
    it = 0
    while it < max_iter:
        fx = float(f(x))
        if np.linalg.norm(g) <= gtol * (1.0 + np.exp(fx)):
            break
        Hs = 0.5 * logdet_hessian(phi, x)
        if np.linalg.eigvalsh(Hs)[-1] < 0:
            d = -np.linalg.solve(Hs, g)
        elif require_unique:
            raise ConvergenceError(f"log Vol is not concave at x={x.tolist()}")
        else:
            d = g
        slope = float(g @ d)
        t = 1.0
        for _ in range(60):
            cand = x + t * d
            if inside(cand) and f(cand) >= fx + armijo * t * slope:
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"line search failed at x={x.tolist()}")
        x = cand
        g = 0.5 * logdet_gradient(phi, x)
        it += 1
    gnorm = float(np.linalg.norm(g))
    converged = gnorm <= gtol * (1.0 + float(j_volume(phi, x)))
    return CriticalOrbitResult(x, float(j_volume(phi, x)), gnorm, it, tag, unique, converged)


# --------------------------------------------------------------------------
# Boundary decay
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayReport:
    direction: tuple
    t: np.ndarray
    vol: np.ndarray
    ratio: float
    eventually_decreasing: bool
    passed: bool


def boundary_decay(phi: InvariantPotential, direction, t_range=(0.0, 20.0, 0.25),
                   threshold=1e-8) -> DecayReport:
    """Volume of the orbits ``x = t d`` as ``t`` runs to ``T``; the ratio
    ``Vol(T d) / Vol(0)`` must fall below ``threshold`` with the profile
    decreasing after its peak.  Only for compactifiable potentials.
    """
    if not getattr(phi, "compactifiable", False):
        raise ValueError(f"{phi.name} is not flagged compactifiable")
    d = np.asarray(direction, dtype=float).reshape(phi.n)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    lo, hi, st = t_range
    ts = lo + st * np.arange(int(np.floor((hi - lo) / st + 1e-9)) + 1)
    vols = j_volume(phi, ts[:, None] * d)
    v0 = float(j_volume(phi, np.zeros(phi.n)))
    k = int(np.argmax(vols))
    tail = np.diff(vols[k:])
    decreasing = bool(np.all(tail <= 1e-12 * vols[k]))
    ratio = float(vols[-1] / v0)
    return DecayReport(tuple(d.tolist()), ts, vols, ratio, decreasing,
                       decreasing and ratio <= threshold)
