"""The ``verify`` battery: every in-scope statement replayed on the catalogs.

Each check produces one :class:`VerifyRow`; the report carries a coverage
manifest mapping every statement id to the number of rows exercising it.
All randomness flows from ``SEED`` so reruns are bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .funcspace import (
    TWO_PI,
    Box,
    LaurentAbs2Field,
    LaurentPolynomial,
    QuadraticCosinePotential,
    QuadraticField,
    ScaledPotential,
    SumField,
    TranslatedPotential,
    catalog,
    direct_sum,
    field_catalog,
    make_builtin_potential,
)
from .kahler import (
    DensityField,
    NotKahlerError,
    classify_ricci,
    metric_at,
    ricci_form,
    ricci_general,
    ricci_levi_embedding,
)
from .orbitvol import (
    boundary_decay,
    consistency_theorem,
    find_critical_orbit,
    hamiltonian_residual,
    j_volume,
    j_volume_general,
    log_j_volume,
    moment_map,
)
from .psh import (
    SEED,
    check_convexity,
    distinguished_boundary_max,
    hadamard_max,
    levi_form,
    maximum_principle,
    monotone_in_radius,
    torus_average,
)

# Statement ids and one-line descriptions; the manifest must cover all of them.
STATEMENTS = {
    "levi.matrix_n2": "assembled Levi form equals the explicit 4x4 matrix for n = 2",
    "levi.trace": "trace of the Levi form is the Laplacian",
    "psh.torus_average": "torus average of a periodic PSH function is convex",
    "psh.log_radius_average": "circle average of a PSH function is convex in log r",
    "psh.monotonicity": "averages and maxima are non-decreasing in r_i across z_i = 0",
    "psh.kernel": "average constant in r_i iff harmonic in z_i",
    "psh.maximum_principle": "an interior maximum of the average forces constancy",
    "psh.hadamard": "torus maximum is convex in log r",
    "psh.distinguished_boundary": "polydisk maximum sits on the distinguished boundary",
    "kahler.anticanonical_curvature": "Levi form of -log H is the doubled Ricci form",
    "kahler.closed_forms": "Einstein constant, flat and cosh curvature closed forms",
    "vol.j_volume": "J-volume equals (2pi)^n sqrt(H) and the general quadrature",
    "vol.flat_length": "flat circles have length 2 pi r and linear log Vol",
    "thm.tr_convexity": "Ric <= 0 makes the J-volume of canonical tori convex",
    "thm.lagrangian_convexity": "Ricci sign matches the convexity of log Vol",
    "thm.nonimplication": "concave log Vol does not force concave Vol",
    "moment.hamiltonian": "Hamiltonian identity for the moment map",
    "cor.unique_critical_orbit": "unique maximising orbit under positive Ricci",
    "decay.boundary": "orbit volume decays toward the boundary of the polytope",
    "torus.periodic_convex_constant": "periodic convex log Vol on a complex torus is constant",
}


@dataclass(frozen=True)
class VerifyRow:
    statement: str
    entry: str
    passed: bool
    witnesses: str


@dataclass(frozen=True)
class VerifyReport:
    rows: list
    seed: int
    manifest: dict = field(default_factory=dict)

    @property
    def missing(self):
        return [k for k in STATEMENTS if self.manifest.get(k, 0) == 0]

    @property
    def passed(self):
        return all(r.passed for r in self.rows) and not self.missing

    def failures(self):
        return [r for r in self.rows if not r.passed]

    def to_dict(self):
        return {
            "status": "pass" if self.passed else "fail",
            "seed": self.seed,
            "rows": [{"statement": r.statement, "entry": r.entry,
                      "verdict": "pass" if r.passed else "fail", "witnesses": r.witnesses}
                     for r in self.rows],
            "manifest": {k: self.manifest.get(k, 0) for k in STATEMENTS},
            "missing": self.missing,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _g(v):
    return format(float(v), ".6g")


class _Battery:
    def __init__(self, corrupt=None):
        self.rows = []
        self.corrupt = corrupt
        self.rng = np.random.default_rng(SEED)

    def check(self, statement, entry, fn):
        try:
            ok, wit = fn()
        except NotKahlerError as exc:
            ok, wit = False, f"Kahler-locus error: {exc}"
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            ok, wit = False, f"{type(exc).__name__}: {exc}"
        self.rows.append(VerifyRow(statement, entry, bool(ok), wit))

    def potential(self, name, n):
        phi = make_builtin_potential(name, n)
        if name == self.corrupt:
            # negative control: flip the sign of the potential
            phi = ScaledPotential(phi, -1.0, name=f"{name}(corrupted)", params=phi.params,
                                  compactifiable=phi.compactifiable)
        return phi

    def entries(self, n):
        for e in catalog(n):
            yield e, self.potential(e.name, n)

    def report(self):
        manifest = {}
        for r in self.rows:
            manifest[r.statement] = manifest.get(r.statement, 0) + 1
        return VerifyReport(list(self.rows), SEED, manifest)


def explicit_levi_n2(hess):
    """The explicit ``n = 2`` Levi form from a real Hessian in the basis
    ``(x, xi, y, eta)``, written out entry by entry."""
    h = lambda a, b: hess[..., a, b]
    X, XI, Y, ETA = 0, 1, 2, 3
    a = h(X, X) + h(Y, Y)
    b = h(X, XI) + h(Y, ETA)
    c = h(XI, XI) + h(ETA, ETA)
    d = h(X, ETA) - h(Y, XI)
    z = np.zeros_like(a)
    rows = [[a, b, z, -d], [b, c, d, z], [z, d, a, b], [-d, z, b, c]]
    return 0.5 * np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


# --------------------------------------------------------------------------
# Suites
# --------------------------------------------------------------------------


def _levi_rows(b: _Battery):
    rng = b.rng

    def matrix():
        worst = 0.0
        for _ in range(50):
            M = rng.normal(size=(4, 4))
            f = QuadraticField(M + M.T, rng.normal(size=4))
            x, y = rng.uniform(-2, 2, (20, 2)), rng.uniform(0, TWO_PI, (20, 2))
            L = levi_form(f, x, y).matrix
            worst = max(worst, float(np.abs(L - explicit_levi_n2(f.hessian(x, y))).max()))
        return worst <= 1e-10, f"max entry error {_g(worst)} over 50 fields"

    b.check("levi.matrix_n2", "random quadratic", matrix)

    for n in (1, 2):
        for e in field_catalog(n):
            def trace(e=e, n=n):
                x = rng.uniform(-3, 3, (200, n))
                y = rng.uniform(0, TWO_PI, (200, n))
                L = levi_form(e.field, x, y)
                lap = sum(e.field.derivative((k, k), x, y) for k in range(2 * n))
                err = np.abs(L.trace - lap) / np.maximum(1.0, np.abs(lap))
                return float(err.max()) <= 1e-9, f"max rel error {_g(err.max())}"

            b.check("levi.trace", f"{e.name} n={n}", trace)


_GRID_STEP = {1: 0.1, 2: 0.5}


def _psh_rows(b: _Battery):
    for n in (1, 2):
        box = Box.cube(-3.0, 3.0, _GRID_STEP[n], n)
        pts = box.grid()
        for e in field_catalog(n):
            F = torus_average(e.field, pts).reshape(box.shape())

            def avg(e=e, F=F, box=box):
                v = check_convexity(F, box)
                ok = v.is_convex if e.psh else not v.is_convex
                return ok, f"average {v.tag}, curvature min {_g(v.hessian_min)}"

            b.check("psh.torus_average", f"{e.name} n={n}", avg)

            if e.psh:
                def had(e=e, box=box, pts=pts):
                    v = check_convexity(hadamard_max(e.field, pts).reshape(box.shape()), box)
                    return v.is_convex, f"max {v.tag}, curvature min {_g(v.hessian_min)}"

                b.check("psh.hadamard", f"{e.name} n={n}", had)

            if e.harmonic:
                def maxp(F=F, box=box):
                    r = maximum_principle(F, box)
                    return r.holds and r.constant, f"constant={r.constant} argmax={r.argmax}"

                b.check("psh.maximum_principle", f"{e.name} n={n}", maxp)
            elif e.psh:
                def maxp(F=F, box=box):
                    r = maximum_principle(F, box)
                    return r.holds, f"interior max={r.interior_maximum} argmax={r.argmax}"

                b.check("psh.maximum_principle", f"{e.name} n={n}", maxp)

            for axis in sorted(e.field.extendable_axes):
                def mono(e=e, axis=axis):
                    ra = monotone_in_radius(e.field, axis, x_range=(-10.0, 2.0, 0.5))
                    rm = monotone_in_radius(e.field, axis, x_range=(-10.0, 2.0, 0.5),
                                            statistic="max")
                    return (ra.nondecreasing and rm.nondecreasing,
                            f"drop avg {_g(ra.max_decrease)} max {_g(rm.max_decrease)}")

                def kernel(e=e, axis=axis):
                    r = monotone_in_radius(e.field, axis, x_range=(-10.0, 2.0, 0.5))
                    return (bool(r.kernel_consistent),
                            f"constant={r.constant} harmonic={r.separately_harmonic}")

                b.check("psh.monotonicity", f"{e.name} n={n} axis={axis}", mono)
                b.check("psh.kernel", f"{e.name} n={n} axis={axis}", kernel)

    # circle averages of |P|^2 against the coefficient identity sum |c_k|^2 r^(2k)
    eye = np.eye(2, dtype=int)
    polys = {
        "1+z1+z1z2": LaurentPolynomial([1.0, 1.0, 1.0], [[0, 0], eye[0], [1, 1]]),
        "z1+1/z1+2z2": LaurentPolynomial([1.0, 1.0, 2.0], [eye[0], -eye[0], eye[1]]),
        "(1+i)z1^2-z2": LaurentPolynomial([[1.0, 1.0], -1.0], [2 * eye[0], eye[1]]),
    }
    box = Box.cube(-2.0, 2.0, 0.25, 2)
    pts = box.grid()
    for name, P in polys.items():
        def radial(P=P):
            G = torus_average(LaurentAbs2Field(P), pts)
            exact = np.exp(2 * pts @ P.exponents.T.astype(float)) @ np.abs(P.coeffs) ** 2
            err = float(np.max(np.abs(G - exact) / exact))
            v = check_convexity(G.reshape(box.shape()), box)
            return err <= 1e-10 and v.is_convex, f"coefficient identity {_g(err)}, {v.tag}"

        b.check("psh.log_radius_average", f"|{name}|^2", radial)

    rng = b.rng
    for n in (1, 2):
        fields = {e.name: e.field for e in field_catalog(n, include_controls=False)}
        for name in ("abs2_poly", "mixed", "logabs_shifted", "re_monomial"):
            def polydisks(f=fields[name], n=n):
                worst = -np.inf
                for _ in range(20):
                    r = distinguished_boundary_max(f, rng.uniform(0.2, 3.0, n))
                    worst = max(worst, r.interior_max - r.boundary_max)
                    if not r.passed:
                        return False, f"interior exceeds boundary at radii {r.radii}"
                return True, f"max interior excess {_g(worst)} over 20 polydisks"

            b.check("psh.distinguished_boundary", f"{name} n={n}", polydisks)


def _kahler_rows(b: _Battery):
    rng = b.rng
    for n in (1, 2):
        for e, phi in b.entries(n):
            def embed(phi=phi, n=n):
                x = rng.uniform(-2, 2, (50, n))
                y = rng.uniform(0, TWO_PI, (50, n))
                L = ricci_general(DensityField(phi), x, y).matrix
                R = ricci_levi_embedding(ricci_form(phi, x).R)
                err = float(np.max(np.abs(L - R) / (1.0 + np.abs(R).max())))
                return err <= 1e-8, f"max error {_g(err)}"

            b.check("kahler.anticanonical_curvature", f"{e.name} n={n}", embed)

    xs = np.linspace(-3, 3, 121)[:, None]
    fs = b.potential("fubini_study", 1)

    def einstein():
        R = ricci_form(fs, xs).R[:, 0, 0]
        h = metric_at(fs, xs).h[:, 0, 0]
        err = float(np.max(np.abs(R - 2 * h) / np.abs(2 * h)))
        return err <= 1e-8, f"max |R/2h - 1| {_g(err)}"

    def flat():
        R = ricci_form(b.potential("flat", 2), Box.cube(-2, 2, 0.5, 2).grid()).R
        return float(np.abs(R).max()) <= 1e-8, f"max |R| {_g(np.abs(R).max())}"

    def cosh():
        r = float(ricci_form(b.potential("cosh_neg", 1), np.zeros(1)).R[0, 0])
        return abs(r + 1) <= 1e-8, f"R(0) = {_g(r)}"

    b.check("kahler.closed_forms", "fubini_study n=1", einstein)
    b.check("kahler.closed_forms", "flat n=2", flat)
    b.check("kahler.closed_forms", "cosh_neg n=1", cosh)


def _volume_rows(b: _Battery):
    for n in (1, 2):
        pts = Box.cube(-2, 2, 0.5, n).grid()
        for e, phi in b.entries(n):
            def agree(phi=phi, n=n):
                v = j_volume(phi, pts)
                H = metric_at(phi, pts).H
                g = j_volume_general(DensityField(phi), pts)
                err = max(float(np.max(np.abs(v - TWO_PI**n * np.sqrt(H)) / v)),
                          float(np.max(np.abs(g - v) / v)))
                return err <= 1e-10, f"max rel error {_g(err)}"

            b.check("vol.j_volume", f"{e.name} n={n}", agree)

    def flat_length():
        x = np.linspace(-3, 3, 61)[:, None]
        phi = b.potential("flat", 1)
        err = float(np.max(np.abs(j_volume(phi, x) - TWO_PI * np.exp(x[:, 0])) / np.exp(x[:, 0])))
        v = check_convexity(lambda p: log_j_volume(phi, p), Box.cube(-3, 3, 0.1, 1))
        return err <= 1e-10 and v.tag == "linear", f"error {_g(err)}, log Vol {v.tag}"

    b.check("vol.flat_length", "flat n=1", flat_length)


def _theorem_rows(b: _Battery):
    region = {1: Box.cube(-3, 3, 0.1, 1), 2: Box.cube(-3, 3, 0.25, 2)}
    for n in (1, 2):
        for e, phi in b.entries(n):
            def cons(e=e, phi=phi, n=n):
                r = consistency_theorem(phi, region[n])
                ok = r.passed and r.ricci_tag == e.expected_ricci and r.logvol_tag == e.expected_logvol
                return ok, f"Ric {r.ricci_tag}, log Vol {r.logvol_tag}, Vol {r.vol_tag}, 1/Vol {r.inv_vol_tag}"

            b.check("thm.lagrangian_convexity", f"{e.name} n={n}", cons)

    mixed = direct_sum(b.potential("fubini_study", 1), b.potential("cosh_neg", 1),
                       name="fubini_study+cosh_neg")

    def indefinite():
        r = consistency_theorem(mixed, region[2])
        return r.passed and r.ricci_tag == "indefinite", f"Ric {r.ricci_tag}, log Vol {r.logvol_tag}"

    b.check("thm.lagrangian_convexity", mixed.name, indefinite)

    def nonimplication():
        box = Box.cube(-4, 4, 0.1, 1)
        fs, ch = b.potential("fubini_study", 1), b.potential("cosh_neg", 1)
        lv = check_convexity(lambda p: log_j_volume(fs, p), box)
        v = check_convexity(lambda p: j_volume(fs, p), box)
        cv = check_convexity(lambda p: j_volume(ch, p), box)
        ok = lv.is_concave and not v.is_concave and cv.is_convex
        return ok, f"FS log Vol {lv.tag}, FS Vol {v.tag}, cosh Vol {cv.tag}"

    b.check("thm.nonimplication", "fubini_study/cosh_neg n=1", nonimplication)

    # y-dependent densities: log of a sum of squared moduli is PSH, so Ric <= 0
    densities = {
        "|1+z|^2+|z^2|^2": SumField([LaurentAbs2Field(LaurentPolynomial([1.0, 1.0], [[0], [1]])),
                                     LaurentAbs2Field(LaurentPolynomial([1.0], [[2]]))]),
        "|1+z1+z2|^2+|z1z2|^2": SumField([
            LaurentAbs2Field(LaurentPolynomial([1.0, 1.0, 1.0], [[0, 0], [1, 0], [0, 1]])),
            LaurentAbs2Field(LaurentPolynomial([1.0], [[1, 1]]))]),
    }
    tr_region = {1: Box.cube(-3, 3, 0.1, 1), 2: Box.cube(-2, 2, 0.5, 2)}
    for name, H in densities.items():
        def tr(H=H):
            r = consistency_theorem(H, tr_region[H.n])
            ok = r.passed and r.ricci_tag in ("negative", "semi-negative", "zero")
            return ok, f"Ric {r.ricci_tag}, Vol {r.vol_tag}"

        b.check("thm.tr_convexity", name, tr)
    for e, phi in b.entries(1):
        def tr_inv(e=e, phi=phi):
            r = consistency_theorem(phi, region[1])
            if r.ricci_tag not in ("negative", "semi-negative", "zero"):
                return True, f"Ric {r.ricci_tag}: statement does not apply"
            return r.vol_tag in ("strictly-convex", "convex", "linear"), f"Vol {r.vol_tag}"

        b.check("thm.tr_convexity", f"{e.name} n=1", tr_inv)


def _moment_rows(b: _Battery):
    rng = b.rng
    for n in (1, 2):
        for e, phi in b.entries(n):
            def ham(phi=phi, n=n):
                res = float(np.max(hamiltonian_residual(phi, rng.uniform(-3, 3, (100, n)))))
                return float(res) <= 1e-6, f"max residual {_g(res)}"

            b.check("moment.hamiltonian", f"{e.name} n={n}", ham)

    def image():
        phi = b.potential("fubini_study", 1)
        mu = moment_map(phi, np.linspace(-8, 8, 161)[:, None])[:, 0]
        ok = mu[0] < 1e-6 and mu[-1] > 1 - 1e-6 and bool(np.all(np.diff(mu) > 0))
        return ok, f"mu(-8) {_g(mu[0])}, mu(8) {_g(mu[-1])}"

    b.check("moment.hamiltonian", "fubini_study n=1 image", image)


def _critical_rows(b: _Battery):
    rng = b.rng
    for n in (1, 2):
        phi = b.potential("fubini_study", n)

        def restarts(phi=phi, n=n):
            region = Box.cube(-3, 3, 0.25 if n == 2 else 0.1, n)
            first = find_critical_orbit(phi, rng.uniform(-3, 3, n), region)
            xs = [first.x]
            for s in rng.uniform(-3, 3, (9, n)):
                xs.append(find_critical_orbit(phi, s, region, certificate=first.certificate).x)
            spread = float(np.max(np.abs(np.array(xs) - xs[0])))
            ok = first.unique and spread <= 1e-6 and float(np.abs(first.x).max()) <= 1e-8
            return ok, f"x* {first.x.tolist()}, spread {_g(spread)}, {first.certificate}"

        b.check("cor.unique_critical_orbit", f"fubini_study n={n}", restarts)

    def translated():
        phi = TranslatedPotential(b.potential("fubini_study", 1), 1.5, compactifiable=True)
        r = find_critical_orbit(phi, [0.2], Box.cube(-2, 5, 0.1, 1))
        return abs(r.x[0] - 1.5) <= 1e-8, f"x* {r.x.tolist()}"

    def scaled():
        phi = b.potential("fubini_study", 2)
        big = ScaledPotential(phi, 3.0)
        cert = "strictly-concave"
        r1 = find_critical_orbit(phi, [0.7, -0.4], certificate=cert)
        r2 = find_critical_orbit(big, [0.7, -0.4], certificate=cert)
        err = abs(r2.vol / r1.vol - 3.0) + float(np.abs(r2.x - r1.x).max())
        return err <= 1e-8, f"volume ratio {_g(r2.vol / r1.vol)}"

    b.check("cor.unique_critical_orbit", "translated fubini_study a=1.5", translated)
    b.check("cor.unique_critical_orbit", "scaled fubini_study n=2", scaled)


def _decay_rows(b: _Battery):
    s = 1.0 / np.sqrt(2.0)
    rays = {1: [(1.0,), (-1.0,)], 2: [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (s, -s), (-s, -s)]}
    for n, dirs in rays.items():
        phi = b.potential("fubini_study", n)
        for d in dirs:
            def dec(phi=phi, d=d):
                r = boundary_decay(phi, d)
                return r.passed, f"ratio {_g(r.ratio)} at T=20"

            b.check("decay.boundary", f"fubini_study n={n} d={d}", dec)

    def diagonal():
        # decays like exp(-t/sqrt 2): the 1e-8 level is crossed near t = 27
        r = boundary_decay(b.potential("fubini_study", 2), (s, s), t_range=(0.0, 40.0, 0.25))
        return r.passed, f"ratio {_g(r.ratio)} at T=40"

    b.check("decay.boundary", "fubini_study n=2 d=(1,1)/sqrt2", diagonal)


def _torus_rows(b: _Battery):
    box = Box.cube(-np.pi, np.pi, np.pi / 20, 1)

    def flat_torus():
        phi = b.potential("flat_cylinder", 2)
        lv = log_j_volume(phi, Box.cube(-np.pi, np.pi, np.pi / 4, 2).grid())
        spread = float(lv.max() - lv.min())
        return spread <= 1e-12, f"log Vol spread {_g(spread)}"

    def wavy():
        # periodic Hessian; a non-constant periodic log Vol cannot be convex,
        # and the Ricci form must change sign
        phi = QuadraticCosinePotential([[2.0]], [1.0], name="x^2+cos x")
        lv = check_convexity(lambda p: log_j_volume(phi, p), box)
        sign = classify_ricci(phi, box)
        per = abs(float(log_j_volume(phi, [-np.pi])[()] - log_j_volume(phi, [np.pi])[()]))
        ok = lv.tag == "indefinite" and sign.tag == "indefinite" and per <= 1e-12
        return ok, f"log Vol {lv.tag}, Ric {sign.tag}, period defect {_g(per)}"

    b.check("torus.periodic_convex_constant", "flat_cylinder n=2", flat_torus)
    b.check("torus.periodic_convex_constant", "x^2+cos x n=1", wavy)


def verify_battery(corrupt=None) -> VerifyReport:
    """Run every suite; ``corrupt`` names a catalog potential to sign-flip."""
    b = _Battery(corrupt)
    _levi_rows(b)
    _psh_rows(b)
    _kahler_rows(b)
    _volume_rows(b)
    _theorem_rows(b)
    _moment_rows(b)
    _critical_rows(b)
    _decay_rows(b)
    _torus_rows(b)
    return b.report()
