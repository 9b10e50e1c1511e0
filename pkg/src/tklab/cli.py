"""``tklab`` command line.

Exit status: 0 on success, 1 when a mathematical check fails, 2 on invalid
input (with a one-line diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .funcspace import (
    Box,
    DomainError,
    InvariantPotential,
    PullbackField,
    QuadratureRule,
    make_builtin_potential,
    make_periodic_field,
)
from .kahler import NotKahlerError, classify_ricci, ricci_form
from .orbitvol import (
    ConvergenceError,
    boundary_decay,
    consistency_theorem,
    find_critical_orbit,
    hamiltonian_residual,
    moment_map,
    orbit_profile,
)
from .psh import check_convexity, hadamard_max, is_psh, levi_form, torus_average
from .verify import verify_battery


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    potential: str | None = None
    params: dict = field(default_factory=dict)
    field_desc: dict | None = None
    n: int | None = None
    ranges: list = field(default_factory=list)
    quad_N: int = 8
    tol_psd: float | None = None
    tol_convex: float = 1e-6
    tol_gradient: float = 1e-10
    out: str | None = None
    format: str = "csv"
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.potential is not None and self.field_desc is not None:
            raise UsageError("give either a potential or a field, not both")
        if self.n is not None and int(self.n) < 1:
            raise UsageError(f"dimension must be >= 1, got {self.n}")
        N = int(self.quad_N)
        if N < 4 or N > 1024 or N & (N - 1):
            raise UsageError(f"quadrature N must be a power of two in [4, 1024], got {N}")
        if self.format not in ("csv", "json"):
            raise UsageError(f"format must be csv or json, got {self.format!r}")
        for name in ("tol_convex", "tol_gradient"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name.replace('_', '-')} must be positive")
        if self.tol_psd is not None and not self.tol_psd > 0:
            raise UsageError("tol-psd must be positive")
        return self

    def model(self):
        if self.field_desc is not None:
            f = make_periodic_field(self.field_desc)
            if self.n is not None and f.n != int(self.n):
                raise UsageError(f"field has n={f.n} but --n {self.n} was given")
            return f
        if self.potential is None:
            raise UsageError("no model: pass --potential or --field")
        return make_builtin_potential(self.potential, int(self.n or 1), self.params)

    def region(self, n):
        specs = list(self.ranges)
        if not specs:
            raise UsageError("no region: pass --range a:b:s")
        if len(specs) == 1:
            specs = specs * n
        if len(specs) != n:
            raise UsageError(f"{len(specs)} ranges given for dimension {n}")
        try:
            box = Box.parse(specs, n)
        except ValueError as exc:
            raise UsageError(f"bad range: {exc}") from None
        if len(box.grid()) == 0:
            raise UsageError("empty region")
        return box


def _load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def _parse_field(text):
    if text.startswith("@"):
        with open(text[1:]) as fh:
            text = fh.read()
    try:
        desc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"field descriptor is not valid JSON: {exc.msg}") from None
    if not isinstance(desc, dict):
        raise UsageError("field descriptor must be a JSON object")
    return desc


def _floats(text, what):
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None


def build_config(args) -> RunConfig:
    data = _load_config(args.config) if args.config else {}
    tols = data.get("tolerances", {})
    cfg = RunConfig(
        potential=data.get("potential"),
        params=dict(data.get("params", {})),
        field_desc=data.get("field"),
        n=data.get("n"),
        ranges=list(data.get("range", [])),
        quad_N=data.get("quad_N", 8),
        tol_psd=tols.get("psd"),
        tol_convex=tols.get("convex", 1e-6),
        tol_gradient=tols.get("gradient", 1e-10),
        out=data.get("out"),
        format=data.get("format", "csv"),
        extra={k: data[k] for k in ("seed", "direction", "T", "angles", "corrupt") if k in data},
    )
    if isinstance(cfg.ranges, str):
        cfg.ranges = [cfg.ranges]
    # flags win over the file
    if args.potential is not None:
        cfg.potential, cfg.field_desc = args.potential, None
    if args.field is not None:
        cfg.field_desc, cfg.potential = _parse_field(args.field), None
    for kv in args.param or []:
        k, sep, v = kv.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {kv!r}")
        cfg.params[k] = json.loads(v) if v[:1] in "[{" else float(v)
    for name in ("n", "quad_N", "tol_psd", "tol_convex", "out", "format"):
        v = getattr(args, name)
        if v is not None:
            setattr(cfg, name, v)
    if args.range:
        cfg.ranges = list(args.range)
    for k in ("seed", "direction", "T", "angles", "corrupt"):
        v = getattr(args, k, None)
        if v is not None:
            cfg.extra[k] = v
    return cfg.validate()


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def _fmt(v):
    v = float(v) + 0.0  # no negative zeros
    return "nan" if math.isnan(v) else format(v, ".17g")


def _jsonable(v):
    v = float(v)
    return None if math.isnan(v) else float(format(v, ".17g"))


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def emit_table(columns, rows, fmt="csv", out=None, meta=None):
    """Write ``rows`` (2-D array) under ``columns`` as CSV or JSON."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    fh, close = _open_out(out)
    try:
        if fmt == "csv":
            fh.write(",".join(columns) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(v) for v in r) + "\n")
        else:
            doc = dict(meta or {})
            doc["columns"] = list(columns)
            doc["rows"] = [{c: _jsonable(v) for c, v in zip(columns, r)} for r in rows]
            fh.write(json.dumps(doc, indent=1) + "\n")
    finally:
        if close:
            fh.close()


def emit_profile(profile, fmt="csv", out=None):
    """CSV/JSON rendering of an :class:`~tklab.orbitvol.OrbitProfile`."""
    if len(profile.grid) == 0:
        raise UsageError("empty profile")
    emit_table(profile.columns(), profile.rows(), fmt, out, {"model": profile.name})


def emit_json(doc, out=None):
    fh, close = _open_out(out)
    try:
        fh.write(json.dumps(doc, indent=1) + "\n")
    finally:
        if close:
            fh.close()


def _point_json(p):
    return [_jsonable(v) for v in np.atleast_1d(p)]


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def _as_field(model):
    return PullbackField(model) if isinstance(model, InvariantPotential) else model


def _need_potential(model, cmd):
    if not isinstance(model, InvariantPotential):
        raise UsageError(f"{cmd} needs an invariant potential (--potential)")
    return model


def cmd_levi(cfg):
    f = _as_field(cfg.model())
    n = f.n
    box = cfg.region(n)
    x = box.grid()
    angles = cfg.extra.get("angles")
    y = np.zeros(n) if angles is None else np.asarray(_floats(angles, "--angles"))
    if y.shape != (n,):
        raise UsageError(f"--angles needs {n} values")
    y = np.broadcast_to(y, x.shape)
    L = levi_form(f, x, y)
    ev = L.eigenvalues()
    idx = [f"{a}{b}" for a in range(1, 2 * n + 1) for b in range(1, 2 * n + 1)]
    cols = ([f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
            + [f"L{k}" for k in idx] + ["eig_min", "eig_max", "trace"])
    rows = np.column_stack([x, y, L.matrix.reshape(len(x), -1), ev[:, 0], ev[:, -1], L.trace])
    emit_table(cols, rows, cfg.format, cfg.out)
    return 0


def cmd_psh_check(cfg):
    f = _as_field(cfg.model())
    box = cfg.region(f.n)
    r = is_psh(f, box, N=int(cfg.quad_N), tol=cfg.tol_psd)
    emit_json({"psh": r.holds, "min_eigenvalue": _jsonable(r.min_eigenvalue),
               "witness": {"x": _point_json(r.witness[0]), "y": _point_json(r.witness[1])},
               "tol": _jsonable(r.tol)}, cfg.out)
    return 0 if r.holds else 1


def _sampled(cfg, stat):
    f = _as_field(cfg.model())
    box = cfg.region(f.n)
    x = box.grid()
    if stat == "average":
        vals = torus_average(f, x, QuadratureRule(int(cfg.quad_N), f.n))
        name = "F"
    else:
        vals = hadamard_max(f, x)
        name = "M"
    verdict = check_convexity(vals.reshape(box.shape()), box, cfg.tol_convex) \
        if min(box.shape()) >= 3 else None
    cols = [f"x{i + 1}" for i in range(f.n)] + [name]
    meta = {"convexity": verdict.tag if verdict else None}
    emit_table(cols, np.column_stack([x, vals]), cfg.format, cfg.out, meta)
    if verdict is not None:
        print(f"# {name} {verdict.tag}", file=sys.stderr)
    return 0


def cmd_average(cfg):
    return _sampled(cfg, "average")


def cmd_hadamard(cfg):
    return _sampled(cfg, "max")


def cmd_ricci(cfg):
    phi = _need_potential(cfg.model(), "ricci")
    box = cfg.region(phi.n)
    x = box.grid()
    r = ricci_form(phi, x)
    n = phi.n
    cols = ([f"x{i + 1}" for i in range(n)] + ["ric_min", "ric_max"]
            + [f"R{a + 1}{b + 1}" for a in range(n) for b in range(n)])
    emit_table(cols, np.column_stack([x, r.eig_min, r.eig_max, r.R.reshape(len(x), -1)]),
               cfg.format, cfg.out)
    return 0


def cmd_classify(cfg):
    model = cfg.model()
    box = cfg.region(model.n)
    tol = cfg.tol_psd or 1e-7
    r = consistency_theorem(model, box, tol=tol)
    emit_json({"model": r.name, "ricci": r.ricci_tag, "logvol": r.logvol_tag,
               "expected_logvol": r.expected_logvol, "vol": r.vol_tag, "inv_vol": r.inv_vol_tag,
               "consistent": r.passed, "notes": r.notes}, cfg.out)
    return 0 if r.passed else 1


def cmd_volume(cfg):
    model = cfg.model()
    emit_profile(orbit_profile(model, cfg.region(model.n)), cfg.format, cfg.out)
    return 0


def cmd_critical(cfg):
    phi = _need_potential(cfg.model(), "critical")
    seed = cfg.extra.get("seed")
    seed = np.zeros(phi.n) if seed is None else np.asarray(_floats(seed, "--seed"))
    if seed.shape != (phi.n,):
        raise UsageError(f"--seed needs {phi.n} values")
    region = cfg.region(phi.n) if cfg.ranges else None
    r = find_critical_orbit(phi, seed, region, gtol=cfg.tol_gradient)
    emit_json({"x": _point_json(r.x), "vol": _jsonable(r.vol), "grad_norm": _jsonable(r.grad_norm),
               "iterations": r.iterations, "certificate": r.certificate, "unique": r.unique,
               "converged": r.converged}, cfg.out)
    return 0 if r.converged else 1


def cmd_moment(cfg):
    phi = _need_potential(cfg.model(), "moment")
    box = cfg.region(phi.n)
    x = box.grid()
    mu = moment_map(phi, x)
    res = hamiltonian_residual(phi, x)
    cols = [f"x{i + 1}" for i in range(phi.n)] + [f"mu{i + 1}" for i in range(phi.n)] + ["residual"]
    emit_table(cols, np.column_stack([x, mu, res]), cfg.format, cfg.out)
    return 0 if float(np.max(res)) <= 1e-6 else 1


def cmd_decay(cfg):
    phi = _need_potential(cfg.model(), "decay")
    d = cfg.extra.get("direction")
    d = np.eye(phi.n)[0] if d is None else np.asarray(_floats(d, "--direction"))
    if d.shape != (phi.n,):
        raise UsageError(f"--direction needs {phi.n} values")
    d = d / np.linalg.norm(d)
    T = float(cfg.extra.get("T", 20.0))
    r = boundary_decay(phi, d, t_range=(0.0, T, 0.25))
    emit_table(["t", "vol"], np.column_stack([r.t, r.vol]), cfg.format, cfg.out,
               {"ratio": _jsonable(r.ratio), "passed": r.passed})
    print(f"# Vol(T d)/Vol(0) = {_fmt(r.ratio)} passed={r.passed}", file=sys.stderr)
    return 0 if r.passed else 1


def cmd_verify(cfg):
    report = verify_battery(cfg.extra.get("corrupt"))
    if cfg.out:
        emit_json(report.to_dict(), cfg.out)
    elif cfg.format == "json":
        emit_json(report.to_dict(), None)
        return 0 if report.passed else 1
    for r in report.rows:
        if not r.passed:
            print(f"FAIL {r.statement} [{r.entry}] {r.witnesses}")
    print(f"{len(report.rows)} rows, {len(report.failures())} failed, "
          f"{len(report.manifest)}/{len(report.to_dict()['manifest'])} statements covered: "
          f"{'pass' if report.passed else 'fail'}")
    return 0 if report.passed else 1


COMMANDS = {
    "levi": (cmd_levi, "Levi form on a grid of x (at fixed angles)"),
    "psh-check": (cmd_psh_check, "plurisubharmonicity over region x angle grid"),
    "average": (cmd_average, "torus average F(x) and its convexity"),
    "hadamard": (cmd_hadamard, "torus maximum M(x) and its convexity"),
    "ricci": (cmd_ricci, "Ricci form of an invariant potential"),
    "classify": (cmd_classify, "Ricci sign against log Vol convexity"),
    "volume": (cmd_volume, "orbit volume profile"),
    "critical": (cmd_critical, "maximise the orbit volume"),
    "moment": (cmd_moment, "moment map and Hamiltonian identity residual"),
    "decay": (cmd_decay, "orbit volume along a ray toward the boundary"),
    "verify": (cmd_verify, "run the full verification battery"),
}


def make_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--potential", help="catalog potential name")
    common.add_argument("--param", action="append", metavar="KEY=VALUE",
                        help="potential parameter (repeatable)")
    common.add_argument("--field", help="periodic field descriptor (JSON, or @file)")
    common.add_argument("--n", type=int, help="complex dimension")
    common.add_argument("--range", action="append", metavar="A:B:S",
                        help="grid on one axis (repeat per axis, or once for all)")
    common.add_argument("--quad-N", dest="quad_N", type=int, help="angles per axis")
    common.add_argument("--tol-psd", dest="tol_psd", type=float)
    common.add_argument("--tol-convex", dest="tol_convex", type=float)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))

    parser = _Parser(prog="tklab", description="Plurisubharmonic functions, Ricci curvature "
                     "and convexity of torus-orbit volumes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "levi":
            p.add_argument("--angles", help="comma-separated y values (default 0)")
        if name == "critical":
            p.add_argument("--seed", help="comma-separated starting point")
        if name == "decay":
            p.add_argument("--direction", help="comma-separated ray direction (normalised)")
            p.add_argument("--T", type=float, help="end of the ray (default 20)")
        if name == "verify":
            p.add_argument("--corrupt", metavar="NAME",
                           help="sign-flip this catalog potential (negative control)")
    return parser


def _check_threads():
    v = os.environ.get("TKLAB_THREADS")
    if v is not None and (not v.isdigit() or int(v) < 1):
        raise UsageError(f"TKLAB_THREADS must be a positive integer, got {v!r}")


_VALUE_FLAGS = ("--range", "--seed", "--direction", "--angles", "--T", "--tol-psd", "--tol-convex")


def _glue_negative_values(argv):
    """``--range -5:5:0.1`` -> ``--range=-5:5:0.1`` so argparse does not take
    the value for an option."""
    out, it = [], iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is None:
                out.append(tok)
            elif nxt[:1] == "-" and nxt[1:2] in set("0123456789."):
                out.append(f"{tok}={nxt}")
            else:
                out.extend([tok, nxt])
        else:
            out.append(tok)
    return out


def run(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = make_parser().parse_args(_glue_negative_values(argv))
    _check_threads()
    cfg = build_config(args)
    return COMMANDS[args.command][0](cfg)


def main(argv=None):
    try:
        return run(argv)
    except NotKahlerError as exc:
        print(f"tklab: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"tklab: {exc}", file=sys.stderr)
        return 1
    except (UsageError, DomainError, ValueError, KeyError, TypeError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"tklab: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
