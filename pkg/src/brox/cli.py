"""Command line runner: ``brox run | certify | lmo-table | counterexample``.

Configs are flat ``key = value`` text files.  Values are read as JSON when
possible (numbers, lists, quoted strings) and as bare strings otherwise, so
``norm = l2`` and ``norm = "l2"`` mean the same thing.  Relative data paths
are resolved against the directory holding the config file.

Exit codes: 0 all applicable certificates pass, 1 a certificate failed,
2 bad config or arguments, 3 inner solver did not converge, 4 the
counterexample search came up empty.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .broximal import BroxConfig
from .certify import CSV_SCHEMA, certify_trajectory, counterexample_trajectory, find_linf_distance_increase
from .exceptions import ArgumentError, ConvergenceError, SearchFailure
from .geometry import NormDescriptor, dual_norm_value, lmo, norm_value, parse_norm
from .methods import RadiusSchedule, StepRecord, Trajectory, run_bpm, run_linearized
from .problems import LeastSquaresObjective, LogisticObjective, make_quadratic

__all__ = [
    "ExperimentConfig",
    "build_objective",
    "execute",
    "trajectory_csv",
    "read_trajectory",
    "lmo_table",
    "main",
]

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_SEARCH = 0, 1, 2, 3, 4

TRAJECTORY_COLUMNS = ["k", "t_k", "f", "fgap", "dual_grad_norm", "step_len",
                      "dist_l2", "dist_norm", "brox_path", "residual"]

# config key -> (attribute, type)
_KEYS = {
    "problem": ("problem", str),
    "eigenvalues": ("eigenvalues", list),
    "seed": ("seed", int),
    "xstar": ("xstar", list),
    "fstar": ("fstar", float),
    "features": ("features", str),
    "labels": ("labels", str),
    "targets": ("targets", str),
    "ridge": ("ridge", float),
    "norm": ("norm", str),
    "method": ("method", str),
    "radius": ("radius", str),
    "iters": ("iters", int),
    "stop_tol": ("stop_tol", float),
    "x0": ("x0", list),
    "brox.tol": ("brox_tol", float),
    "brox.fw_max_iters": ("brox_fw_max_iters", int),
    "brox.fw_gap_tol": ("brox_fw_gap_tol", float),
    "brox.grid_resolution": ("brox_grid_resolution", float),
    "out": ("out", str),
}
_ATTR_TO_KEY = {attr: key for key, (attr, _) in _KEYS.items()}


def _fmt(x):
    return f"{float(x):.17g}"


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run."""

    problem: str = "quadratic"
    eigenvalues: list | None = None
    seed: int = 0
    xstar: list | None = None
    fstar: float = 0.0
    features: str | None = None
    labels: str | None = None
    targets: str | None = None
    ridge: float = 0.0
    norm: str = "l2"
    method: str = "bpm"
    radius: str = "const:1"
    iters: int = 10
    stop_tol: float = 0.0
    x0: list | None = None
    brox_tol: float = 1e-12
    brox_fw_max_iters: int = 2_000
    brox_fw_gap_tol: float = 1e-10
    brox_grid_resolution: float = 1e-3
    out: str | None = None
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    # -- parsing ----------------------------------------------------------
    @classmethod
    def from_text(cls, text, base_dir=None):
        cfg = cls(base_dir=Path(base_dir) if base_dir else Path("."))
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ArgumentError(f"line {lineno}: expected 'key = value'")
            if key not in _KEYS:
                raise ArgumentError(f"line {lineno}: unknown key {key!r}")
            attr, typ = _KEYS[key]
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError:
                parsed = value
            setattr(cfg, attr, _coerce(parsed, typ, key))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ArgumentError(f"cannot read config {str(path)!r}: {exc}") from exc
        return cls.from_text(text, path.parent)

    def to_text(self):
        """Serialize; ``from_text(to_text())`` reproduces every field."""
        lines = []
        for f in fields(self):
            if f.name == "base_dir":
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{_ATTR_TO_KEY[f.name]} = {json.dumps(value)}")
        return "\n".join(lines) + "\n"

    def validate(self):
        if self.problem not in ("quadratic", "least_squares", "logistic"):
            raise ArgumentError(f"unknown problem {self.problem!r}")
        if self.method not in ("bpm", "linearized"):
            raise ArgumentError(f"unknown method {self.method!r}")
        if self.x0 is None:
            raise ArgumentError("x0 is required")
        if self.problem == "quadratic" and self.eigenvalues is None:
            raise ArgumentError("quadratic problems need eigenvalues")
        if self.problem == "least_squares" and not (self.features and self.targets):
            raise ArgumentError("least_squares problems need features and targets")
        if self.problem == "logistic" and not (self.features and self.labels):
            raise ArgumentError("logistic problems need features and labels")
        for name in ("features", "labels", "targets"):
            if getattr(self, name) and not self.resolve(getattr(self, name)).is_file():
                raise ArgumentError(f"{name} file {getattr(self, name)!r} does not exist")
        if self.iters < 1:
            raise ArgumentError("iters must be >= 1")
        RadiusSchedule.parse(self.radius)
        self.brox_config()

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def brox_config(self):
        return BroxConfig(self.brox_tol, self.brox_fw_max_iters, self.brox_fw_gap_tol,
                          self.brox_grid_resolution)

    def schedule(self):
        return RadiusSchedule.parse(self.radius)

    def norm_descriptor(self, dimension):
        head, _, arg = self.norm.partition(":")
        if head.strip().lower() == "ellipsoid" and arg:
            return parse_norm(f"ellipsoid:{self.resolve(arg.strip())}", dimension)
        return parse_norm(self.norm, dimension)


def _coerce(value, typ, key):
    try:
        if typ is list:
            if isinstance(value, (int, float)):
                value = [value]
            if isinstance(value, str):
                value = [float(v) for v in value.split(",") if v.strip()]
            if not isinstance(value, list):
                raise TypeError
            return [float(v) for v in value]
        if typ is int:
            if isinstance(value, float) and not value.is_integer():
                raise TypeError
            return int(value)
        if typ is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ArgumentError(f"bad value for {key}: {value!r}") from exc


def _load_csv(path):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except (OSError, ValueError) as exc:
        raise ArgumentError(f"cannot read data file {str(path)!r}: {exc}") from exc


def build_objective(cfg: ExperimentConfig, seed=None):
    """Objective described by ``cfg``; ``seed`` overrides ``cfg.seed``."""
    if cfg.problem == "quadratic":
        d = len(cfg.eigenvalues)
        xstar = cfg.xstar if cfg.xstar is not None else [0.0] * d
        return make_quadratic(cfg.eigenvalues, cfg.seed if seed is None else seed, xstar,
                              cfg.fstar)
    M = _load_csv(cfg.resolve(cfg.features))
    if cfg.problem == "least_squares":
        return LeastSquaresObjective(M, _load_csv(cfg.resolve(cfg.targets)).reshape(-1))
    return LogisticObjective(M, _load_csv(cfg.resolve(cfg.labels)).reshape(-1), cfg.ridge)


def _seed_override():
    raw = os.environ.get("BROX_SEED")
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ArgumentError(f"BROX_SEED must be an integer, got {raw!r}") from exc


def execute(cfg: ExperimentConfig, seed=None):
    """Run ``cfg`` and certify it.  Returns ``(objective, trajectory, report)``."""
    f = build_objective(cfg, seed)
    norm = cfg.norm_descriptor(f.dimension)
    sched = cfg.schedule()
    if cfg.method == "bpm":
        traj = run_bpm(f, norm, cfg.x0, sched, cfg.brox_config(), cfg.iters, cfg.stop_tol)
    else:
        traj = run_linearized(f, norm, cfg.x0, sched, cfg.iters, cfg.stop_tol)
    report = certify_trajectory(traj, f.x_star, f.f_star, cfg.brox_tol)
    return f, traj, report


# -- trajectory csv --------------------------------------------------------

def _opt(x):
    return "" if x is None else _fmt(x)


def trajectory_csv(traj: Trajectory, x_star=None, f_star=None):
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    d = traj.norm.dimension
    w.writerow(TRAJECTORY_COLUMNS + [f"x_{i}" for i in range(d)])
    for r in traj.records:
        fgap = None if f_star is None else r.f - f_star
        dl2 = dn = None
        if x_star is not None:
            dl2 = float(np.linalg.norm(r.x - x_star))
            dn = norm_value(traj.norm, r.x - x_star)
        w.writerow([r.k, _opt(r.t), _fmt(r.f), _opt(fgap), _fmt(r.dual_grad_norm),
                    _opt(r.step_length), _opt(dl2), _opt(dn), r.brox_path or "",
                    _opt(r.stationarity_residual)] + [_fmt(v) for v in r.x])
    return buf.getvalue()


def read_trajectory(path, f, norm, method, config=None) -> Trajectory:
    """Rebuild a :class:`Trajectory` from ``trajectory.csv``.

    Iterates come from the ``x_*`` columns; function values and gradients are
    recomputed from ``f`` so the certificates see the same numbers a fresh run
    would produce.
    """
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise ArgumentError(f"cannot read trajectory {str(path)!r}: {exc}") from exc
    rows = list(csv.DictReader(lines))
    if not rows:
        raise ArgumentError("trajectory file has no rows")
    xcols = [c for c in rows[0] if c.startswith("x_")]
    if len(xcols) != f.dimension:
        raise ArgumentError("trajectory iterate width does not match the problem")

    def num(s):
        return None if s == "" else float(s)

    records = []
    try:
        for row in rows:
            x = np.array([float(row[c]) for c in xcols])
            g = f.gradient(x)
            records.append(StepRecord(
                k=int(row["k"]), x=x, f=f.value(x), grad=g,
                dual_grad_norm=dual_norm_value(norm, g), t=num(row["t_k"]),
                step_length=num(row["step_len"]), brox_path=row["brox_path"] or None,
                stationarity_residual=num(row["residual"])))
    except (KeyError, ValueError) as exc:
        raise ArgumentError(f"malformed trajectory file: {exc}") from exc
    return Trajectory(records, norm, f.label, method, config or {})


# -- commands --------------------------------------------------------------

def _write(out: Path, name, text):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _run_one(cfg_path, out, seed):
    cfg = ExperimentConfig.load(cfg_path)
    if out is None:
        out = cfg.resolve(cfg.out) if cfg.out else Path("out") / Path(cfg_path).stem
    f, traj, report = execute(cfg, seed)
    _write(out, "trajectory.csv", trajectory_csv(traj, f.x_star, f.f_star))
    _write(out, "certificates.csv", report.to_csv())
    _write(out, "report.txt", report.to_text())
    return report


def cmd_run(args):
    seed = _seed_override()
    configs = args.configs
    outs = []
    for c in configs:
        if args.out is None:
            outs.append(None)
        elif len(configs) == 1:
            outs.append(Path(args.out))
        else:
            outs.append(Path(args.out) / Path(c).stem)

    def job(pair):
        c, o = pair
        try:
            report = _run_one(c, o, seed)
        except ArgumentError as exc:
            return EXIT_CONFIG, f"{c}: config error: {exc}"
        except ConvergenceError as exc:
            return EXIT_CONVERGENCE, f"{c}: convergence error at {exc}"
        print(report.to_text(), end="")
        return (EXIT_OK if report.passed else EXIT_CERT), None

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(job, zip(configs, outs)))
    code = EXIT_OK
    for rc, msg in results:
        if msg:
            print(msg, file=sys.stderr)
        code = max(code, rc)
    return code


def cmd_certify(args):
    cfg = ExperimentConfig.load(args.config)
    f = build_objective(cfg, _seed_override())
    norm = cfg.norm_descriptor(f.dimension)
    traj = read_trajectory(args.trajectory, f, norm, cfg.method)
    report = certify_trajectory(traj, f.x_star, f.f_star, cfg.brox_tol)
    if args.out:
        _write(Path(args.out), "certificates.csv", report.to_csv())
        _write(Path(args.out), "report.txt", report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK if report.passed else EXIT_CERT


def lmo_table(dims=(2, 3), norms=("l1", "l2", "linf", "lp:3", "lp:1.5", "spectral:2x2",
                                  "spectral:2x3"), seed=0, samples=3, grads=None):
    """CSV of LMO outputs with the check ``<g, lmo(g)> = -||g||_*``.

    Spectral norms take their size from the shape and ignore ``dims``; the
    other norms get one block per dimension.  ``grads`` replaces the random
    gradients with the given vectors (only those of matching length are used).
    """
    rng = np.random.default_rng(seed)
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["norm", "dim", "row", "g", "lmo", "inner", "neg_dual_norm", "abs_diff"])
    for spec in norms:
        sizes = [None] if spec.startswith("spectral") else list(dims)
        for d in sizes:
            n = parse_norm(spec, d)
            if grads is not None:
                gs = [np.asarray(g, dtype=float) for g in grads if len(g) == n.dimension]
            else:
                gs = [rng.standard_normal(n.dimension) for _ in range(samples)]
            for i, g in enumerate(gs):
                u = lmo(n, g)
                inner = float(g @ u)
                neg = -dual_norm_value(n, g)
                w.writerow([n.spec(), n.dimension, i, " ".join(_fmt(v) for v in g),
                            " ".join(_fmt(v) for v in u), _fmt(inner), _fmt(neg),
                            _fmt(abs(inner - neg))])
    return buf.getvalue()


def cmd_lmo_table(args):
    dims = [int(s) for s in args.dims.split(",") if s.strip()]
    norms = [s.strip() for s in args.norms.split(";") if s.strip()]
    grads = None
    if args.grad:
        grads = [[float(v) for v in g.split(",")] for g in args.grad]
    text = lmo_table(dims, norms, args.seed, args.samples, grads)
    if args.out:
        _write(Path(args.out), "lmo_table.csv", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_range(text):
    lo, sep, hi = text.partition(":")
    try:
        return range(int(lo), int(hi)) if sep else range(int(lo))
    except ValueError as exc:
        raise ArgumentError(f"bad seed range {text!r}; use N or LO:HI") from exc


def counterexample_config(cx, iters=30):
    cfg = ExperimentConfig(problem="quadratic", eigenvalues=[float(v) for v in cx.eigenvalues],
                           seed=int(cx.seed), xstar=[float(v) for v in cx.x_star], fstar=0.0,
                           norm="linf", method="bpm", radius=f"const:{cx.t!r}", iters=iters,
                           x0=[float(v) for v in cx.x0])
    header = [
        "# l-infinity ball step that increases the distance to x*",
        f"# A = {json.dumps(np.asarray(cx.A).tolist())}",
        f"# x1 = {json.dumps([float(v) for v in cx.x1])}",
        f"# dist0 = {_fmt(cx.dist0)}  dist1 = {_fmt(cx.dist1)}  ratio = {_fmt(cx.ratio)}",
    ]
    return "\n".join(header) + "\n" + cfg.to_text()


def cmd_counterexample(args):
    cx = find_linf_distance_increase(_parse_range(args.seeds))
    out = Path(args.out or "out/counterexample")
    traj = counterexample_trajectory(cx, args.iters)
    _write(out, "counterexample.cfg", counterexample_config(cx, args.iters))
    _write(out, "counterexample.csv", trajectory_csv(traj, cx.x_star, 0.0))
    print(f"seed {cx.seed}: t = {cx.t:.6g}, ||x0 - x*||_inf = {cx.dist0:.6g}, "
          f"||x1 - x*||_inf = {cx.dist1:.6g} (ratio {cx.ratio:.4f})")
    print(f"wrote {out / 'counterexample.cfg'} and {out / 'counterexample.csv'}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="brox", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one or more configs and certify them")
    r.add_argument("configs", nargs="+")
    r.add_argument("--out", help="output directory (one subdirectory per config if several)")
    r.add_argument("--jobs", type=int, default=1, help="worker threads")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("certify", help="certify an existing trajectory.csv")
    c.add_argument("trajectory")
    c.add_argument("config")
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    t = sub.add_parser("lmo-table", help="tabulate LMO outputs and dual-norm checks")
    t.add_argument("--dims", default="2,3")
    t.add_argument("--norms", default="l1;l2;linf;lp:3;lp:1.5;spectral:2x2;spectral:2x3",
                   help="semicolon-separated norm specs")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--samples", type=int, default=3)
    t.add_argument("--grad", action="append", help="explicit gradient, comma separated")
    t.add_argument("--out")
    t.set_defaults(func=cmd_lmo_table)

    x = sub.add_parser("counterexample", help="search for an l-infinity distance increase")
    x.add_argument("--seeds", default="0:1000", help="N or LO:HI")
    x.add_argument("--iters", type=int, default=30)
    x.add_argument("--out")
    x.set_defaults(func=cmd_counterexample)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence error at {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except SearchFailure as exc:
        print(f"search failure: {exc}", file=sys.stderr)
        return EXIT_SEARCH


if __name__ == "__main__":
    sys.exit(main())
