"""Command-line front end.

All input and output is JSON (complex numbers as ``[re, im]`` pairs). Every
command reports the seed it resolved; rerunning with ``--seed`` set to that
value reproduces the output byte for byte.

Exit codes: 0 success, 1 usage or parse error, 2 numeric hard failure,
3 experiment verdict fail.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .abp import ABP, abp_eval, abp_sample_gaussian, abp_shape_report, abp_to_dense, anomaly_mc
from .blackbox import poly_from_dict, system_from_dict
from .experiments import EXPERIMENTS, results_to_csv, run_experiment
from .gamma import gamma_prob, sample_count
from .numerics import (
    HardFailure,
    InvalidArgument,
    NumericFailure,
    RandomStream,
    ResourceError,
    resolve_seed,
    sample_std_gaussian_vector,
)
from .poly import DensePoly, gamma_frob_exact, sample_uniform_zero
from .solver import (
    DEFAULT_ALPHA0,
    DEFAULT_MAX_ATTEMPTS,
    DEFAULT_MAX_KMAX,
    boost_bb_solve,
    verify_approximate_zero,
)

EXIT_OK, EXIT_USAGE, EXIT_HARD, EXIT_VERDICT = 0, 1, 2, 3

# name of the parameter that ``--trials`` maps to, per experiment
TRIALS_PARAM = {
    "kappa-moments": "trials",
    "anomaly-product": "trials",
    "anomaly-identity": "samples",
    "trace-moments": "trials",
    "weyl-identity": "trials",
    "abp-gamma": "abp_samples",
    "line-restriction": "polys",
    "solve-stats": "instances",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numeric failure here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    eps: float = 1e-6
    seed: int = 0
    alpha0: float = DEFAULT_ALPHA0
    max_kmax: int = DEFAULT_MAX_KMAX
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    trials: int | None = None
    threads: int = 1
    fmt: str = "json"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.eps < 0.5:
            raise UsageError(f"--eps must lie in (0, 1/2), got {self.eps}")
        if self.fmt not in ("json", "text", "csv"):
            raise UsageError(f"unknown --format {self.fmt!r}")
        if self.threads < 1:
            raise UsageError("--threads must be at least 1")


def _complex_vector(data) -> np.ndarray:
    try:
        arr = np.array([complex(float(p[0]), float(p[1])) if isinstance(p, (list, tuple))
                        else complex(float(p)) for p in data])
    except (TypeError, ValueError, IndexError) as exc:
        raise UsageError(f"point must be a list of [re, im] pairs: {exc}") from exc
    return arr


def _pairs(z) -> list:
    return [[float(x.real), float(x.imag)] for x in np.asarray(z, dtype=complex)]


def _read_json(path: str | None):
    if path is None:
        raise UsageError("--input is required")
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc


def _emit(payload: dict, fmt: str, out=None):
    out = out or sys.stdout
    if fmt == "text":
        for key in sorted(payload):
            val = payload[key]
            if isinstance(val, (dict, list)):
                val = json.dumps(val, sort_keys=True)
            out.write(f"{key}: {val}\n")
    else:
        out.write(json.dumps(payload, sort_keys=True) + "\n")


def _parse_profile(text: str | None):
    if text is None or text.strip() in ("", "()"):
        return ()
    try:
        return tuple(int(t) for t in text.replace("(", "").replace(")", "").split(",") if t.strip())
    except ValueError as exc:
        raise UsageError(f"--profile must be comma separated integers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig) -> int:
    data = _read_json(cfg.input)
    rng = RandomStream(cfg.seed)
    try:
        F = system_from_dict(data, rng.child(0))
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc
    if not F.is_square:
        raise UsageError(f"need n polynomials in n+1 variables, got {len(F)} for n = {F.n}")
    rep = boost_bb_solve(F, cfg.eps, rng.child(1), alpha0=cfg.alpha0,
                         max_attempts=cfg.max_attempts, max_kmax=cfg.max_kmax, report=True)
    payload = rep.to_dict()
    payload["seed"] = cfg.seed
    payload["n"] = F.n
    payload["degrees"] = list(F.degrees)
    if rep.success:
        ver = verify_approximate_zero(F, rep.result)
        payload["verification"] = {k: v for k, v in ver.items() if k != "distances"}
    _emit(payload, cfg.fmt)
    return EXIT_OK if rep.success else EXIT_HARD


def _gamma_target(data, index: int) -> tuple[dict, list | None]:
    point = data.get("point") if isinstance(data, dict) else None
    if isinstance(data, dict) and "polys" in data:
        polys = data["polys"]
        if not 0 <= index < len(polys):
            raise UsageError(f"--index {index} out of range for {len(polys)} polynomials")
        entry = dict(polys[index])
        entry.setdefault("n", data.get("n"))
        return entry, point
    return data, point


def cmd_gamma(cfg: RunConfig) -> int:
    data = _read_json(cfg.input)
    entry, point = _gamma_target(data, cfg.extra.get("index", 0))
    if cfg.extra.get("point") is not None:
        point = json.loads(cfg.extra["point"])
    rng = RandomStream(cfg.seed)
    try:
        n = entry.get("n")
        f = poly_from_dict(entry, None if n is None else int(n), rng.child(0))
    except (InvalidArgument, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if point is None:
        z = sample_uniform_zero(f, rng.child(1))
        where = "uniform zero"
    else:
        z = _complex_vector(point)
        where = "given"
        if z.shape != (f.n + 1,):
            raise UsageError(f"point has {z.size} coordinates, expected {f.n + 1}")
    est = gamma_prob(f, z, cfg.eps, rng.child(2))
    payload = {
        "seed": cfg.seed,
        "point": _pairs(z / np.linalg.norm(z)),
        "point_source": where,
        "degree": f.degree,
        "n": f.n,
        "gamma_prob": est.to_dict(),
        "s_formula": sample_count(f.degree, cfg.eps) if f.degree >= 2 else 0,
    }
    src = f.source
    if isinstance(src, ABP):
        try:
            src = abp_to_dense(src)
        except ResourceError:
            src = None
    if isinstance(src, DensePoly):
        exact = gamma_frob_exact(src, z)
        upper = 192.0 * f.n**2 * f.degree
        ratio = est.value / exact if exact > 0 else (math.inf if est.value > 0 else 1.0)
        payload["gamma_frob_exact"] = exact
        payload["ratio"] = ratio if math.isfinite(ratio) else "inf"
        payload["ratio_in_range"] = bool(1.0 <= ratio <= upper) if exact > 0 else est.value == 0
        payload["ratio_upper"] = upper
    _emit(payload, cfg.fmt)
    return EXIT_OK


def _load_abp(cfg: RunConfig) -> ABP:
    data = _read_json(cfg.input)
    try:
        return ABP.from_dict(data)
    except (InvalidArgument, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"not a valid ABP: {exc}") from exc


def cmd_abp(cfg: RunConfig) -> int:
    sub = cfg.extra["abp_command"]
    rng = RandomStream(cfg.seed)
    if sub == "sample":
        n, degree = cfg.extra["n"], cfg.extra["degree"]
        profile = _parse_profile(cfg.extra.get("profile"))
        if cfg.extra.get("profile") is None:
            profile = (2,) * (degree - 1)
        if len(profile) != degree - 1:
            raise UsageError(f"profile {profile} has {len(profile)} inner widths; "
                             f"degree {degree} needs {degree - 1}")
        a = abp_sample_gaussian(n, profile, rng)
        payload = a.to_dict()
        payload["seed"] = cfg.seed
    elif sub == "eval":
        a = _load_abp(cfg)
        if cfg.extra.get("point") is None:
            raise UsageError("abp eval needs --point")
        z = _complex_vector(json.loads(cfg.extra["point"]))
        if z.shape != (a.n + 1,):
            raise UsageError(f"point has {z.size} coordinates, expected {a.n + 1}")
        v = complex(abp_eval(a, z))
        payload = {"seed": cfg.seed, "value": [v.real, v.imag]}
    elif sub == "expand":
        a = _load_abp(cfg)
        try:
            payload = abp_to_dense(a).to_dict()
        except ResourceError as exc:
            raise UsageError(str(exc)) from exc
        payload["seed"] = cfg.seed
    elif sub == "stats":
        a = _load_abp(cfg)
        payload = abp_shape_report(a)
        payload["profile"] = list(payload["profile"])
        payload["seed"] = cfg.seed
        samples = cfg.trials or 0
        if samples and a.degree >= 3:
            # anomaly of the interior layer product at a random Gaussian point
            z = sample_std_gaussian_vector(a.n + 1, rng.child(0))
            mats = [np.tensordot(z, t, axes=(0, 0)) for t in a.tensors[1:-1]]
            prod = mats[0]
            for m in mats[1:]:
                prod = prod @ m
            val, se = anomaly_mc(prod, samples, rng.child(1), return_stderr=True)
            payload["anomaly"] = {"value": val, "stderr": se, "samples": samples}
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown abp subcommand {sub!r}")
    _emit(payload, cfg.fmt)
    return EXIT_OK


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def cmd_experiment(cfg: RunConfig) -> int:
    name = cfg.extra["name"]
    if name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {name!r}; choose from {', '.join(sorted(EXPERIMENTS))}")
    params = {"seed": cfg.seed}
    for key in ("n", "degree", "a", "r"):
        if cfg.extra.get(key) is not None:
            params[key] = cfg.extra[key]
    if cfg.extra.get("profile") is not None:
        params["profile"] = _parse_profile(cfg.extra["profile"])
    if cfg.trials is not None:
        params[TRIALS_PARAM[name]] = cfg.trials
    if name in ("kappa-moments", "anomaly-product", "trace-moments", "abp-gamma",
                "line-restriction", "solve-stats"):
        params["threads"] = cfg.threads
    if name == "solve-stats":
        params["eps"] = cfg.eps
        params["max_attempts"] = cfg.max_attempts
    for item in cfg.extra.get("set") or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        params[key.strip().replace("-", "_")] = _coerce(value)
    try:
        res = run_experiment(name, **params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for {name}: {exc}") from exc
    if cfg.fmt == "csv":
        sys.stdout.write(results_to_csv([res]))
    elif cfg.fmt == "text":
        sys.stdout.write(f"experiment: {res.name}\nseed: {res.seed}\nverdict: {res.verdict}\n")
        for c in res.checks:
            mark = "PASS" if c.passed else "FAIL"
            sys.stdout.write(f"  [{mark}] {c.label}: {c.estimate:.6g} +- {c.stderr:.3g} "
                             f"{c.relation} {c.target:.6g}\n")
    else:
        sys.stdout.write(res.to_json() + "\n")
    return EXIT_VERDICT if res.verdict == "fail" else EXIT_OK


COMMANDS = {"solve": cmd_solve, "gamma": cmd_gamma, "abp": cmd_abp, "experiment": cmd_experiment}


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None,
                   help="root seed (default: $RIGIDSOLVE_SEED, else random)")
    p.add_argument("--format", dest="fmt", default="json", choices=("json", "text", "csv"))
    p.add_argument("--eps", type=float, default=1e-6, help="failure probability in (0, 1/2)")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rigidsolve",
                     description="Black-box rigid continuation solver and Monte-Carlo checks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a square system given as JSON")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--alpha0", type=float, default=DEFAULT_ALPHA0)
    p.add_argument("--max-kmax", type=int, default=DEFAULT_MAX_KMAX)
    p.add_argument("--max-attempts", type=int, default=DEFAULT_MAX_ATTEMPTS)

    p = sub.add_parser("gamma", help="randomized gamma_Frob estimate at a point")
    _common(p)
    p.add_argument("--input", required=True, help="polynomial or system JSON")
    p.add_argument("--point", default=None, help="JSON list of [re, im]; default: uniform zero")
    p.add_argument("--index", type=int, default=0, help="polynomial index inside a system")

    p = sub.add_parser("abp", help="algebraic branching programs")
    abp_sub = p.add_subparsers(dest="abp_command", required=True, parser_class=_Parser)
    q = abp_sub.add_parser("sample", help="sample a Gaussian ABP")
    _common(q)
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--degree", type=int, required=True)
    q.add_argument("--profile", default=None, help="inner widths, e.g. 2,2")
    for name, hlp in (("eval", "evaluate at --point"), ("expand", "dense expansion"),
                      ("stats", "shape report")):
        q = abp_sub.add_parser(name, help=hlp)
        _common(q)
        q.add_argument("--input", required=True)
        if name == "eval":
            q.add_argument("--point", default=None)
        if name == "stats":
            q.add_argument("--trials", type=int, default=None,
                           help="anomaly samples for the inner product (default: skip)")

    p = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    _common(p)
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--degree", type=int, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--profile", default=None)
    p.add_argument("--max-attempts", type=int, default=DEFAULT_MAX_ATTEMPTS)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="extra experiment parameter (JSON value)")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    known = {"command", "input", "eps", "seed", "alpha0", "max_kmax", "max_attempts",
             "trials", "threads", "fmt"}
    extra = {k: v for k, v in vars(args).items() if k not in known}
    kw = {k: getattr(args, k) for k in known if hasattr(args, k)}
    kw["seed"] = resolve_seed(kw.get("seed"))
    return RunConfig(extra=extra, **kw)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"rigidsolve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgument as exc:
        print(f"rigidsolve: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HardFailure, NumericFailure) as exc:
        print(f"rigidsolve: numeric failure: {exc}", file=sys.stderr)
        return EXIT_HARD


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
