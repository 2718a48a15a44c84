"""Command line front end: ``hidacalc verify | converge | volterra | pair``.

Exit status: 0 all checks passed, 1 a check failed, 2 bad config or usage,
3 a precondition of a selected suite is not met.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import chaos as C
from .config import TOL, PreconditionError, TruncationError, TruncationPolicy
from .gelfand import MeasureGrid, TestFamily, VitaliCertificate, WeakIntegrand, dominated_check, vitali_check
from .pathwise import TimeGrid, brownian_path, skorohod_integral
from .reports import csv_text, write_atomic, write_json
from .rng import make_rng
from .suites import SUITES, Context, dual_path_study, shrink_study, trapezoid_order_study, _kernel
from .volterra import constant_kernel, volterra_gap_check, volterra_ito, volterra_stratonovich

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_PRECONDITION = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


@dataclass
class ExperimentConfig:
    policy: TruncationPolicy
    T: float = 1.0
    n: int = 16
    rule: str = "trapezoid"
    mollifier_width: float = 0.5
    shrink: list = field(default_factory=lambda: [0.5 * 2.0**-k for k in range(6)])
    kernel: dict = field(default_factory=lambda: {"family": "fbm-liouville", "H": "0.75"})
    suites: list = field(default_factory=lambda: ["algebra"])
    seed: int | None = None
    out: str = "results"
    trials: int = 20
    samples: int = 100_000

    def canonical(self) -> str:
        p = self.policy
        d = {"K": p.K, "N_max": p.N_max, "headroom": p.headroom, "drop_tol": p.drop_tol,
             "overflow_mode": p.overflow_mode, "T": self.T, "n": self.n, "rule": self.rule,
             "width": self.mollifier_width, "shrink": self.shrink, "kernel": self.kernel,
             "suites": self.suites, "seed": self.seed, "trials": self.trials, "samples": self.samples}
        return json.dumps(d, sort_keys=True)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]


def _line_of(text: str, section: str, key: str) -> int | None:
    cur = None
    for i, raw in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", raw)
        if m:
            cur = m.group(1).strip()
            continue
        if cur == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", raw, re.I):
            return i
    return None


def parse_config(text: str) -> ExperimentConfig:
    """INI experiment description; every value error names its line."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), getattr(exc, "lineno", None)) from None

    def get(section, key, conv, default):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}", _line_of(text, section, key)) from None

    floats = lambda s: [float(v) for v in s.replace(",", " ").split()]
    names = lambda s: [v for v in s.replace(",", " ").split()]
    try:
        policy = TruncationPolicy(
            K=get("truncation", "K", int, 4), N_max=get("truncation", "N_max", int, 4),
            headroom=get("truncation", "headroom", int, 2), drop_tol=get("truncation", "drop_tol", float, 0.0),
            overflow_mode=get("truncation", "overflow_mode", str, "strict"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[truncation] {exc}", _line_of(text, "truncation", "K")) from None
    cfg = ExperimentConfig(policy)
    cfg.T = get("grid", "T", float, cfg.T)
    cfg.n = get("grid", "n", int, cfg.n)
    cfg.rule = get("grid", "rule", str, cfg.rule)
    cfg.mollifier_width = get("mollifier", "width", float, cfg.mollifier_width)
    cfg.shrink = get("mollifier", "shrink", floats, cfg.shrink)
    if cp.has_section("kernel"):
        cfg.kernel = dict(cp.items("kernel"))
    cfg.suites = get("run", "suites", names, cfg.suites)
    cfg.seed = get("run", "seed", int, None)
    cfg.out = get("run", "out", str, cfg.out)
    cfg.trials = get("run", "trials", int, cfg.trials)
    cfg.samples = get("run", "samples", int, cfg.samples)
    try:
        _kernel(SimpleNamespace(kernel_block=cfg.kernel))
    except (KeyError, ValueError, PreconditionError) as exc:
        raise ConfigError(f"[kernel] {exc!s}", _line_of(text, "kernel", "family")) from None
    if cfg.rule not in ("trapezoid", "left"):
        raise ConfigError(f"[grid] rule must be trapezoid or left, got {cfg.rule!r}", _line_of(text, "grid", "rule"))
    for s in cfg.suites:
        if s not in SUITES:
            raise ConfigError(f"unknown suite {s!r}; known: {', '.join(SUITES)}", _line_of(text, "run", "suites"))
    return cfg


def _context(cfg: ExperimentConfig, stream: str) -> Context:
    return Context(cfg.policy, TimeGrid.uniform(cfg.T, cfg.n, cfg.rule), cfg.mollifier_width, cfg.shrink,
                   cfg.kernel, cfg.trials, cfg.samples, make_rng(cfg.seed, stream))


def _emit(args, cfg: ExperimentConfig, name: str, rows: list[dict], columns: list[str], summary: dict) -> None:
    out = Path(args.out or cfg.out)
    for r in rows:
        r["config_hash"] = cfg.hash
    columns = columns + ["config_hash"]
    summary = {"schema_version": SCHEMA_VERSION, "command": name, "config_hash": cfg.hash,
               "seed": cfg.seed, **summary}
    if args.format == "json":
        summary["rows"] = rows
        write_json(out / f"{name}.json", summary)
    else:
        write_atomic(out / f"{name}.csv", csv_text(rows, columns))
        write_json(out / f"{name}_summary.json", summary)


def cmd_verify(args, cfg: ExperimentConfig) -> int:
    suites = args.suite or cfg.suites

    def run(name):
        t0 = time.perf_counter()
        try:
            checks = SUITES[name](_context(cfg, name))
            return name, checks, None, time.perf_counter() - t0
        except (PreconditionError, TruncationError) as exc:
            return name, [], exc, time.perf_counter() - t0

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(run, suites))
    rows, walls, pre = [], {}, []
    for name, checks, exc, wall in results:
        walls[name] = wall
        if exc is not None:
            pre.append(f"{name}: {exc}")
        rows.extend(c.row() for c in checks)
    failed = [f"{r['suite']}.{r['check']}" for r in rows if not r["passed"]]
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['suite']}.{r['check']}  residual={r['residual']:.3e}  tol={r['tol']:.1e}")
    for msg in pre:
        print(f"PRECONDITION  {msg}", file=sys.stderr)
    _emit(args, cfg, "verify", rows, ["suite", "check", "passed", "residual", "tol", "detail"],
          {"failed": failed, "preconditions": pre, "wall_seconds": walls,
           "n_checks": len(rows)})
    if pre:
        return EXIT_PRECONDITION
    return EXIT_FAIL if failed else EXIT_OK


def cmd_converge(args, cfg: ExperimentConfig) -> int:
    ctx = _context(cfg, "converge")
    rows, summary, ok = [], {}, True
    for kind in ("unit", "deterministic"):
        rep = shrink_study(ctx, phi_kind=kind)
        worst = np.max(np.array(list(rep.errors.values())), axis=0)
        for k, (w, e) in enumerate(zip(cfg.shrink, worst), 1):
            rows.append({"study": f"shrink_{kind}", "k": k, "param": w, "z_id": "sup", "abs_error": e,
                         "fitted_rate": None, "flagged": rep.flagged})
        summary[f"shrink_{kind}"] = rep.summary()
        ok &= bool(rep.monotone) or rep.flagged
    flat = shrink_study(ctx, widths=[cfg.shrink[0]] * len(cfg.shrink))
    worst = np.max(np.array(list(flat.errors.values())), axis=0)
    for k, e in enumerate(worst, 1):
        rows.append({"study": "shrink_constant", "k": k, "param": cfg.shrink[0], "z_id": "sup", "abs_error": e,
                     "fitted_rate": None, "flagged": flat.flagged})
    summary["shrink_constant"] = flat.summary()
    ok &= flat.flagged
    mu_n = 8
    mu = MeasureGrid(np.arange(mu_n, dtype=float), np.full(mu_n, 0.5))
    psi = WeakIntegrand(ctx.rand(2) for _ in range(mu_n))
    seq = [psi.scaled(1 + 1 / k) for k in range(1, 11)]
    Z = ctx.test_family()
    vit = vitali_check(seq, psi, mu, Z, VitaliCertificate(1e6, {}, {z: 1e-3 for z, _ in Z}))
    dom = dominated_check(seq, psi, mu, Z, {z_id: 2 * np.abs([C.pairing(p, z) for p in psi]) for z_id, z in Z})
    for label, rep in (("vitali", vit), ("dominated", dom)):
        for r in rep.rows():
            rows.append({"study": label, "param": None, "flagged": rep.flagged, **r})
        summary[label] = rep.summary()
    for r in trapezoid_order_study(ctx):
        rows.append({"study": "trapezoid_halving", "k": r["n"], "param": r["n"], "z_id": "", "abs_error": r["abs_error"],
                     "fitted_rate": r["order"], "flagged": False})
    _emit(args, cfg, "converge", rows, ["study", "k", "param", "z_id", "abs_error", "fitted_rate", "flagged"], summary)
    for r in rows:
        print(",".join("" if r.get(c) is None else str(r.get(c)) for c in ("study", "k", "z_id", "abs_error", "fitted_rate")))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_volterra(args, cfg: ExperimentConfig) -> int:
    ctx = _context(cfg, "volterra")
    try:
        cfg.policy.require_headroom(1, "volterra")
    except PreconditionError as exc:
        print(f"PRECONDITION  {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    spec = ctx.spec()
    phi = brownian_path(spec)
    kernel = _kernel(ctx)
    Z = TestFamily.build(cfg.policy, [C.basis_vector({k: 1}, cfg.policy) for k in range(cfg.policy.K)])
    rows = []
    for m in range(1, len(spec.grid)):
        t = float(spec.grid.points[m])
        ito = volterra_ito(phi, kernel, t, spec)
        strat = volterra_stratonovich(phi, kernel, t, spec)
        for z_id, z in Z:
            rows.append({"t": t, "z_id": z_id, "ito": C.pairing(ito, z), "stratonovich": C.pairing(strat, z),
                         "gap": C.pairing(strat - ito, z)})
    red = volterra_ito(phi, constant_kernel(), cfg.T, spec) - skorohod_integral(phi, spec)
    paths = dual_path_study(ctx)
    gap = volterra_gap_check(phi, kernel, cfg.T, spec)
    summary = {"kernel": cfg.kernel, "identity_kernel_residual": red.max_abs(), "dual_path": paths,
               "gap_minus_trace": gap.residual, "trace_norm": gap.detail["trace_norm"]}
    _emit(args, cfg, "volterra", rows, ["t", "z_id", "ito", "stratonovich", "gap"], summary)
    print(f"identity kernel residual {red.max_abs():.3e}")
    print(f"gap minus trace {gap.residual:.3e} (trace size {gap.detail['trace_norm']:.3e})")
    for r in paths:
        print(f"n={r['n']} path gap {r['path_gap']:.3e} order {r['order']}")
    ok = red.max_abs() <= TOL.exact and gap.passed and paths[-1]["order"] >= TOL.order_min
    return EXIT_OK if ok else EXIT_FAIL


def cmd_pair(args) -> int:
    try:
        a = C.loads(Path(args.a).read_text())
        b = C.loads(Path(args.b).read_text())
    except (OSError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format(C.pairing(a, b), ".17g"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hidacalc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("verify", "converge", "volterra"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--out", help="output directory (overrides [run] out)")
        p.add_argument("--seed", type=int, help="overrides [run] seed")
        p.add_argument("--suite", action="append", help="suite to run (repeatable)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--jobs", type=int, default=4)
    p = sub.add_parser("pair", help="pairing of two serialized chaos vectors")
    p.add_argument("a")
    p.add_argument("b")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "pair":
        return cmd_pair(args)
    try:
        cfg = parse_config(Path(args.config).read_text())
        if args.seed is not None:
            cfg.seed = args.seed
        if cfg.seed is None:
            raise ConfigError("a seed is mandatory ([run] seed or --seed)")
        if args.suite:
            bad = [s for s in args.suite if s not in SUITES]
            if bad:
                raise ConfigError(f"unknown suite(s) {bad}")
            cfg.suites = list(args.suite)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return {"verify": cmd_verify, "converge": cmd_converge, "volterra": cmd_volterra}[args.command](args, cfg)


if __name__ == "__main__":
    sys.exit(main())
