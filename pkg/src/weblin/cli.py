"""Command-line front end.

    weblin check      --f EXPR --g EXPR [...]    linearizability verdict
    weblin invariants --f EXPR --g EXPR [...]    per-invariant evidence
    weblin linearize  --f EXPR --g EXPR [...]    flat coordinates + residuals
    weblin selftest   [--equivalence]            built-in corpus regression

Exit codes for check/invariants: 0 = YES, 1 = NO, 2 = INCONCLUSIVE,
3 = usage or expression error.  All randomness is controlled by --seed;
JSON output is byte-identical across runs with the same configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

from .expr import ExprError, ParseError, parse, format_expr
from .calculus import Rect, WebSpec, DomainTooSingularError
from .invariants import (ZeroTestPolicy, check_dweb, InvariantReport,
                         YES, NO, INCONCLUSIVE)
from . import linearizer as lin
from . import corpus

EXIT_YES = 0
EXIT_NO = 1
EXIT_INCONCLUSIVE = 2
EXIT_USAGE = 3

_VERDICT_EXIT = {YES: EXIT_YES, NO: EXIT_NO, INCONCLUSIVE: EXIT_INCONCLUSIVE}


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we reserve 2
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    f: str | None = None
    g: list[str] = field(default_factory=list)
    domain: tuple[str, str, str, str] | None = None
    seed: int = 1
    samples: int = 8
    precision: int = 256
    grid: int = lin.DEFAULT_GRID_N
    base: tuple[str, str] | None = None
    lambda0: tuple[str, str] = ("0", "0")
    params: dict[str, str] = field(default_factory=dict)
    json_output: bool = False
    svg: str | None = None
    force: bool = False
    equivalence: bool = False

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "domain": list(self.domain) if self.domain else None,
            "seed": self.seed,
            "samples": self.samples,
            "precision": self.precision,
            "grid": self.grid,
            "base": list(self.base) if self.base else None,
            "lambda0": list(self.lambda0),
            "params": dict(sorted(self.params.items())),
            "force": self.force,
        }


def _split_csv(text: str, n: int, what: str) -> list[str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise UsageError(f"{what} needs {n} comma-separated values")
    return parts


def _fraction(text: str, what: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as err:
        raise UsageError(f"bad {what} value {text!r}: {err}") from None


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    cfg.json_output = getattr(args, "json", False)
    cfg.seed = getattr(args, "seed", 1)
    cfg.samples = getattr(args, "samples", 8)
    cfg.precision = getattr(args, "precision", 256)
    cfg.grid = getattr(args, "grid", lin.DEFAULT_GRID_N)
    cfg.force = getattr(args, "force", False)
    cfg.svg = getattr(args, "svg", None)
    cfg.equivalence = getattr(args, "equivalence", False)
    if getattr(args, "f", None) is not None:
        cfg.f = args.f
    cfg.g = list(getattr(args, "g", None) or [])
    if getattr(args, "domain", None):
        cfg.domain = tuple(_split_csv(args.domain, 4, "--domain"))
    if getattr(args, "base", None):
        cfg.base = tuple(_split_csv(args.base, 2, "--base"))
    if getattr(args, "lambda0", None):
        cfg.lambda0 = tuple(_split_csv(args.lambda0, 2, "--lambda0"))
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise UsageError(f"--param expects name=value, got {item!r}")
        name, _, value = item.partition("=")
        cfg.params[name.strip()] = value.strip()
    if cfg.samples < 1:
        raise UsageError("--samples must be positive")
    if cfg.precision < 24:
        raise UsageError("--precision must be at least 24 bits")
    return cfg


def _web_from_config(cfg: RunConfig) -> WebSpec:
    if cfg.f is None or not cfg.g:
        raise UsageError("need --f and at least one --g (two web functions)")
    try:
        f = parse(cfg.f)
        gs = tuple(parse(s) for s in cfg.g)
    except ParseError as err:
        raise UsageError(f"expression error: {err}") from None
    kw = {}
    if cfg.domain:
        vals = [_fraction(v, "--domain") for v in cfg.domain]
        kw["domain"] = Rect(*vals)
    return WebSpec(f=f, gs=gs, seed=cfg.seed, **kw)


def _policy(cfg: RunConfig) -> ZeroTestPolicy:
    return ZeroTestPolicy(points=cfg.samples, precision=cfg.precision)


def _report_json(cfg: RunConfig, web: WebSpec, verdict: str,
                 reports: list[InvariantReport],
                 linearization: dict | None = None) -> dict:
    return {
        "web": {"f": format_expr(web.f), "g": [format_expr(g) for g in web.gs]},
        "config": cfg.to_json(),
        "invariants": [r.to_json() for r in reports],
        "verdict": verdict,
        "linearization": linearization,
    }


def _print_invariant_line(r: InvariantReport, verbose: bool) -> None:
    extra = f", {len(r.evidence)} samples, {r.elapsed:.2f}s"
    print(f"{r.name}: {r.verdict} ({r.mode}, dag {r.dag_size}{extra})")
    if r.reason:
        print(f"    reason: {r.reason}")
    if verbose:
        for e in r.evidence:
            p = e.point
            ptxt = f"x={p.x} y={p.y}"
            if p.params:
                ptxt += " " + " ".join(f"{k}={v}" for k, v in
                                       sorted(p.params.items()))
            print(f"    {ptxt}: residual {e.residual} [{e.mode}]")


def _echo_web(web: WebSpec) -> None:
    gtxt = "; ".join(f"g{alpha} = {format_expr(g)}"
                     for alpha, g in zip(range(4, web.d + 1), web.gs))
    print(f"web (d={web.d}): f = {format_expr(web.f)}; {gtxt}")
    d = web.domain
    print(f"domain: [{d.x_lo}, {d.x_hi}] x [{d.y_lo}, {d.y_hi}], seed {web.seed}")


def cmd_check(cfg: RunConfig, verbose_evidence: bool = False) -> int:
    web = _web_from_config(cfg)
    try:
        verdict, reports = check_dweb(web, _policy(cfg))
    except DomainTooSingularError as err:
        print(f"INCONCLUSIVE: {err}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    if cfg.json_output:
        print(json.dumps(_report_json(cfg, web, verdict, reports), indent=2))
    else:
        _echo_web(web)
        for r in reports:
            _print_invariant_line(r, verbose_evidence)
        print(f"verdict: {verdict}")
    return _VERDICT_EXIT[verdict]


def cmd_invariants(cfg: RunConfig) -> int:
    return cmd_check(cfg, verbose_evidence=True)


def cmd_linearize(cfg: RunConfig) -> int:
    web = _web_from_config(cfg)
    params = {k: _fraction(v, "--param") for k, v in cfg.params.items()}
    verdict, reports = check_dweb(web, _policy(cfg))
    try:
        grid = lin.GridSpec(rect=web.domain, nx=cfg.grid, ny=cfg.grid)
    except lin.LinearizerError as err:
        raise UsageError(str(err)) from None
    base = None
    if cfg.base:
        base = (float(_fraction(cfg.base[0], "--base")),
                float(_fraction(cfg.base[1], "--base")))
    lam0 = (float(_fraction(cfg.lambda0[0], "--lambda0")),
            float(_fraction(cfg.lambda0[1], "--lambda0")))
    if verdict != YES and not cfg.force:
        msg = (f"web verdict is {verdict}; linearization refused "
               "(--force to run it anyway as a negative control)")
        if cfg.json_output:
            print(json.dumps(_report_json(cfg, web, verdict, reports,
                                          {"refused": msg}), indent=2))
        else:
            _echo_web(web)
            print(msg)
        return EXIT_NO if verdict == NO else EXIT_INCONCLUSIVE
    try:
        lam1, lam2 = lin.integrate_lambda(web, base=base, lam0=lam0,
                                          grid=grid, params=params, force=True)
        conn = lin.build_connection(lam1, lam2, web, params=params)
        result = lin.flat_coordinates(conn, base=base, force=cfg.force)
        lin.straightness_report(result, web, params=params)
    except lin.LinearizerError as err:
        print(f"linearization failed: {err}", file=sys.stderr)
        return EXIT_NO
    if cfg.svg:
        lin.render_svg(result, web, cfg.svg, params=params)
    if cfg.json_output:
        print(json.dumps(_report_json(cfg, web, verdict, reports,
                                      result.to_json()), indent=2))
    else:
        _echo_web(web)
        print(f"verdict: {verdict}")
        print(f"grid: {cfg.grid}x{cfg.grid}, base {result.base}, "
              f"lambda0 {result.lam0}")
        print(f"flatness residual:          {result.flatness_residual:.3e}")
        print(f"path independence residual: "
              f"{result.path_independence_residual:.3e}")
        print("straightness (max normalized line-fit residual per foliation):")
        for k, v in sorted(result.straightness.items()):
            print(f"    {k:4s} {v:.3e}")
        if result.skipped_leaves:
            print(f"skipped leaves: {result.skipped_leaves}")
        if cfg.svg:
            print(f"svg written to {cfg.svg}")
    return EXIT_YES


def cmd_selftest(cfg: RunConfig) -> int:
    rows = []
    failures = 0
    t0 = time.perf_counter()
    cases = list(corpus.CASES) + [corpus.LINEAR_FIVE_WEB]
    for case in cases:
        web = corpus.web_for(case, seed=cfg.seed)
        verdict, _ = check_dweb(web, _policy(cfg))
        ok = verdict == case.expected
        failures += 0 if ok else 1
        rows.append({"case": case.name, "variant": "plain",
                     "expected": case.expected, "verdict": verdict,
                     "ok": ok})
    if cfg.equivalence:
        for case in corpus.CASES:
            web = corpus.substituted_web(case, seed=cfg.seed)
            verdict, _ = check_dweb(web, _policy(cfg))
            ok = verdict == case.expected
            failures += 0 if ok else 1
            rows.append({"case": case.name, "variant": "substituted",
                         "expected": case.expected, "verdict": verdict,
                         "ok": ok})
    elapsed = time.perf_counter() - t0
    if cfg.json_output:
        print(json.dumps({"config": cfg.to_json(), "cases": rows,
                          "failures": failures,
                          "elapsed_seconds": repr(elapsed)}, indent=2))
    else:
        for r in rows:
            mark = "ok " if r["ok"] else "FAIL"
            print(f"{mark} {r['case']:28s} [{r['variant']:11s}] "
                  f"expected {r['expected']:3s} got {r['verdict']}")
        total = len(rows)
        print(f"{total - failures}/{total} verdicts match ({elapsed:.1f}s)")
    return EXIT_YES if failures == 0 else EXIT_NO


def build_parser() -> _ArgumentParser:
    ap = _ArgumentParser(prog="weblin", description=__doc__,
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, functions=True):
        if functions:
            p.add_argument("--f", help="web function of the third foliation")
            p.add_argument("--g", action="append",
                           help="web function g4 (repeat for g5..gd)")
            p.add_argument("--domain",
                           help="sampling rectangle xlo,xhi,ylo,yhi")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--samples", type=int, default=8,
                       help="sample points per vanishing test (default 8)")
        p.add_argument("--precision", type=int, default=256,
                       help="float precision in bits (default 256)")
        p.add_argument("--json", action="store_true",
                       help="emit a machine-readable report")

    p = sub.add_parser("check", help="decide linearizability")
    common(p)
    p = sub.add_parser("invariants", help="verdicts with full evidence")
    common(p)
    p = sub.add_parser("linearize", help="construct flat coordinates")
    common(p)
    p.add_argument("--grid", type=int, default=lin.DEFAULT_GRID_N,
                   help="grid nodes per axis (default 41)")
    p.add_argument("--base", help="base point x,y (default: domain center)")
    p.add_argument("--lambda0", help="initial deformation a,b (default 0,0)")
    p.add_argument("--param", action="append",
                   help="free parameter value name=value (repeatable)")
    p.add_argument("--svg", help="write a before/after leaf plot to PATH")
    p.add_argument("--force", action="store_true",
                   help="run the pipeline even for a non-YES web")
    p = sub.add_parser("selftest", help="run the built-in corpus")
    common(p, functions=False)
    p.add_argument("--equivalence", action="store_true",
                   help="also run every case under x->x^3+x, y->exp(y)")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        cfg = _build_config(args)
        handler = {"check": cmd_check, "invariants": cmd_invariants,
                   "linearize": cmd_linearize, "selftest": cmd_selftest}
        return handler[cfg.command](cfg)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ExprError as err:
        # malformed domain rectangles, bad parameter names, and similar
        # input-shaped problems are usage errors, not crashes
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
