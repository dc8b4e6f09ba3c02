"""Command-line entry point: ``lpmodel run|check|gain|attack|fuzz``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from .analysis import gain
from .attacks import ATTACKS, AttackOutcome
from .core import fmt_display, fmt_exact, fmt_ratio
from .errors import LendingModelError, StepError
from .invariants import FuzzConfig, InvariantReport, check_trace, fuzz_seed
from .scenario import Scenario, check_expectations, parse_scenario, render_state_report, state_to_json
from .semantics import apply_trace


def _load(path: str) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def _frac(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _show(x, args) -> str:
    return fmt_exact(x) if args.exact else fmt_display(x, args.precision)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def cmd_run(args) -> int:
    s = _load(args.file)
    params, state = s.params, s.initial_state()
    run = apply_trace(params, state, s.trace, mode="skip_disabled")
    states = (state,) + run.states
    results = check_expectations(s, states)
    if args.format == "json":
        for i, st in enumerate(states):
            obj = {"step": i, "tx": str(s.trace[i - 1]) if i else None}
            if i:
                obj["applied"] = run.applied[i - 1]
                err = run.errors[i - 1]
                obj["error"] = None if err is None else f"{type(err).__name__}: {err}"
            obj["state"] = state_to_json(params, st)
            print(json.dumps(obj, ensure_ascii=False))
        for r in results:
            e = r.expectation
            print(json.dumps({
                "expect": {"step": e.step, "kind": e.kind, "operands": list(e.operands), "value": fmt_ratio(e.value)},
                "actual": None if r.actual is None else fmt_ratio(r.actual),
                "ok": r.ok,
            }, ensure_ascii=False))
    else:
        print("step 0: initial state")
        print(render_state_report(params, state, args.precision, args.exact))
        for i, tx in enumerate(s.trace, 1):
            note = "" if run.applied[i - 1] else f"  [skipped: {type(run.errors[i - 1]).__name__}: {run.errors[i - 1]}]"
            print(f"\nstep {i}: {tx}{note}")
            print(render_state_report(params, states[i], args.precision, args.exact))
        if results:
            print()
        for r in results:
            e = r.expectation
            status = "ok" if r.ok else "MISMATCH"
            actual = "n/a" if r.actual is None else fmt_exact(r.actual)
            approx = f" ≈ {e.approx}" if e.approx else ""
            print(f"expect step {e.step} {e.kind} {' '.join(e.operands)} {fmt_exact(e.value)}{approx}: {status} (actual {actual})")
    return 0 if all(run.applied) and all(r.ok for r in results) else 1


# --------------------------------------------------------------------------
# check
# --------------------------------------------------------------------------


def _print_report(report: InvariantReport, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps({
            "steps": len(report.steps),
            "ok": report.ok,
            "counts": {k: {st.value: n for st, n in v.items()} for k, v in report.counts().items()},
            "failures": [
                {"step": i, "tx": str(tx), "invariant": r.invariant, "detail": r.detail,
                 "lhs": fmt_ratio(r.lhs) if isinstance(r.lhs, Fraction) else repr(r.lhs),
                 "rhs": fmt_ratio(r.rhs) if isinstance(r.rhs, Fraction) else repr(r.rhs)}
                for i, tx, r in report.failures
            ],
        }))
        return
    for name, c in report.counts().items():
        parts = ", ".join(f"{st.value}={n}" for st, n in c.items())
        print(f"{name:24s} {parts}")
    for i, tx, r in report.failures:
        print(f"FAIL step {i} {tx}: {r.invariant} {r.detail} lhs={r.lhs!r} rhs={r.rhs!r}")
    print("all invariants hold" if report.ok else f"{len(report.failures)} failure(s)")


def cmd_check(args) -> int:
    s = _load(args.file)
    report = check_trace(s.params, s.initial_state(), s.trace)
    _print_report(report, args.format)
    return 0 if report.ok else 1


# --------------------------------------------------------------------------
# gain
# --------------------------------------------------------------------------


def cmd_gain(args) -> int:
    s = _load(args.file)
    params = s.params
    start = args.from_step
    if not 0 <= start <= len(s.trace):
        raise LendingModelError(f"--from-step must lie in [0, {len(s.trace)}]")
    state = apply_trace(params, s.initial_state(), s.trace[:start]).state
    trace = s.trace[start:]
    rows = [("trace", gain(params, state, args.user, trace))]
    if args.vs_suffix is not None:
        k = args.vs_suffix
        if not 0 <= k <= len(trace):
            raise LendingModelError(f"--vs-suffix must lie in [0, {len(trace)}]")
        rows.append((f"last {k}", gain(params, state, args.user, trace[len(trace) - k:])))
    if args.format == "json":
        out = {name: {"gain": fmt_ratio(g.gain), "by_token": {t: fmt_ratio(v) for t, v in g.by_token.items()},
                      "skipped": list(g.skipped)} for name, g in rows}
        if len(rows) == 2:
            out["difference"] = fmt_ratio(rows[0][1].gain - rows[1][1].gain)
        print(json.dumps(out))
        return 0
    for name, g in rows:
        tokens = ", ".join(f"{t}: {_show(v, args)}" for t, v in g.by_token.items())
        skipped = f" skipped {list(g.skipped)}" if g.skipped else ""
        print(f"gain of {args.user} over {name}: {_show(g.gain, args)} ({tokens or 'no change'}){skipped}")
    if len(rows) == 2:
        print(f"difference: {_show(rows[0][1].gain - rows[1][1].gain, args)}")
    return 0


# --------------------------------------------------------------------------
# attack
# --------------------------------------------------------------------------


def cmd_attack(args) -> int:
    s = _load(args.file)
    params = s.params
    state = apply_trace(params, s.initial_state(), s.trace).state
    build = ATTACKS[args.kind]
    req = {
        "undercoll": ("adversary", "v1", "token1", "token2", "delta"),
        "liq": ("adversary", "victim", "token1", "token2", "delta", "vl"),
        "underutil": ("adversary", "victim", "token", "amount"),
        "overutil": ("adversary", "victim", "token", "amount"),
    }[args.kind]
    missing = [n for n in req if getattr(args, n) is None]
    if missing:
        raise LendingModelError(f"attack {args.kind} needs --{' --'.join(missing)}")
    values = [getattr(args, n) for n in req]
    outcome: AttackOutcome = build(params, state, *values)
    if args.format == "json":
        print(json.dumps({
            "kind": outcome.kind,
            "verdict": outcome.verdict.value,
            "enabled": outcome.enabled,
            "trace": [str(tx) for tx in outcome.trace],
            "adversary_gain": None if outcome.adversary_gain is None else fmt_ratio(outcome.adversary_gain),
            "victim_gain": None if outcome.victim_gain is None else fmt_ratio(outcome.victim_gain),
            "adversary_net_position": None if outcome.adversary_net_position is None else fmt_ratio(outcome.adversary_net_position),
            "details": {k: fmt_ratio(v) if isinstance(v, Fraction) else str(v) for k, v in outcome.details.items()},
            "error": None if outcome.error is None else str(outcome.error),
        }, ensure_ascii=False))
    else:
        print(f"attack {outcome.kind}: {outcome.verdict.value}")
        print("trace: " + " ; ".join(str(tx) for tx in outcome.trace))
        if outcome.error is not None:
            print(f"disabled: {type(outcome.error).__name__}: {outcome.error}")
        for label, value in (
            ("adversary gain", outcome.adversary_gain),
            ("victim gain", outcome.victim_gain),
            ("adversary net position", outcome.adversary_net_position),
        ):
            if value is not None:
                print(f"{label}: {_show(value, args)}")
        for k, v in outcome.details.items():
            print(f"{k}: {_show(v, args) if isinstance(v, Fraction) else v}")
    return 0 if outcome.succeeded else 1


# --------------------------------------------------------------------------
# fuzz
# --------------------------------------------------------------------------


def _fuzz_one(cfg: FuzzConfig) -> InvariantReport:
    return fuzz_seed(cfg)


def cmd_fuzz(args) -> int:
    configs = [
        FuzzConfig(seed=args.seed + i, users=args.users, tokens=args.tokens, steps=args.steps)
        for i in range(args.seeds)
    ]
    t0 = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_fuzz_one, configs))
    else:
        reports = [_fuzz_one(c) for c in configs]
    total = InvariantReport()
    for r in reports:
        total = total.merged(r)
    elapsed = time.perf_counter() - t0
    if args.format != "json":
        print(f"{len(configs)} seed(s), {len(total.steps)} steps in {elapsed:.2f}s")
    _print_report(total, args.format)
    return 0 if total.ok else 1


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpmodel", description="Exact lending-pool simulator and checker.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--precision", type=int, default=2, help="decimals shown in text output (truncated)")
    common.add_argument("--exact", action="store_true", help="print exact values instead of truncated decimals")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="replay a scenario and check its expectations")
    p.add_argument("file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", parents=[common], help="check every structural invariant along a scenario")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gain", parents=[common], help="gain of a user over a scenario's trace")
    p.add_argument("file")
    p.add_argument("--user", required=True)
    p.add_argument("--vs-suffix", type=int, metavar="K", help="also report the gain of only the last K transactions")
    p.add_argument("--from-step", type=int, default=0, metavar="S", help="start from the state after S steps")
    p.set_defaults(func=cmd_gain)

    p = sub.add_parser("attack", parents=[common], help="run an attack from the state a scenario reaches")
    p.add_argument("kind", choices=sorted(ATTACKS))
    p.add_argument("file")
    p.add_argument("--adversary")
    p.add_argument("--victim")
    p.add_argument("--token")
    p.add_argument("--token1")
    p.add_argument("--token2")
    p.add_argument("--v1", type=_frac)
    p.add_argument("--vl", type=_frac)
    p.add_argument("--amount", type=_frac)
    p.add_argument("--delta", type=_frac)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("fuzz", parents=[common], help="check invariants on random enabled traces")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, metavar="K", help="number of consecutive seeds")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--users", type=int, default=3)
    p.add_argument("--tokens", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_fuzz)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LendingModelError, StepError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
