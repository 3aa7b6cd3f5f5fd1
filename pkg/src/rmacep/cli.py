"""Command-line front end.

Exit codes: 0 success, 2 analysis failure (parse, boundedness, compilation,
failed checks), 3 input/output problems, 4 resource limits, 5 engine and
oracle disagree, 6 stream too long for the oracle.
"""

from __future__ import annotations

import argparse
import random
import sys
from dataclasses import dataclass

from . import cepl
from . import determinize as dz
from . import formula as fm
from . import oracle
from . import rma
from .compiler import compile as compile_expr
from .errors import (
    FormulaError,
    NoAcceptingWalk,
    NoEligibleTransition,
    NotBounded,
    NotUnrolled,
    OracleCapExceeded,
    ParseError,
    RegisterCoverageError,
    ResourceExhausted,
    SchemaError,
    StreamFormatError,
)
from .events import Event, Stream, load_stream
from .unroll import unroll

EXIT_OK = 0
EXIT_ANALYSIS = 2
EXIT_IO = 3
EXIT_RESOURCE = 4
EXIT_MISMATCH = 5
EXIT_ORACLE_CAP = 6


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    expr_source: str | None = None
    stream_path: str | None = None
    start_index: int = 0
    window: int | None = None
    max_configs: int = 100_000
    output_path: str | None = None

    def __post_init__(self):
        if self.window is not None and self.window < 1:
            raise CliError("--window must be at least 1", EXIT_ANALYSIS)


# -- input and output -------------------------------------------------------


def _read(path: str) -> str:
    try:
        if path == "-":
            return sys.stdin.read()
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None


def _expr_text(args) -> str:
    if args.expr is not None:
        return args.expr
    if args.expr_file is not None:
        return _read(args.expr_file).strip()
    raise CliError("an expression is required (--expr or --expr-file)", EXIT_ANALYSIS)


def _parse(args) -> tuple[cepl.Expr, int | None]:
    """The expression body and its window; ``--window`` overrides the text."""
    e = cepl.parse_expr(_expr_text(args))
    window = None
    if isinstance(e, cepl.WindowedExpr):
        e, window = e.body, e.w
    if getattr(args, "window", None) is not None:
        window = args.window
    if window is not None and window < 1:
        raise CliError("--window must be at least 1", EXIT_ANALYSIS)
    return e, window


def _stream(path: str) -> Stream:
    return load_stream(_read(path))


def _load_automaton(path: str) -> rma.Rma:
    return rma.from_json(_read(path))


# -- pipeline ---------------------------------------------------------------


def _pipeline(args, eliminate: bool) -> rma.Rma:
    """Compile (or load) the automaton and apply the requested transformations."""
    if getattr(args, "automaton", None):
        a = _load_automaton(args.automaton)
        window = getattr(args, "window", None)
    else:
        e, window = _parse(args)
        a = compile_expr(e).rma
    determinize = getattr(args, "determinize", False)
    agnostic = getattr(args, "output_agnostic", False)
    if window is not None or determinize or agnostic:
        eliminate = True
    if eliminate and a.has_epsilon:
        a = rma.eliminate_epsilon(a)
    if window is not None:
        a = unroll(a, window).urma
    if agnostic:
        a = dz.determinize_output_agnostic(a, propagate=True)
    elif determinize:
        a = dz.determinize(a)
    return a


def _emit_automaton(args, a: rma.Rma) -> None:
    wrote = False
    if args.dot:
        _write(args.dot, rma.to_dot(a))
        wrote = True
    if args.out:
        _write(args.out, rma.to_json(a))
        wrote = True
    if not wrote:
        _write(None, rma.to_json(a))
    print(a.summary(), file=sys.stderr)


# -- commands ---------------------------------------------------------------


def cmd_compile(args) -> int:
    e, window = _parse(args)
    if window is not None:
        print("note: the window is ignored here; use 'unroll' or 'run --window'", file=sys.stderr)
    a = compile_expr(e).rma
    if args.eliminate_epsilon:
        a = rma.eliminate_epsilon(a)
    _emit_automaton(args, a)
    return EXIT_OK


def cmd_unroll(args) -> int:
    e, window = _parse(args)
    if window is None:
        raise CliError("unrolling needs a window (WINDOW in the expression or --window)", EXIT_ANALYSIS)
    a = unroll(rma.eliminate_epsilon(compile_expr(e).rma), window).urma
    _emit_automaton(args, a)
    return EXIT_OK


def cmd_determinize(args) -> int:
    args.determinize = True
    _emit_automaton(args, _pipeline(args, eliminate=True))
    return EXIT_OK


def _engine_report(args, s: Stream) -> rma.MatchReport:
    a = _pipeline(args, eliminate=True)
    return rma.run_stream(a, s, start_index=args.start_index, max_configs=args.max_configs)


def cmd_run(args) -> int:
    s = _stream(args.stream)
    report = _engine_report(args, s)
    _write(args.out, report.to_lines())
    return EXIT_OK


def _oracle_report(args, s: Stream) -> rma.MatchReport:
    e, window = _parse(args)
    target = cepl.WindowedExpr(e, window) if window is not None else e
    found = oracle.matches(target, s, args.start_index, cap=args.oracle_cap)
    report = rma.MatchReport()
    for n, ms in oracle.by_end(found).items():
        report.per_index[n] = ms
    return report


def cmd_oracle(args) -> int:
    s = _stream(args.stream)
    _write(args.out, _oracle_report(args, s).to_lines())
    return EXIT_OK


def cmd_diff(args) -> int:
    s = _stream(args.stream)
    want = _oracle_report(args, s)
    got = _engine_report(args, s)
    if got == want:
        print(f"equal: {sum(len(m) for m in want.per_index.values())} matches")
        return EXIT_OK
    lines = []
    for n in sorted(set(got.per_index) | set(want.per_index)):
        extra = got.at(n) - want.at(n)
        missing = want.at(n) - got.at(n)
        for m in sorted(sorted(x) for x in extra):
            lines.append(f"engine only at {n}: {m}")
        for m in sorted(sorted(x) for x in missing):
            lines.append(f"oracle only at {n}: {m}")
    _write(args.out, "".join(line + "\n" for line in lines))
    return EXIT_MISMATCH


def _probe_values(a: rma.Rma) -> dict[str, list]:
    """Per attribute: the constants it is compared with, and their neighbours."""
    values: dict[str, set] = {}

    def visit(node):
        if isinstance(node, fm.Compare):
            refs = [o for o in (node.lhs, node.rhs) if isinstance(o, fm.AttrRef)]
            consts = [o.value for o in (node.lhs, node.rhs) if isinstance(o, fm.Const)]
            for ref in refs:
                pool = values.setdefault(ref.attr, set())
                for c in consts:
                    if isinstance(c, str):
                        pool.update({c, c + "'"})
                    else:
                        step = 1 if isinstance(c, int) else 0.5
                        pool.update({c, c - step, c + step})
        elif isinstance(node, (fm.And, fm.Or)):
            for child in node.children:
                visit(child)
        elif isinstance(node, fm.Not):
            visit(node.child)

    for t in a.transitions:
        if not t.is_epsilon:
            visit(t.formula.body)
    return {attr: sorted(pool, key=repr) or [0, 1, 2] for attr, pool in sorted(values.items())}


def _probe_events(a: rma.Rma, rng: random.Random, n: int) -> list[Event]:
    pools = _probe_values(a)
    if not pools:
        return [Event({"type": "T"})]
    return [Event({attr: rng.choice(pool) for attr, pool in pools.items()}) for _ in range(n)]


def cmd_check(args) -> int:
    requested = set(args.checks)
    failed = False
    lines = []

    def report(name: str, diags) -> None:
        nonlocal failed
        status = "pass" if not diags else "fail"
        if diags and name in requested:
            failed = True
        suffix = "" if name in requested else " (not requested)"
        lines.append(f"{name}: {status}{suffix}")
        lines.extend(f"  {d}" for d in diags)

    if args.automaton:
        a = _load_automaton(args.automaton)
    else:
        e, _ = _parse(args)
        diags = cepl.check_bounded(e)
        report("bounded", diags)
        if diags:
            _write(args.out, "".join(line + "\n" for line in lines))
            return EXIT_ANALYSIS
        a = compile_expr(e).rma
    if args.window is not None or args.determinize or args.output_agnostic:
        a = _pipeline(args, eliminate=True)
    report("coverage", rma.validate_register_coverage(a) + rma.check_structure(a))
    rng = random.Random(args.seed)
    if args.stream:
        events = list(_stream(args.stream).events)
    else:
        events = _probe_events(a, rng, 64)
    if events:
        ready = rma.eliminate_epsilon(a) if a.has_epsilon else a
        probes = rma.random_probes(ready, events, args.probes, rng)
        report("per-output", rma.check_deterministic(ready, "per_output", probes))
        report("output-agnostic", rma.check_deterministic(ready, "output_agnostic", probes))
    _write(args.out, "".join(line + "\n" for line in lines))
    return EXIT_ANALYSIS if failed else EXIT_OK


# -- argument parsing -------------------------------------------------------


def _add_expr(p: argparse.ArgumentParser, required: bool = True) -> None:
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument("-e", "--expr", help="pattern expression text")
    group.add_argument("--expr-file", help="file holding the pattern expression ('-' for stdin)")


def _add_automaton_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write the automaton dump (JSON) here; default stdout")
    p.add_argument("--dot", help="write a Graphviz DOT rendering here ('-' for stdout)")


def _add_transform(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, help="window length; overrides WINDOW in the expression")
    p.add_argument("--determinize", action="store_true", help="run the per-output deterministic automaton")
    p.add_argument(
        "--output-agnostic",
        action="store_true",
        help="run the single-run recognizer (needs a window)",
    )


def _add_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stream", required=True, help="stream file: schema header, then one event per line")
    p.add_argument("--start-index", type=int, default=0)
    p.add_argument("--out", help="write the report here; default stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmacep", description="Pattern matching with register match automata.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile an expression to an automaton")
    _add_expr(p)
    p.add_argument("--eliminate-epsilon", action="store_true")
    _add_automaton_out(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("unroll", help="unroll a windowed expression")
    _add_expr(p)
    p.add_argument("--window", type=int)
    _add_automaton_out(p)
    p.set_defaults(func=cmd_unroll)

    p = sub.add_parser("determinize", help="determinize a compiled (or unrolled) expression")
    _add_expr(p, required=False)
    p.add_argument("--automaton", help="start from an automaton dump instead of an expression")
    p.add_argument("--window", type=int)
    p.add_argument("--output-agnostic", action="store_true")
    _add_automaton_out(p)
    p.set_defaults(func=cmd_determinize)

    p = sub.add_parser("run", help="run the engine over a stream")
    _add_expr(p, required=False)
    p.add_argument("--automaton", help="run an automaton dump instead of compiling an expression")
    _add_transform(p)
    _add_run(p)
    p.add_argument("--max-configs", type=int, default=100_000)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="brute-force matches of an expression")
    _add_expr(p)
    p.add_argument("--window", type=int)
    _add_run(p)
    p.add_argument("--oracle-cap", type=int, default=oracle.DEFAULT_CAP)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("diff", help="compare engine and oracle matches")
    _add_expr(p)
    p.add_argument("--automaton", help="run this automaton dump instead of compiling the expression")
    _add_transform(p)
    _add_run(p)
    p.add_argument("--max-configs", type=int, default=100_000)
    p.add_argument("--oracle-cap", type=int, default=oracle.DEFAULT_CAP)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("check", help="boundedness, register coverage and determinism probes")
    _add_expr(p, required=False)
    p.add_argument("--automaton", help="check an automaton dump")
    _add_transform(p)
    p.add_argument("--stream", help="draw probe events from this stream instead of the formulas")
    p.add_argument("--probes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--checks",
        type=lambda text: [c.strip() for c in text.split(",") if c.strip()],
        default=["bounded", "coverage", "per-output"],
        help="comma-separated checks that decide the exit status "
        "(bounded, coverage, per-output, output-agnostic)",
    )
    p.add_argument("--out", help="write the report here; default stdout")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    needs_source = args.command in ("determinize", "run", "check")
    if needs_source and args.expr is None and args.expr_file is None and not args.automaton:
        print("error: an expression (--expr/--expr-file) or --automaton is required", file=sys.stderr)
        return EXIT_ANALYSIS
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NotBounded as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_ANALYSIS
    except (ParseError, NoEligibleTransition, NoAcceptingWalk, NotUnrolled, FormulaError, RegisterCoverageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except (SchemaError, StreamFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ResourceExhausted as exc:
        print(f"error: {exc} (live: {exc.live})", file=sys.stderr)
        return EXIT_RESOURCE
    except OracleCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE_CAP


if __name__ == "__main__":
    sys.exit(main())
