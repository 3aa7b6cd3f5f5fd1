"""Brute-force reference semantics for pattern expressions.

This evaluates expressions directly on valuations (variable -> stream index)
without any automaton.  It is exponential and only meant as ground truth
for tests and the ``diff`` command, so streams longer than ``cap`` events
are refused.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

from . import cepl
from . import formula as fm
from .errors import OracleCapExceeded
from .events import Event, Stream

DEFAULT_CAP = 12

Match = frozenset


class Derivation(NamedTuple):
    match: frozenset
    valuation: frozenset  # of (variable, index) pairs

    def bindings(self) -> dict[str, int]:
        return dict(self.valuation)


class _Evaluator:
    def __init__(self, events: Sequence[Event]):
        self.events = events
        self.memo: dict = {}

    def eval(self, e: cepl.Expr, i: int) -> frozenset:
        key = (id(e), i)
        hit = self.memo.get(key)
        if hit is None:
            hit = frozenset(self._eval(e, i))
            self.memo[key] = hit
        return hit

    def _eval(self, e, i):
        events = self.events
        if isinstance(e, cepl.As):
            return {
                Derivation(frozenset({j}), frozenset({(e.var, j)}))
                for j in range(i, len(events))
                if events[j]["type"] == e.relation
            }
        if isinstance(e, cepl.Filter):
            return {d for d in self.eval(e.child, i) if self._satisfies(d, e.spec)}
        if isinstance(e, cepl.Or):
            return self.eval(e.left, i) | self.eval(e.right, i)
        if isinstance(e, cepl.Seq):
            out = set()
            for d1 in self.eval(e.left, i):
                for d2 in self.eval(e.right, max(d1.match) + 1):
                    vars1 = {v for v, _ in d1.valuation}
                    clash = [v for v, _ in d2.valuation if v in vars1]
                    assert not clash, f"sequence operands share variables {clash}"
                    out.add(Derivation(d1.match | d2.match, d1.valuation | d2.valuation))
            return out
        if isinstance(e, cepl.Iter):
            return self._iterate(e, i)
        raise TypeError(f"not an expression: {e!r}")

    def _iterate(self, e: cepl.Iter, i: int):
        # each repetition gets its own valuation; none of them is visible
        # outside the iteration, so results carry an empty valuation
        out = set()
        for d in self.eval(e.child, i):
            out.add(Derivation(d.match, frozenset()))
            for rest in self.eval(e, max(d.match) + 1):
                out.add(Derivation(d.match | rest.match, frozenset()))
        return out

    def _satisfies(self, d: Derivation, spec: cepl.FilterSpec) -> bool:
        bindings = d.bindings()
        if any(v not in bindings for v in spec.arg_vars):
            return False
        return fm.evaluate(spec.formula, [self.events[bindings[v]] for v in spec.arg_vars])


def _events(s: Stream | Sequence[Event], cap: int) -> Sequence[Event]:
    events = s.events if isinstance(s, Stream) else tuple(s)
    if len(events) > cap:
        raise OracleCapExceeded(f"stream of {len(events)} events exceeds the oracle cap of {cap}")
    return events


def eval(e: cepl.Expr, s: Stream | Sequence[Event], i: int = 0, cap: int = DEFAULT_CAP) -> set[Derivation]:
    """All (match, valuation) pairs of ``e`` on ``s`` starting at index ``i``."""
    if isinstance(e, cepl.WindowedExpr):
        raise TypeError("use eval_windowed for windowed expressions")
    return set(_Evaluator(_events(s, cap)).eval(e, i))


def eval_windowed(
    we: cepl.WindowedExpr, s: Stream | Sequence[Event], i: int = 0, cap: int = DEFAULT_CAP
) -> set[Match]:
    return {d.match for d in eval(we.body, s, i, cap) if max(d.match) - min(d.match) < we.w}


def matches(e: cepl.Expr | cepl.WindowedExpr, s, i: int = 0, cap: int = DEFAULT_CAP) -> set[Match]:
    if isinstance(e, cepl.WindowedExpr):
        return eval_windowed(e, s, i, cap)
    return {d.match for d in eval(e, s, i, cap)}


def all_matches(e: cepl.Expr | cepl.WindowedExpr, s, cap: int = DEFAULT_CAP) -> set[Match]:
    """Matches over the whole stream; starting at index 0 covers every start."""
    return matches(e, s, 0, cap)


def by_end(found: set[Match]) -> dict[int, set[Match]]:
    """Group matches by ``max(M) + 1``, the index at which an engine reports them."""
    out: dict[int, set[Match]] = {}
    for m in found:
        out.setdefault(max(m) + 1, set()).add(m)
    return out
