"""Translation of bounded pattern expressions into register match automata.

The construction is compositional.  Every sub-automaton has a single start
state; alternation and iteration are glued together with epsilon
transitions, which callers remove with ``rma.eliminate_epsilon``.  Along the
way two maps are kept: ``delta_x`` (transition index -> the variable whose
event it consumes) and ``r_x`` (register -> the variable it stores).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import cepl
from . import formula as fm
from .errors import NoEligibleTransition, NotBounded
from .rma import CURRENT, MARK, SKIP, Rma, Transition, collapse_rs, reachable_avoiding


@dataclass
class IdGen:
    """Sequential fresh state and register ids for one compilation."""

    next_state: int = 0
    next_register: int = 1

    def state(self) -> int:
        self.next_state += 1
        return self.next_state - 1

    def register(self) -> int:
        self.next_register += 1
        return self.next_register - 1


@dataclass(frozen=True)
class CompileArtifacts:
    rma: Rma
    delta_x: Mapping[int, str] = field(default_factory=dict)
    r_x: Mapping[int, str] = field(default_factory=dict)

    @property
    def start(self) -> int:
        return self.rma.start

    def transitions_of(self, var: str) -> list[int]:
        return sorted(i for i, v in self.delta_x.items() if v == var)

    def register_of(self, var: str) -> int | None:
        regs = [r for r, v in self.r_x.items() if v == var]
        if len(regs) > 1:
            raise AssertionError(f"variable {var} owns several registers {regs}")
        return regs[0] if regs else None


def type_test(relation: str) -> fm.Formula:
    return fm.Formula(fm.Compare("=", fm.AttrRef(0, "type"), fm.Const(relation)), 1)


def compile_base(
    relation: str, var: str, unary_filter: fm.Formula | None = None, ids: IdGen | None = None
) -> CompileArtifacts:
    ids = ids or IdGen()
    qs, qf = ids.state(), ids.state()
    guard = type_test(relation)
    if unary_filter is not None:
        if unary_filter.arity != 1:
            raise ValueError("base-case filter must be unary")
        guard = fm.conjoin(guard, unary_filter)
    transitions = (
        Transition(qs, qs, fm.TRUE, (CURRENT,), frozenset(), SKIP),
        Transition(qs, qf, guard, (CURRENT,), frozenset(), MARK),
    )
    a = Rma(frozenset({qs, qf}), frozenset({qs}), frozenset({qf}), frozenset(), transitions)
    return CompileArtifacts(a, {1: var}, {})


def _with_writes(t: Transition, extra) -> Transition:
    return Transition(t.source, t.target, t.formula, t.rs, t.writes | frozenset(extra), t.output)


def _rename_registers(art: CompileArtifacts, mapping: Mapping[int, int]) -> CompileArtifacts:
    def reg(r):
        return mapping.get(r, r)

    transitions = tuple(
        t
        if t.is_epsilon
        else Transition(
            t.source, t.target, t.formula, tuple(reg(r) for r in t.rs), frozenset(reg(r) for r in t.writes), t.output
        )
        for t in art.rma.transitions
    )
    a = art.rma
    rma = Rma(a.states, a.start_states, a.final_states, frozenset(reg(r) for r in a.registers), transitions)
    return CompileArtifacts(rma, dict(art.delta_x), {reg(r): v for r, v in art.r_x.items()})


def _add_writes(art: CompileArtifacts, var: str, register: int) -> CompileArtifacts:
    """Make every transition consuming ``var`` also write ``register``."""
    targets = set(art.transitions_of(var))
    transitions = tuple(
        _with_writes(t, {register}) if i in targets else t for i, t in enumerate(art.rma.transitions)
    )
    a = art.rma
    rma = Rma(a.states, a.start_states, a.final_states, a.registers | {register}, transitions)
    return CompileArtifacts(rma, dict(art.delta_x), {**art.r_x, register: var})


def _unify_registers(a1: CompileArtifacts, a2: CompileArtifacts):
    """Give each variable one register across both operands of an OR.

    A variable registered on one side only gets that register written on the
    other side too, so every transition consuming it writes the same register.
    """
    rename = {}
    for r2, var in a2.r_x.items():
        r1 = a1.register_of(var)
        if r1 is not None:
            rename[r2] = r1
    a2 = _rename_registers(a2, rename)
    for r1, var in sorted(a1.r_x.items()):
        if a2.register_of(var) is None and a2.transitions_of(var):
            a2 = _add_writes(a2, var, r1)
    for r2, var in sorted(a2.r_x.items()):
        if a1.register_of(var) is None and a1.transitions_of(var):
            a1 = _add_writes(a1, var, r2)
    return a1, a2


def _combine(parts: Sequence[CompileArtifacts], start: int, finals, extra_states=(), extra=()) -> CompileArtifacts:
    transitions: list[Transition] = []
    delta_x: dict[int, str] = {}
    r_x: dict[int, str] = {}
    states = set(extra_states)
    registers = set()
    for part in parts:
        offset = len(transitions)
        transitions.extend(part.rma.transitions)
        delta_x.update({i + offset: v for i, v in part.delta_x.items()})
        r_x.update(part.r_x)
        states |= part.rma.states
        registers |= part.rma.registers
    transitions.extend(extra)
    rma = Rma(frozenset(states), frozenset({start}), frozenset(finals), frozenset(registers), tuple(transitions))
    return CompileArtifacts(rma, delta_x, r_x)


def compile_or(a1: CompileArtifacts, a2: CompileArtifacts, ids: IdGen) -> CompileArtifacts:
    a1, a2 = _unify_registers(a1, a2)
    qs, qf = ids.state(), ids.state()
    eps = [Transition(qs, a1.start), Transition(qs, a2.start)]
    eps += [Transition(q, qf) for q in sorted(a1.rma.final_states)]
    eps += [Transition(q, qf) for q in sorted(a2.rma.final_states)]
    return _combine([a1, a2], qs, {qf}, {qs, qf}, eps)


def compile_seq(a1: CompileArtifacts, a2: CompileArtifacts) -> CompileArtifacts:
    eps = [Transition(q, a2.start) for q in sorted(a1.rma.final_states)]
    return _combine([a1, a2], a1.start, a2.rma.final_states, (), eps)


def compile_iter(a: CompileArtifacts) -> CompileArtifacts:
    eps = [Transition(q, a.start) for q in sorted(a.rma.final_states)]
    return _combine([a], a.start, a.rma.final_states, (), eps)


def appears_on_every_trail(art: CompileArtifacts, var: str, state: int) -> bool:
    """True if every trail from the start to ``state`` consumes ``var``."""
    x_transitions = {art.rma.transitions[i] for i in art.transitions_of(var)}
    return state not in reachable_avoiding(art.rma, lambda t: t in x_transitions)


def eligible_transitions(art: CompileArtifacts, arg_vars: Sequence[str]) -> list[int]:
    found = []
    for i, t in enumerate(art.rma.transitions):
        var = art.delta_x.get(i)
        if var not in arg_vars:
            continue
        if all(appears_on_every_trail(art, other, t.source) for other in arg_vars if other != var):
            found.append(i)
    return found


def create_new_rs(art: CompileArtifacts, delta: int, arg_vars: Sequence[str], ids: IdGen):
    """Register selection for ``arg_vars`` as seen from transition ``delta``.

    Returns ``(rs_new, new_registers, artifacts)`` where the artifacts carry
    any write sets and ``r_x`` entries added for fresh registers.
    """
    rs_new = []
    new_registers = []
    for var in arg_vars:
        if art.delta_x.get(delta) == var:
            rs_new.append(CURRENT)
            continue
        r = art.register_of(var)
        if r is None:
            r = ids.register()
            new_registers.append(r)
            art = _add_writes(art, var, r)
        rs_new.append(r)
    return tuple(rs_new), new_registers, art


def apply_nary_filter(
    art: CompileArtifacts, f: fm.Formula, arg_vars: Sequence[str], ids: IdGen
) -> CompileArtifacts:
    """Attach ``f`` to every transition that can evaluate it.

    A transition qualifies when it consumes one of ``arg_vars`` and every
    other filter variable is consumed on every trail leading to its source.
    """
    arg_vars = tuple(arg_vars)
    if f.arity != len(arg_vars):
        raise ValueError("one variable per formula argument is required")
    chosen = eligible_transitions(art, arg_vars)
    if not chosen:
        raise NoEligibleTransition(
            f"no transition can evaluate the filter over ({', '.join(arg_vars)})"
        )
    for i in chosen:
        rs_new, _, art = create_new_rs(art, i, arg_vars, ids)
        t = art.rma.transitions[i]
        formula, rs = collapse_rs(fm.conjoin_with_offset(t.formula, f), t.rs + rs_new)
        updated = Transition(t.source, t.target, formula, rs, t.writes, t.output)
        transitions = art.rma.transitions[:i] + (updated,) + art.rma.transitions[i + 1 :]
        a = art.rma
        art = CompileArtifacts(
            Rma(a.states, a.start_states, a.final_states, a.registers, transitions), art.delta_x, art.r_x
        )
    return art


def compile(e: cepl.Expr, ids: IdGen | None = None) -> CompileArtifacts:
    """Compile a bounded expression (epsilon transitions included)."""
    if isinstance(e, cepl.WindowedExpr):
        raise TypeError("windowed expressions are compiled by unroll.compile_windowed")
    diags = cepl.check_bounded(e)
    if diags:
        raise NotBounded(diags)
    return _compile(e, ids or IdGen())


def _compile(e: cepl.Expr, ids: IdGen) -> CompileArtifacts:
    if isinstance(e, cepl.As):
        return compile_base(e.relation, e.var, None, ids)
    if isinstance(e, cepl.Filter):
        if isinstance(e.child, cepl.As) and e.spec.arg_vars == (e.child.var,):
            return compile_base(e.child.relation, e.child.var, e.spec.formula, ids)
        return apply_nary_filter(_compile(e.child, ids), e.spec.formula, e.spec.arg_vars, ids)
    if isinstance(e, cepl.Or):
        return compile_or(_compile(e.left, ids), _compile(e.right, ids), ids)
    if isinstance(e, cepl.Seq):
        return compile_seq(_compile(e.left, ids), _compile(e.right, ids))
    if isinstance(e, cepl.Iter):
        return compile_iter(_compile(e.child, ids))
    raise TypeError(f"not an expression: {e!r}")


def compile_text(text: str) -> CompileArtifacts:
    e = cepl.parse_expr(text)
    return compile(e)
