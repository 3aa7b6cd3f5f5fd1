"""Subset construction over min-terms of transition guards.

A state of the result is a set of *elements* ``(q, slots, flag)``: a state
of the input automaton, where each of its live registers is stored in the
result (``slots``: input register -> result register), and for the
output-agnostic variant whether a final ``q`` was entered by a marking
transition.

Registers of the input are kept under their own ids as long as that is
sound.  When two runs merged into one state would need different contents
for the same register (one run keeps an old value while another overwrites
it), the overwrite is redirected to a fresh result register.  Without such
conflicts the result uses exactly the input registers, and the construction
is the textbook one.  ``rename_registers=False`` disables the redirection.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from . import formula as fm
from .errors import NotUnrolled, ResourceExhausted
from .rma import CURRENT, MARK, SKIP, Output, Rma, Transition

Element = tuple  # (state, tuple of (register, slot) pairs, flag)


@dataclass(frozen=True)
class MarkedMinTerm:
    min_term: fm.MinTerm
    output: Output | None


@dataclass
class Determinized:
    rma: Rma
    elements_of: dict[int, frozenset] = field(default_factory=dict)
    blocks_of: dict[int, tuple] = field(default_factory=dict)

    def subset_of(self, state: int) -> frozenset[int]:
        return frozenset(e[0] for e in self.elements_of[state])


def shared_layout(blocks: Sequence[tuple[fm.Formula, tuple]]) -> tuple[list[fm.Formula], tuple[int, ...]]:
    """Rewrite guard blocks over one shared register selection.

    Blocks reading the same register (or the current event) then refer to
    the same formula argument, so their atoms can simplify each other.
    """
    rs = tuple(dict.fromkeys(r for _, block_rs in blocks for r in block_rs))
    position = {r: i for i, r in enumerate(rs)}
    formulas = [fm.remap_args(f, [position[r] for r in block_rs], len(rs)) for f, block_rs in blocks]
    return formulas, rs


def marked_min_terms(
    blocks: Sequence[tuple[fm.Formula, tuple]], outputs, propagate: bool = False
) -> tuple[list[MarkedMinTerm], tuple[int, ...]]:
    """Min-terms over the guard blocks, one copy per output, and their selection."""
    formulas, rs = shared_layout(blocks)
    terms = fm.min_terms([(f, 0) for f in formulas], propagate=propagate)
    return [MarkedMinTerm(t, o) for t in terms for o in outputs], rs


def _drop_unread(f: fm.Formula, rs: tuple[int, ...]) -> tuple[fm.Formula, tuple[int, ...]]:
    """Remove selection entries the (simplified) formula no longer reads."""
    used = sorted(fm.referenced_args(f))
    if len(used) == len(rs):
        return f, rs
    if not used:
        return fm.Formula(f.body, 1), (CURRENT,)
    mapping = [used.index(i) if i in used else 0 for i in range(len(rs))]
    return fm.remap_args(f, mapping, len(used)), tuple(rs[i] for i in used)


def live_registers(a: Rma) -> dict[int, frozenset[int]]:
    """Registers whose current value may still be read from each state."""
    live = {q: set() for q in a.states}
    changed = True
    while changed:
        changed = False
        for t in a.transitions:
            need = t.reads() | (live[t.target] - t.writes)
            if not need <= live[t.source]:
                live[t.source] |= need
                changed = True
    return {q: frozenset(r) for q, r in live.items()}


def is_unrolled(a: Rma) -> bool:
    """Acyclic apart from self-loops on start states."""
    succ = {q: set() for q in a.states}
    for t in a.transitions:
        if t.source == t.target and t.source in a.start_states:
            continue
        succ[t.source].add(t.target)
    color = {q: 0 for q in a.states}
    for root in a.states:
        if color[root]:
            continue
        stack = [(root, iter(succ[root]))]
        color[root] = 1
        while stack:
            q, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[q] = 2
                stack.pop()
            elif color[nxt] == 1:
                return False
            elif color[nxt] == 0:
                color[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return True


class _Builder:
    def __init__(self, a: Rma, agnostic: bool, rename_registers: bool, max_states: int, propagate: bool):
        if a.has_epsilon:
            raise ValueError("determinization needs an epsilon-free automaton")
        self.a = a
        self.agnostic = agnostic
        self.rename = rename_registers
        self.max_states = max_states
        self.propagate = propagate
        self.live = live_registers(a)

    def element(self, q: int, slots: dict, flag) -> Element:
        if not self.rename:
            slots = {}
        if not self.agnostic or q not in self.a.final_states:
            flag = None
        return (q, tuple(sorted(slots.items())), flag)

    def slot(self, m: dict, r: int) -> int | None:
        return r if not self.rename else m.get(r)

    def run(self) -> Determinized:
        a = self.a
        start = frozenset({self.element(a.start, {}, None)})
        ids = {start: 0}
        queue = deque([start])
        transitions = []
        result = Determinized(None)
        while queue:
            current = queue.popleft()
            sid = ids[current]
            moves = []
            for q, slots, _ in sorted(current, key=repr):
                m = dict(slots)
                for t in a._guarded_out[q]:
                    rs = tuple(r if r == CURRENT else self.slot(m, r) for r in t.rs)
                    if None in rs:
                        continue  # reads a register no run into q has written
                    moves.append((m, t, (t.formula, rs)))
            blocks = tuple(dict.fromkeys(block for _, _, block in moves))
            result.elements_of[sid] = current
            result.blocks_of[sid] = blocks
            if self.agnostic:
                outputs = [None]
            else:
                present = {t.output for _, t, _ in moves}
                outputs = [o for o in (MARK, SKIP) if o in present]
            terms, rs_all = marked_min_terms(blocks, outputs, self.propagate)
            for mmt in terms:
                positive = {blocks[k] for k, c in enumerate(mmt.min_term.conjuncts) if c.positive}
                fired = [
                    (m, t)
                    for m, t, block in moves
                    if block in positive and (mmt.output is None or t.output is mmt.output)
                ]
                if not fired:
                    continue
                target, writes = self.advance(fired)
                if target not in ids:
                    if len(ids) >= self.max_states:
                        raise ResourceExhausted(len(ids) + 1, self.max_states)
                    ids[target] = len(ids)
                    queue.append(target)
                output = mmt.output
                if output is None:
                    output = MARK if any(t.output is MARK for _, t in fired) else SKIP
                formula, rs = _drop_unread(mmt.min_term.formula(self.propagate), rs_all)
                transitions.append(Transition(sid, ids[target], formula, rs, writes, output))
        finals = set()
        for element_set, sid in ids.items():
            for q, _, flag in element_set:
                if q in a.final_states and (not self.agnostic or flag):
                    finals.add(sid)
        registers = set()
        for t in transitions:
            registers |= t.reads() | t.writes
        result.rma = Rma(frozenset(ids.values()), frozenset({0}), frozenset(finals), frozenset(registers), tuple(transitions))
        return result

    def advance(self, fired) -> tuple[frozenset, frozenset[int]]:
        carried = []
        used = set()
        for m, t in fired:
            keep = {r: s for r, s in m.items() if r in self.live[t.target] and r not in t.writes}
            carried.append((t, keep))
            used |= set(keep.values())
        written = sorted(set().union(*(t.writes for _, t in fired)))
        slot_for = {}
        for r in written:
            if not self.rename or r not in used:
                slot_for[r] = r
            elif slot_for:
                # every register written in this step receives the same event
                slot_for[r] = min(slot_for.values())
            else:
                fresh = 1
                while fresh in used or fresh in written:
                    fresh += 1
                slot_for[r] = fresh
        elements = set()
        for t, keep in carried:
            slots = dict(keep)
            for r in t.writes:
                if r in self.live[t.target]:
                    slots[r] = slot_for[r]
            elements.add(self.element(t.target, slots, t.output is MARK))
        return frozenset(elements), frozenset(slot_for.values())


def determinize_with_info(
    a: Rma, rename_registers: bool = True, max_states: int = 50_000, propagate: bool = False
) -> Determinized:
    """Per-output deterministic equivalent of an epsilon-free automaton."""
    if len(a.start_states) != 1:
        raise ValueError("determinization needs a single start state")
    return _Builder(a, False, rename_registers, max_states, propagate).run()


def determinize(
    a: Rma, rename_registers: bool = True, max_states: int = 50_000, propagate: bool = False
) -> Rma:
    return determinize_with_info(a, rename_registers, max_states, propagate).rma


def determinize_output_agnostic_with_info(
    a: Rma, rename_registers: bool = True, max_states: int = 50_000, propagate: bool = False
) -> Determinized:
    """Single-run recognizer for an unrolled automaton.

    One transition per satisfiable min-term; it marks if any of the input
    transitions it stands for marks.  A state is final if it contains a
    final input state that was entered by a marking transition.
    """
    if not is_unrolled(a):
        raise NotUnrolled("output-agnostic determinization needs an unrolled automaton")
    if len(a.start_states) != 1:
        raise ValueError("determinization needs a single start state")
    return _Builder(a, True, rename_registers, max_states, propagate).run()


def determinize_output_agnostic(
    a: Rma, rename_registers: bool = True, max_states: int = 50_000, propagate: bool = False
) -> Rma:
    return determinize_output_agnostic_with_info(a, rename_registers, max_states, propagate).rma
