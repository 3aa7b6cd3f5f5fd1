"""Unrolling for windowed expressions.

Every walk of length at most ``w`` of an epsilon-free automaton becomes a
branch of a tree.  States and registers are cloned along the way, so each
branch has its own copies of the registers it writes, and a TRUE skip loop
on the root lets matching start at any index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import cepl
from . import formula as fm
from .compiler import compile as compile_expr
from .errors import NoAcceptingWalk, RegisterNotFound, ResourceExhausted
from .rma import CURRENT, SKIP, Rma, Transition, eliminate_epsilon


@dataclass
class UnrollArtifacts:
    urma: Rma
    copy_of_q: dict[int, int] = field(default_factory=dict)
    copy_of_r: dict[int, int] = field(default_factory=dict)
    # the unique transition entering each non-start state
    parent: dict[int, Transition] = field(default_factory=dict)
    # clones created per expansion depth, before pruning
    front_states: list[list[int]] = field(default_factory=list)

    def depth(self, q: int) -> int:
        d = 0
        while q in self.parent:
            q = self.parent[q].source
            d += 1
        return d


def find_last_appearance(r: int, q: int, parent: dict[int, Transition], copy_of_r: dict[int, int]) -> int:
    """The deepest clone of ``r`` written on the path from the root to ``q``."""
    while q in parent:
        t = parent[q]
        for clone in sorted(t.writes, reverse=True):
            if copy_of_r.get(clone) == r:
                return clone
        q = t.source
    raise RegisterNotFound(f"register r{r} is never written on the path to q{q}")


def unroll(a: Rma, w: int, max_states: int = 100_000) -> UnrollArtifacts:
    """Tree of all walks of ``a`` of length at most ``w``, plus a root skip loop."""
    if w < 1:
        raise ValueError("window length must be at least 1")
    if a.has_epsilon:
        raise ValueError("unrolling needs an epsilon-free automaton")
    root = 0
    copy_of_q = {root: a.start}
    copy_of_r: dict[int, int] = {}
    parent: dict[int, Transition] = {}
    finals = {root} if a.start in a.final_states else set()
    transitions: list[Transition] = []
    fronts = [[root]]
    next_register = 1
    for _ in range(w):
        front = []
        for q in fronts[-1]:
            for t in a._guarded_out[copy_of_q[q]]:
                if len(copy_of_q) >= max_states:
                    raise ResourceExhausted(len(copy_of_q) + 1, max_states)
                q_new = len(copy_of_q)
                copy_of_q[q_new] = t.target
                if t.target in a.final_states:
                    finals.add(q_new)
                writes = set()
                for r in sorted(t.writes):
                    copy_of_r[next_register] = r
                    writes.add(next_register)
                    next_register += 1
                rs = tuple(
                    CURRENT if r == CURRENT else find_last_appearance(r, q, parent, copy_of_r) for r in t.rs
                )
                new = Transition(q, q_new, t.formula, rs, frozenset(writes), t.output)
                transitions.append(new)
                parent[q_new] = new
                front.append(q_new)
        fronts.append(front)
    # drop branches that end in a non-final leaf
    alive = set(copy_of_q)
    children: dict[int, int] = {q: 0 for q in copy_of_q}
    for t in transitions:
        children[t.source] += 1
    stack = [q for q in copy_of_q if children[q] == 0 and q not in finals and q != root]
    while stack:
        q = stack.pop()
        alive.discard(q)
        p = parent[q].source
        children[p] -= 1
        if children[p] == 0 and p not in finals and p != root:
            stack.append(p)
    if not (alive - {root}) and root not in finals:
        raise NoAcceptingWalk(f"no accepting walk of length at most {w}")
    kept = [t for t in transitions if t.target in alive]
    used_regs = sorted({r for t in kept for r in (t.reads() | t.writes)})
    state_ids = {q: i for i, q in enumerate(sorted(alive))}
    reg_ids = {r: i + 1 for i, r in enumerate(used_regs)}

    def remap(t: Transition) -> Transition:
        return Transition(
            state_ids[t.source],
            state_ids[t.target],
            t.formula,
            tuple(CURRENT if r == CURRENT else reg_ids[r] for r in t.rs),
            frozenset(reg_ids[r] for r in t.writes),
            t.output,
        )

    final_transitions = [Transition(root, root, fm.TRUE, (CURRENT,), frozenset(), SKIP)]
    final_transitions += [remap(t) for t in kept]
    urma = Rma(
        frozenset(state_ids.values()),
        frozenset({state_ids[root]}),
        frozenset(state_ids[q] for q in finals if q in alive),
        frozenset(reg_ids.values()),
        tuple(final_transitions),
    )
    return UnrollArtifacts(
        urma,
        {state_ids[q]: copy_of_q[q] for q in alive},
        {reg_ids[r]: copy_of_r[r] for r in used_regs},
        {state_ids[q]: remap(parent[q]) for q in alive if q in parent},
        [[state_ids[q] for q in front if q in alive] for front in fronts],
    )


def compile_windowed(we: cepl.WindowedExpr, max_states: int = 100_000) -> UnrollArtifacts:
    """Compile, remove epsilon transitions and unroll to the window length."""
    art = compile_expr(we.body)
    return unroll(eliminate_epsilon(art.rma), we.w, max_states)
