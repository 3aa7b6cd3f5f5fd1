"""Register match automata: data model, run engine and structural tools.

States and registers are small integers.  Register selections use
``CURRENT`` (printed ``~``) for the event being consumed.  A register
assignment (``gamma``) is a tuple indexed by register id whose entries are
events or ``None`` for an empty register; slot 0 is unused.
"""

from __future__ import annotations

import enum
import json
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

from . import formula as fm
from .cepl import Diagnostic
from .errors import RegisterCoverageError, ResourceExhausted, SchemaError
from .events import Event, Stream

CURRENT = 0


class Output(enum.Enum):
    MARK = "mark"
    SKIP = "skip"

    @property
    def symbol(self) -> str:
        return "•" if self is Output.MARK else "∘"


MARK = Output.MARK
SKIP = Output.SKIP


def reg_name(r: int) -> str:
    return "~" if r == CURRENT else f"r{r}"


@dataclass(frozen=True)
class Transition:
    source: int
    target: int
    formula: fm.Formula | None = None
    rs: tuple[int, ...] = ()
    writes: frozenset[int] = frozenset()
    output: Output | None = None

    def __post_init__(self):
        object.__setattr__(self, "rs", tuple(self.rs))
        object.__setattr__(self, "writes", frozenset(self.writes))
        if self.formula is None:
            if self.rs or self.writes or self.output is not None:
                raise ValueError("epsilon transitions carry no rs, writes or output")
        else:
            if len(self.rs) != self.formula.arity:
                raise ValueError(
                    f"register selection of length {len(self.rs)} for formula of arity {self.formula.arity}"
                )
            if self.output is None:
                raise ValueError("guarded transitions need an output")
            if CURRENT in self.writes:
                raise ValueError("the current-event slot cannot be written")

    @property
    def is_epsilon(self) -> bool:
        return self.formula is None

    def reads(self) -> set[int]:
        return {r for r in self.rs if r != CURRENT}

    def label(self) -> str:
        if self.formula is None:
            return "ε"
        rs = "(" + ",".join(reg_name(r) for r in self.rs) + ")"
        writes = "{" + ",".join(reg_name(r) for r in sorted(self.writes)) + "}"
        return f"{fm.render(self.formula)} / {rs} / {writes} / {self.output.symbol}"


@dataclass(frozen=True)
class Rma:
    states: frozenset[int]
    start_states: frozenset[int]
    final_states: frozenset[int]
    registers: frozenset[int]
    transitions: tuple[Transition, ...]

    def __post_init__(self):
        for name in ("states", "start_states", "final_states", "registers"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        if not self.start_states <= self.states or not self.final_states <= self.states:
            raise ValueError("start and final states must be states")
        if CURRENT in self.registers:
            raise ValueError(f"register id {CURRENT} is reserved for the current event")
        for t in self.transitions:
            if t.source not in self.states or t.target not in self.states:
                raise ValueError(f"transition {t} has an unknown endpoint")
            unknown = (t.reads() | t.writes) - self.registers
            if unknown:
                raise ValueError(f"transition {t} uses unknown registers {sorted(unknown)}")

    @cached_property
    def outgoing(self) -> Mapping[int, tuple[Transition, ...]]:
        out = defaultdict(list)
        for t in self.transitions:
            out[t.source].append(t)
        return {q: tuple(out.get(q, ())) for q in self.states}

    @cached_property
    def _guarded_out(self) -> Mapping[int, tuple[Transition, ...]]:
        return {q: tuple(t for t in ts if not t.is_epsilon) for q, ts in self.outgoing.items()}

    @cached_property
    def _eps_out(self) -> Mapping[int, tuple[int, ...]]:
        return {q: tuple(t.target for t in ts if t.is_epsilon) for q, ts in self.outgoing.items()}

    @property
    def start(self) -> int:
        if len(self.start_states) != 1:
            raise ValueError(f"automaton has {len(self.start_states)} start states")
        return next(iter(self.start_states))

    @property
    def has_epsilon(self) -> bool:
        return any(t.is_epsilon for t in self.transitions)

    @property
    def gamma_size(self) -> int:
        return max(self.registers, default=0) + 1

    def summary(self) -> str:
        return (
            f"{len(self.states)} states, {len(self.registers)} registers, "
            f"{len(self.transitions)} transitions"
        )


def collapse_rs(f: fm.Formula, rs: Sequence[int]) -> tuple[fm.Formula, tuple[int, ...]]:
    """Merge repeated entries of a register selection.

    Positions that read the same register receive the same event, so they
    can share one formula argument; ``(~, ~, r1)`` becomes ``(~, r1)``.
    """
    unique: list[int] = []
    mapping = []
    for r in rs:
        if r not in unique:
            unique.append(r)
        mapping.append(unique.index(r))
    if len(unique) == len(rs):
        return f, tuple(rs)
    return fm.remap_args(f, mapping, len(unique)), tuple(unique)


# -- runs -------------------------------------------------------------------


class Configuration(NamedTuple):
    index: int
    state: int
    gamma: tuple
    marks: frozenset

    def last_marked(self) -> bool:
        return (self.index - 1) in self.marks


def initial_configurations(a: Rma, start_index: int = 0) -> list[Configuration]:
    empty = (None,) * a.gamma_size
    return [Configuration(start_index, q, empty, frozenset()) for q in sorted(a.start_states)]


def epsilon_successors(a: Rma, c: Configuration) -> list[Configuration]:
    return [c._replace(state=p) for p in a._eps_out[c.state]]


def guarded_successors(a: Rma, c: Configuration, event: Event) -> list[Configuration]:
    result = []
    gamma = c.gamma
    for t in a._guarded_out[c.state]:
        args = []
        for r in t.rs:
            value = event if r == CURRENT else gamma[r]
            if value is None:
                raise RegisterCoverageError(
                    f"state q{t.source} reads empty register {reg_name(r)} at index {c.index}"
                )
            args.append(value)
        if not fm.evaluate(t.formula, args):
            continue
        new_gamma = gamma
        if t.writes:
            cells = list(gamma)
            for r in t.writes:
                cells[r] = event
            new_gamma = tuple(cells)
        marks = c.marks | {c.index} if t.output is MARK else c.marks
        result.append(Configuration(c.index + 1, t.target, new_gamma, marks))
    return result


def successors(a: Rma, c: Configuration, event: Event | None) -> list[Configuration]:
    """One-step successors: epsilon moves, plus guarded moves if ``event`` is given."""
    result = epsilon_successors(a, c)
    if event is not None:
        result.extend(guarded_successors(a, c, event))
    return result


def epsilon_closure(a: Rma, configs: Iterable[Configuration]) -> list[Configuration]:
    """All configurations reachable through epsilon moves, each origin included."""
    result = []
    for c in configs:
        seen = {c.state}
        stack = [c]
        while stack:
            cur = stack.pop()
            result.append(cur)
            for p in a._eps_out[cur.state]:
                if p not in seen:
                    seen.add(p)
                    stack.append(cur._replace(state=p))
    return result


@dataclass
class MatchReport:
    per_index: dict[int, set[frozenset[int]]] = field(default_factory=dict)
    live_counts: list[int] = field(default_factory=list)

    @property
    def union(self) -> set[frozenset[int]]:
        out: set[frozenset[int]] = set()
        for matches in self.per_index.values():
            out |= matches
        return out

    def at(self, n: int) -> set[frozenset[int]]:
        return self.per_index.get(n, set())

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatchReport):
            return NotImplemented
        return self._nonempty() == other._nonempty()

    def _nonempty(self):
        return {n: m for n, m in self.per_index.items() if m}

    def to_lines(self) -> str:
        lines = []
        for n in sorted(self.per_index):
            matches = sorted(sorted(m) for m in self.per_index[n])
            if matches:
                lines.append(json.dumps({"n": n, "matches": matches}))
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_lines(cls, text: str) -> "MatchReport":
        report = cls()
        for line in text.splitlines():
            if line.strip():
                record = json.loads(line)
                report.per_index[record["n"]] = {frozenset(m) for m in record["matches"]}
        return report


def run_stream(
    a: Rma,
    s: Stream | Sequence[Event],
    start_index: int = 0,
    max_configs: int = 100_000,
    dedup: bool = True,
) -> MatchReport:
    """Evaluate ``a`` on ``s`` from ``start_index`` and collect matches.

    ``per_index[n]`` holds the matches of runs that end after consuming the
    event at index ``n - 1`` in a final state with a marking last step.
    """
    events = s.events if isinstance(s, Stream) else tuple(s)
    report = MatchReport()
    live = epsilon_closure(a, initial_configurations(a, start_index))
    if dedup:
        live = list(dict.fromkeys(live))
    finals = a.final_states
    for i in range(start_index, len(events)):
        event = events[i]
        stepped = []
        for c in live:
            stepped.extend(guarded_successors(a, c, event))
        live = epsilon_closure(a, stepped)
        if dedup:
            live = list(dict.fromkeys(live))
        if len(live) > max_configs:
            raise ResourceExhausted(len(live), max_configs)
        report.live_counts.append(len(live))
        matches = {c.marks for c in live if c.state in finals and i in c.marks}
        if matches:
            report.per_index[i + 1] = matches
    return report


def accepts(a: Rma, s: Stream | Sequence[Event], start_index: int = 0, **kw) -> bool:
    """True if some run on the whole of ``s`` is accepting at its end."""
    events = s.events if isinstance(s, Stream) else tuple(s)
    return bool(run_stream(a, events, start_index, **kw).at(len(events)))


# -- transformations --------------------------------------------------------


def epsilon_reach(a: Rma, q: int) -> set[int]:
    seen = {q}
    stack = [q]
    while stack:
        for p in a._eps_out[stack.pop()]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def eliminate_epsilon(a: Rma) -> Rma:
    """Equivalent automaton without epsilon transitions.

    Each guarded transition is copied to every state in the epsilon closure of
    its target; start states inherit the guarded transitions of their closure;
    a state is final iff its closure meets a final state.  Useless states are
    then pruned and states renumbered canonically.
    """
    closure = {q: epsilon_reach(a, q) for q in a.states}
    transitions = []
    for t in a.transitions:
        if t.is_epsilon:
            continue
        for p in sorted(closure[t.target]):
            transitions.append(Transition(t.source, p, t.formula, t.rs, t.writes, t.output))
    for q in sorted(a.start_states):
        for mid in sorted(closure[q] - {q}):
            for t in a._guarded_out[mid]:
                for p in sorted(closure[t.target]):
                    transitions.append(Transition(q, p, t.formula, t.rs, t.writes, t.output))
    finals = {q for q in a.states if closure[q] & a.final_states}
    result = Rma(a.states, a.start_states, finals, a.registers, tuple(dict.fromkeys(transitions)))
    return canonicalize(trim(result))


def reachable_states(a: Rma) -> set[int]:
    seen = set(a.start_states)
    queue = deque(sorted(a.start_states))
    while queue:
        for t in a.outgoing[queue.popleft()]:
            if t.target not in seen:
                seen.add(t.target)
                queue.append(t.target)
    return seen


def coreachable_states(a: Rma) -> set[int]:
    incoming = defaultdict(list)
    for t in a.transitions:
        incoming[t.target].append(t.source)
    seen = set(a.final_states)
    stack = list(seen)
    while stack:
        for p in incoming[stack.pop()]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def trim(a: Rma) -> Rma:
    """Drop states that are unreachable or cannot reach a final state.

    Start states are always kept.  Registers no transition mentions are dropped.
    """
    useful = (reachable_states(a) & coreachable_states(a)) | set(a.start_states)
    transitions = tuple(t for t in a.transitions if t.source in useful and t.target in useful)
    used = set()
    for t in transitions:
        used |= t.reads() | t.writes
    return Rma(
        frozenset(useful),
        a.start_states,
        a.final_states & useful,
        frozenset(used),
        transitions,
    )


def canonicalize(a: Rma) -> Rma:
    """Renumber states 0.. in breadth-first order and registers 1.. in order of use."""
    order: dict[int, int] = {}
    queue = deque()
    for q in sorted(a.start_states):
        order[q] = len(order)
        queue.append(q)
    while queue:
        for t in a.outgoing[queue.popleft()]:
            if t.target not in order:
                order[t.target] = len(order)
                queue.append(t.target)
    for q in sorted(a.states - order.keys()):
        order[q] = len(order)
    regs: dict[int, int] = {}
    for t in a.transitions:
        for r in (*sorted(t.writes), *t.rs):
            if r != CURRENT and r not in regs:
                regs[r] = len(regs) + 1
    for r in sorted(a.registers - regs.keys()):
        regs[r] = len(regs) + 1
    return rename(a, order, regs)


def rename(a: Rma, states: Mapping[int, int], registers: Mapping[int, int]) -> Rma:
    def reg(r):
        return r if r == CURRENT else registers[r]

    transitions = [
        Transition(
            states[t.source],
            states[t.target],
            t.formula,
            tuple(reg(r) for r in t.rs),
            frozenset(reg(r) for r in t.writes),
            t.output,
        )
        for t in a.transitions
    ]
    transitions.sort(key=lambda t: (t.source, t.target, t.is_epsilon, t.label()))
    return Rma(
        frozenset(states[q] for q in a.states),
        frozenset(states[q] for q in a.start_states),
        frozenset(states[q] for q in a.final_states),
        frozenset(registers[r] for r in a.registers),
        tuple(transitions),
    )


# -- structural checks ------------------------------------------------------


def reachable_avoiding(a: Rma, avoid) -> set[int]:
    """States reachable from a start state using only transitions not in ``avoid``.

    ``avoid`` is a predicate on transitions.
    """
    seen = set(a.start_states)
    stack = list(seen)
    while stack:
        for t in a.outgoing[stack.pop()]:
            if t.target not in seen and not avoid(t):
                seen.add(t.target)
                stack.append(t.target)
    return seen


def validate_register_coverage(a: Rma) -> list[Diagnostic]:
    """Every register read at q must be written on every trail from a start to q.

    A trail avoiding all writes of r exists iff q is reachable from a start
    state without taking a transition that writes r, so the check is a
    reachability query per register rather than a trail enumeration.
    """
    diags = []
    reads: dict[int, set[int]] = defaultdict(set)
    for t in a.transitions:
        reads[t.source] |= t.reads()
    for r in sorted(set().union(*reads.values()) if reads else ()):
        unguarded = reachable_avoiding(a, lambda t, r=r: r in t.writes)
        for q in sorted(unguarded):
            if r in reads.get(q, ()):
                diags.append(
                    Diagnostic(
                        "error",
                        f"q{q}",
                        f"register {reg_name(r)} is read at q{q} but some trail to q{q} never writes it",
                    )
                )
    return diags


def enumerate_trails(a: Rma, target: int, limit: int = 100_000) -> Iterator[tuple[Transition, ...]]:
    """All trails (walks without repeated states) from a start state to ``target``."""
    count = 0
    for s in sorted(a.start_states):
        stack = [(s, (), frozenset({s}))]
        while stack:
            q, path, on_path = stack.pop()
            if q == target:
                count += 1
                if count > limit:
                    raise RuntimeError("too many trails")
                yield path
            for t in a.outgoing[q]:
                if t.target not in on_path:
                    stack.append((t.target, path + (t,), on_path | {t.target}))


def check_structure(a: Rma) -> list[Diagnostic]:
    """Transitions leaving a start state may only read the current event."""
    diags = []
    for q in sorted(a.start_states):
        for t in a.outgoing[q]:
            if t.reads():
                diags.append(Diagnostic("error", f"q{q}", f"start-state transition reads registers: {t.label()}"))
    return diags


@dataclass(frozen=True)
class Probe:
    gamma: tuple
    event: Event


def applicable(a: Rma, q: int, probe: Probe) -> list[Transition]:
    """Guarded transitions of ``q`` whose guard holds on the probe.

    Transitions reading an empty register are not applicable.
    """
    found = []
    for t in a._guarded_out.get(q, ()):
        args = [probe.event if r == CURRENT else _cell(probe.gamma, r) for r in t.rs]
        if any(v is None for v in args):
            continue
        if fm.evaluate(t.formula, args):
            found.append(t)
    return found


def _cell(gamma, r):
    return gamma[r] if r < len(gamma) else None


def check_deterministic(a: Rma, mode: str = "per_output", probes: Iterable[Probe] = ()) -> list[Diagnostic]:
    if mode not in ("per_output", "output_agnostic"):
        raise ValueError(f"unknown determinism mode {mode!r}")
    diags = []
    if len(a.start_states) != 1:
        diags.append(Diagnostic("error", "automaton", f"{len(a.start_states)} start states"))
    probes = list(probes)
    for q in sorted(a.states):
        for probe in probes:
            hits = applicable(a, q, probe)
            groups = [hits] if mode == "output_agnostic" else [
                [t for t in hits if t.output is o] for o in Output
            ]
            clash = next((g for g in groups if len(g) > 1), None)
            if clash:
                labels = "; ".join(t.label() for t in clash)
                diags.append(
                    Diagnostic("error", f"q{q}", f"{len(clash)} transitions apply on {probe.event!r}: {labels}")
                )
                break
    return diags


def random_probes(
    a: Rma, events: Sequence[Event], n: int, rng: random.Random, empty_rate: float = 0.1
) -> list[Probe]:
    """Probes drawn from ``events``; each register is empty with ``empty_rate``."""
    size = a.gamma_size
    probes = []
    for _ in range(n):
        gamma = tuple(
            None if r == CURRENT or r not in a.registers or rng.random() < empty_rate else rng.choice(events)
            for r in range(size)
        )
        probes.append(Probe(gamma, rng.choice(events)))
    return probes


# -- export -----------------------------------------------------------------


def to_dot(a: Rma, name: str = "rma") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  node [shape=circle];']
    for q in sorted(a.start_states):
        lines.append(f'  start{q} [shape=point, label=""];')
    for q in sorted(a.states):
        shape = "doublecircle" if q in a.final_states else "circle"
        lines.append(f'  q{q} [shape={shape}, label="q{q}"];')
    for q in sorted(a.start_states):
        lines.append(f"  start{q} -> q{q};")
    for t in sorted(a.transitions, key=lambda t: (t.source, t.target, t.label())):
        label = t.label().replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'  q{t.source} -> q{t.target} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(a: Rma) -> str:
    doc = {
        "states": sorted(a.states),
        "start": sorted(a.start_states),
        "final": sorted(a.final_states),
        "registers": sorted(a.registers),
        "transitions": [_transition_doc(t) for t in a.transitions],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _transition_doc(t: Transition) -> dict:
    doc = {"source": t.source, "target": t.target}
    if t.is_epsilon:
        doc["epsilon"] = True
        return doc
    names = fm.default_arg_names(t.formula.arity)
    doc.update(
        {
            "formula": fm.render(t.formula, names),
            "args": names,
            "rs": [reg_name(r) for r in t.rs],
            "writes": [reg_name(r) for r in sorted(t.writes)],
            "output": t.output.value,
        }
    )
    return doc


def from_json(text: str) -> Rma:
    try:
        doc = json.loads(text)
        transitions = [_transition_from_doc(d) for d in doc["transitions"]]
        return Rma(
            frozenset(doc["states"]),
            frozenset(doc["start"]),
            frozenset(doc["final"]),
            frozenset(doc["registers"]),
            tuple(transitions),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed automaton dump: {exc}") from exc


def _transition_from_doc(d: dict) -> Transition:
    if d.get("epsilon"):
        return Transition(d["source"], d["target"])
    f, _ = fm.parse_formula(d["formula"], d["args"])
    return Transition(
        d["source"],
        d["target"],
        f,
        tuple(_parse_reg(r) for r in d["rs"]),
        frozenset(_parse_reg(r) for r in d["writes"]),
        Output(d["output"]),
    )


def _parse_reg(text: str) -> int:
    if text == "~":
        return CURRENT
    if not text.startswith("r") or not text[1:].isdigit():
        raise ValueError(f"bad register name {text!r}")
    return int(text[1:])
