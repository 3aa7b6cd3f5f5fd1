import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import random_expr, random_stream, sample_stream
from rmacep import cepl, oracle, rma
from rmacep import formula as fm
from rmacep.compiler import (
    IdGen,
    _compile,
    apply_nary_filter,
    compile,
    compile_base,
    compile_or,
    compile_seq,
    compile_text,
    create_new_rs,
)
from rmacep.errors import NoEligibleTransition, NotBounded
from rmacep.rma import CURRENT, MARK, SKIP

SAME_ID = "(T AS x) ; (H AS y) FILTER x.id = y.id"
UNBOUNDED = "(T AS x FILTER x.id = y.id)+ ; (H AS y)"
SENSOR = "(T AS x FILTER x.value < -40 OR T AS x FILTER x.value > 50) ; (T AS y) FILTER y.id = x.id"
NESTED = "((T AS x1 ; T AS x2 FILTER x1.value = x2.value) ; (H AS x3 ; H AS x4 FILTER x3.value = x4.value)+)+"
T = sample_stream()

exprs = st.integers(0, 10**6).map(lambda seed: random_expr(random.Random(seed)))
seeds = st.integers(0, 10**6)


def render(t):
    return fm.render(t.formula)


# -- examples ------------------------------------------------------------------


def test_same_id_shape():
    a = rma.eliminate_epsilon(compile_text(SAME_ID).rma)
    assert (len(a.states), len(a.registers), len(a.transitions)) == (3, 1, 4)
    loops = [t for t in a.transitions if t.source == t.target]
    assert len(loops) == 2
    assert all(fm.is_true(t.formula) and t.output is SKIP and t.rs == (CURRENT,) for t in loops)
    (write,) = [t for t in a.transitions if t.writes]
    assert render(write) == "z.type = T" and write.writes == {1} and write.output is MARK
    (final,) = [t for t in a.transitions if t.target in a.final_states]
    assert render(final) == "z.type = H and w.id = z.id"
    assert final.rs == (CURRENT, 1) and final.output is MARK


def test_sensor_expression_shares_one_register():
    art = compile_text(SENSOR)
    a = art.rma
    assert a.registers == {1}
    x_transitions = [a.transitions[i] for i in art.transitions_of("x")]
    assert len(x_transitions) == 2
    assert all(t.writes == {1} for t in x_transitions)
    (y_transition,) = [a.transitions[i] for i in art.transitions_of("y")]
    assert render(y_transition) == "z.type = T and z.id = w.id"
    assert y_transition.rs == (CURRENT, 1)
    # the x transitions only carry their unary filters
    assert sorted(render(t) for t in x_transitions) == [
        "z.type = T and z.value < -40",
        "z.type = T and z.value > 50",
    ]


def test_base_case():
    a = compile_text("T AS x").rma
    assert (len(a.states), len(a.registers)) == (2, 0)
    loop, move = a.transitions
    assert loop.source == loop.target == a.start and fm.is_true(loop.formula) and loop.output is SKIP
    assert render(move) == "z.type = T" and move.output is MARK


def test_compile_base_with_filter():
    f, _ = fm.parse_formula("z.value < -40")
    art = compile_base("T", "x", f)
    assert render(art.rma.transitions[1]) == "z.type = T and z.value < -40"
    assert art.delta_x == {1: "x"}
    assert render(compile_base("H", "y").rma.transitions[1]) == "z.type = H"


def test_or_adds_four_epsilon_transitions():
    ids = IdGen()
    a1, a2 = compile_base("T", "x", ids=ids), compile_base("H", "y", ids=ids)
    combined = compile_or(a1, a2, ids).rma
    assert sum(t.is_epsilon for t in combined.transitions) == 4
    assert len(combined.states) == 6


def test_seq_adds_no_states():
    ids = IdGen()
    a1, a2 = compile_base("T", "x", ids=ids), compile_base("H", "y", ids=ids)
    combined = compile_seq(a1, a2).rma
    assert len(combined.states) == 4
    assert sum(t.is_epsilon for t in combined.transitions) == 1


def test_nested_kleene_compiles():
    art = compile(cepl.parse_expr(NESTED))
    assert rma.validate_register_coverage(art.rma) == []


def test_unbounded_rejected():
    with pytest.raises(NotBounded) as info:
        compile(cepl.parse_expr(UNBOUNDED))
    assert any("y ∉ bound(T AS x)" in d.message for d in info.value.diagnostics)


def test_create_new_rs_examples():
    ids = IdGen()
    e = cepl.parse_expr(SENSOR)
    child = _compile(e.child, ids)
    (delta,) = child.transitions_of("y")
    rs_new, new_regs, art = create_new_rs(child, delta, e.spec.arg_vars, ids)
    assert rs_new == (CURRENT, 1) and new_regs == [1]
    assert all(1 in art.rma.transitions[i].writes for i in art.transitions_of("x"))
    # a second filter over the same variables needs no new register
    rs_again, regs_again, _ = create_new_rs(art, delta, e.spec.arg_vars, ids)
    assert rs_again == (CURRENT, 1) and regs_again == []
    # a filter over delta's own variable only reads the current event
    rs_own, regs_own, _ = create_new_rs(art, delta, ("y",), ids)
    assert rs_own == (CURRENT,) and regs_own == []


def test_filter_spanning_or_uses_one_register():
    art = compile_text("(T AS x OR H AS x) ; T AS y FILTER x.id = y.id")
    assert len(art.rma.registers) == 1


def test_unary_filter_on_compound():
    art = compile_text("(T AS x ; H AS y) FILTER x.value > 20")
    (tx,) = [art.rma.transitions[i] for i in art.transitions_of("x")]
    assert render(tx) == "z.type = T and z.value > 20" and tx.rs == (CURRENT,)
    assert art.rma.registers == set()


def test_no_eligible_transition():
    ids = IdGen()
    art = compile_base("T", "x", ids=ids)
    f, _ = fm.parse_formula("a.id = b.id")
    with pytest.raises(NoEligibleTransition):
        apply_nary_filter(art, f, ("x", "q"), ids)


# -- structural invariants -----------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(exprs)
def test_structural_invariants(e):
    art = compile(e)
    a = art.rma
    # every register belongs to a variable; delta_x only names guarded transitions
    assert set(art.r_x) == set(a.registers)
    assert all(not a.transitions[i].is_epsilon for i in art.delta_x)
    # all transitions of a registered variable write its register, and only those do
    for r, var in art.r_x.items():
        mine = set(art.transitions_of(var))
        for i, t in enumerate(a.transitions):
            assert (r in t.writes) == (i in mine)
    assert rma.validate_register_coverage(a) == []
    for t in a.outgoing[a.start]:
        assert not t.reads()


def _accepting_walks(art, events):
    """Transition-index sequences of accepting runs (epsilon moves included)."""
    a = art.rma
    index_of = {}
    for i, t in enumerate(a.transitions):
        index_of.setdefault(id(t), i)
    found = []

    def walk(pos, state, gamma, path, last_mark, eps_seen):
        if pos > 0 and state in a.final_states and last_mark:
            found.append((pos, path))
        for t in a.outgoing[state]:
            i = index_of[id(t)]
            if t.is_epsilon:
                if t.target not in eps_seen:
                    walk(pos, t.target, gamma, path + (i,), last_mark, eps_seen | {t.target})
                continue
            if pos == len(events):
                continue
            args = [events[pos] if r == CURRENT else gamma[r] for r in t.rs]
            if fm.evaluate(t.formula, args):
                g = list(gamma)
                for r in t.writes:
                    g[r] = events[pos]
                walk(pos + 1, t.target, tuple(g), path + (i,), t.output is MARK, frozenset({t.target}))

    walk(0, a.start, (None,) * a.gamma_size, (), False, frozenset({a.start}))
    return found


def _iteration_free(e) -> bool:
    return not any(isinstance(s, cepl.Iter) for s in cepl.subexpressions(e))


@settings(max_examples=60, deadline=None)
@given(exprs.filter(_iteration_free), seeds)
def test_variables_consumed_once_per_accepting_run(e, seed):
    art = compile(e)
    s = random_stream(random.Random(seed), max_len=6)
    must = cepl.bound(e)
    for _, path in _accepting_walks(art, s.events):
        counts = Counter(art.delta_x[i] for i in path if i in art.delta_x)
        assert all(c == 1 for c in counts.values())
        assert must <= set(counts)
        writes = Counter(r for i in path for r in art.rma.transitions[i].writes)
        assert all(c == 1 for c in writes.values())


# -- oracle equivalence --------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(exprs, seeds)
def test_engine_equals_oracle(e, seed):
    rng = random.Random(seed)
    a = compile(e).rma
    for _ in range(3):
        s = random_stream(rng)
        i = rng.randint(0, len(s))
        got = rma.run_stream(a, s, start_index=i)
        want = oracle.by_end(oracle.matches(e, s, i))
        assert got.per_index == want


def test_iteration_marks_one_or_more():
    a = compile_text("(T AS x)+").rma
    s = T.prefix(3)
    assert rma.run_stream(a, s).union == oracle.all_matches(cepl.parse_expr("(T AS x)+"), s)
    assert frozenset({0, 1, 2}) in rma.run_stream(a, s).union


def test_sequence_matches_are_ordered_concatenations():
    e = cepl.parse_expr("T AS x ; H AS y")
    a = compile(e).rma
    for m in rma.run_stream(a, T).union:
        t_part = [i for i in m if T[i]["type"] == "T"]
        h_part = [i for i in m if T[i]["type"] == "H"]
        assert len(m) == 2 and max(t_part) < min(h_part)


def test_or_is_union():
    left, right = cepl.parse_expr("T AS x"), cepl.parse_expr("H AS x")
    both = compile(cepl.Or(left, right)).rma
    s = T
    assert rma.run_stream(both, s).union == oracle.all_matches(left, s) | oracle.all_matches(right, s)
