import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import SCHEMA, all_events, ev, sample_stream
from rmacep import formula as fm
from rmacep.errors import FormulaError, ParseError

T = sample_stream()


def parse(text, names=None):
    return fm.parse_formula(text, names)[0]


# -- random formulas over two arguments --------------------------------------

refs = st.builds(fm.AttrRef, st.integers(0, 1), st.sampled_from(["id", "value"]))
type_refs = st.builds(fm.AttrRef, st.integers(0, 1), st.just("type"))
atoms = st.one_of(
    st.builds(fm.Compare, st.sampled_from(["=", "!="]), type_refs, st.sampled_from([fm.Const("T"), fm.Const("H")])),
    st.builds(fm.Compare, st.sampled_from(fm.OPS), refs, st.sampled_from([fm.Const(1), fm.Const(2), fm.Const(20.0)])),
    st.builds(fm.Compare, st.sampled_from(fm.OPS), refs, refs),
    st.just(fm.TRUE_NODE),
    st.just(fm.FALSE_NODE),
)
nodes = st.recursive(
    atoms,
    lambda kids: st.one_of(
        st.builds(fm.Not, kids),
        st.lists(kids, min_size=2, max_size=3).map(lambda k: fm.And(tuple(k))),
        st.lists(kids, min_size=2, max_size=3).map(lambda k: fm.Or(tuple(k))),
    ),
    max_leaves=8,
)
formulas = nodes.map(lambda n: fm.Formula(n, 2))
pairs = st.tuples(st.sampled_from(all_events()), st.sampled_from(all_events()))


# -- evaluation ----------------------------------------------------------------


def test_binary_filter_on_sample():
    f = parse("z.type = H and z.id = w.id", ["z", "w"])
    assert fm.evaluate(f, [T[3], T[1]])
    assert not fm.evaluate(f, [T[3], T[2]])


def test_true_on_any_event():
    assert all(fm.evaluate(fm.TRUE, [e]) for e in all_events())


def test_symbol_against_number():
    assert not fm.evaluate(parse("z.type = 1"), [ev("T", 1, 1.0)])
    assert fm.evaluate(parse("z.type != 1"), [ev("T", 1, 1.0)])
    with pytest.raises(FormulaError):
        fm.evaluate(parse("z.type < 1"), [ev("T", 1, 1.0)])


def test_missing_attribute_and_empty_argument():
    with pytest.raises(FormulaError):
        fm.evaluate(parse("z.colour = 1"), [ev("T", 1, 1.0)])
    with pytest.raises(FormulaError):
        fm.evaluate(parse("w.id = z.id", ["z", "w"]), [ev("T", 1, 1.0), None])


def test_formula_arity_checks():
    with pytest.raises(ValueError):
        fm.Formula(fm.Compare("=", fm.AttrRef(2, "id"), fm.Const(1)), 2)


# -- algebra -------------------------------------------------------------------


def test_conjoin_with_offset_builds_binary_filter():
    f3 = parse("z.type = T")
    g = parse("z.id = w.id", ["z", "w"])
    combined = fm.conjoin_with_offset(f3, g)
    assert combined.arity == 3
    # binding g's first argument to the current event collapses positions
    collapsed = fm.remap_args(combined, [0, 0, 1], 2)
    assert fm.render(collapsed) == "z.type = T and z.id = w.id"


@given(formulas, pairs)
def test_conjoin_with_true_is_identity(f, args):
    assert fm.evaluate(fm.conjoin(f, fm.Formula(fm.TRUE_NODE, 2)), args) == fm.evaluate(f, args)


def test_conjoin_true_true():
    t = fm.conjoin_with_offset(fm.TRUE, fm.TRUE)
    assert t.arity == 2
    assert all(fm.evaluate(t, [e, e]) for e in all_events())


def test_negate_examples():
    assert fm.is_false(fm.negate(fm.TRUE))
    assert not fm.evaluate(fm.negate(parse("z.id = 1")), [ev("T", 1, 10.0)])


@given(formulas, pairs)
def test_double_negation(f, args):
    assert fm.evaluate(fm.negate(fm.negate(f)), args) == fm.evaluate(f, args)


@given(formulas, pairs)
def test_negation_flips(f, args):
    assert fm.evaluate(fm.negate(f), args) != fm.evaluate(f, args)


def test_fold_examples():
    f = parse("z.id = 1")
    assert fm.is_false(fm.Formula(fm.And((f.body, fm.Not(fm.TRUE_NODE))), 1))
    assert fm.fold_constants(fm.Formula(fm.And((f.body, fm.TRUE_NODE)), 1)) == f
    assert fm.is_false(fm.Formula(fm.Or((fm.FALSE_NODE, fm.FALSE_NODE)), 1))


@given(formulas, pairs)
def test_fold_preserves_semantics(f, args):
    assert fm.evaluate(fm.fold_constants(f), args) == fm.evaluate(f, args)


@given(formulas, pairs)
def test_propagation_preserves_semantics(f, args):
    assert fm.evaluate(fm.propagate_constants(f), args) == fm.evaluate(f, args)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("z.type = T and z.type = H", "FALSE"),
        ("z.type = T and not (z.type = H and w.id = z.id)", "z.type = T"),
        ("z.type = T and T = z.type", "z.type = T"),
        ("z.id != 1 and z.id = 2", "z.id = 2"),
        ("z.type = T and (z.type = H or z.id = 1)", "z.type = T and z.id = 1"),
        ("z.id < 2 and w.id = 3", "z.id < 2 and w.id = 3"),
    ],
)
def test_propagation_examples(text, expected):
    f, names = fm.parse_formula(text, ["z", "w"])
    assert fm.render(fm.propagate_constants(f), names) == expected


# -- min-terms -----------------------------------------------------------------


def test_min_terms_true_and_f():
    f = parse("z.type = T")
    terms = fm.min_terms([(fm.TRUE, 0), (f, 1)])
    assert [t.signs() for t in terms] == [(True, True), (True, False)]
    assert [fm.render(t.formula()) for t in terms] == ["w.type = T", "not w.type = T"]
    assert len(fm.min_terms([(fm.TRUE, 0), (f, 1)], drop_unsat=False)) == 4


def test_min_terms_empty_and_single():
    (vacuous,) = fm.min_terms([])
    assert vacuous.conjuncts == () and fm.is_true(vacuous.formula())
    f = parse("z.id = 1")
    assert [t.signs() for t in fm.min_terms([(f, 0)])] == [(True,), (False,)]


@settings(max_examples=60)
@given(st.lists(formulas, min_size=1, max_size=4), pairs, st.booleans())
def test_min_terms_partition(fs, args, propagate):
    """Exactly one sign assignment holds on any input, and dropping only removes unsatisfiable ones."""
    blocks = [(f, 0) for f in fs]
    every = fm.min_terms(blocks, drop_unsat=False)
    kept = fm.min_terms(blocks, propagate=propagate)
    assert len(every) == 2 ** len(fs)
    assert len({t.signs() for t in every}) == len(every)
    holding = [t for t in every if t.evaluate(list(args))]
    assert len(holding) == 1
    assert holding[0].signs() in {t.signs() for t in kept}
    for t in kept:
        assert fm.evaluate(t.formula(propagate), list(args)) == t.evaluate(list(args))


# -- text syntax ---------------------------------------------------------------


@pytest.mark.parametrize(
    "text",
    [
        "x.id = y.id",
        "x.type = T and (x.value < -40 or not y.value >= 2.5)",
        "x.type = 'AS' and x.id != 3",
        "TRUE",
        "not (x.id = 1 and x.id = 2)",
    ],
)
def test_parse_render_round_trip(text):
    f, names = fm.parse_formula(text)
    again, _ = fm.parse_formula(fm.render(f, names), names)
    assert again == f


def test_parse_aliases():
    f, names = fm.parse_formula("x.id == y.id and x.value ≤ 3 and x.id <> 2")
    assert names == ["x", "y"]
    assert fm.render(f, names) == "x.id = y.id and x.value <= 3 and x.id != 2"


@pytest.mark.parametrize("text", ["x.id =", "x = 1", "(x.id = 1", "x.id ! 1", "1 = 2"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        fm.parse_formula(text)


@given(formulas)
def test_render_parse_round_trip(f):
    text = fm.render(f, ["a", "b"])
    again, _ = fm.parse_formula(text, ["a", "b"])
    for args in [(SCHEMA.event(type="T", id=1, value=20.0), SCHEMA.event(type="H", id=2, value=10.0))]:
        assert fm.evaluate(again, list(args)) == fm.evaluate(f, list(args))
