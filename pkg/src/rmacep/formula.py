"""Selection formulas: n-ary predicates over positional event arguments.

Arguments are referenced by position (``AttrRef(0, "id")`` is the ``id`` of
the first argument).  Transitions pass their register selection to a
formula positionally, so formulas never mention CEPL variable names; those
only exist in the textual syntax and are resolved to positions on parse.
"""

from __future__ import annotations

import itertools
import operator
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

from ._lexer import Token, TokenStream, tokenize
from .errors import FormulaError, ParseError

Scalar = Union[str, int, float]


@dataclass(frozen=True)
class AttrRef:
    arg: int
    attr: str


@dataclass(frozen=True)
class Const:
    value: Scalar


Operand = Union[AttrRef, Const]


@dataclass(frozen=True)
class TrueConst:
    pass


@dataclass(frozen=True)
class FalseConst:
    pass


@dataclass(frozen=True)
class Compare:
    op: str
    lhs: Operand
    rhs: Operand


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


@dataclass(frozen=True)
class Not:
    child: object


Node = Union[TrueConst, FalseConst, Compare, And, Or, Not]

TRUE_NODE = TrueConst()
FALSE_NODE = FalseConst()

OPS = ("=", "!=", "<", "<=", ">", ">=")
_OP_ALIASES = {"==": "=", "<>": "!=", "≠": "!=", "≤": "<=", "≥": ">="}
_ORDERED = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


@dataclass(frozen=True)
class Formula:
    body: Node
    arity: int
    _fn: Callable | None = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.arity < 0:
            raise ValueError("arity must be non-negative")
        worst = _max_arg(self.body)
        if worst >= self.arity:
            raise ValueError(f"argument {worst} out of range for arity {self.arity}")

    def __call__(self, *args) -> bool:
        return evaluate(self, args)

    def __str__(self) -> str:
        return render(self)


def _max_arg(node) -> int:
    if isinstance(node, Compare):
        return max(_operand_arg(node.lhs), _operand_arg(node.rhs))
    if isinstance(node, (And, Or)):
        return max((_max_arg(c) for c in node.children), default=-1)
    if isinstance(node, Not):
        return _max_arg(node.child)
    return -1


def _operand_arg(operand) -> int:
    return operand.arg if isinstance(operand, AttrRef) else -1


def referenced_args(f: "Formula") -> set[int]:
    found = set()

    def walk(node):
        if isinstance(node, Compare):
            found.update(o.arg for o in (node.lhs, node.rhs) if isinstance(o, AttrRef))
        elif isinstance(node, (And, Or)):
            for c in node.children:
                walk(c)
        elif isinstance(node, Not):
            walk(node.child)

    walk(f.body)
    return found


TRUE = Formula(TRUE_NODE, 1)
FALSE = Formula(FALSE_NODE, 1)


# -- evaluation -------------------------------------------------------------


def evaluate(f: Formula, args: Sequence[Mapping[str, Scalar] | None]) -> bool:
    if len(args) != f.arity:
        raise FormulaError(f"formula of arity {f.arity} applied to {len(args)} arguments")
    fn = f._fn
    if fn is None:
        fn = _compile(f.body)
        object.__setattr__(f, "_fn", fn)
    return fn(args)


def _compile(node) -> Callable:
    if isinstance(node, TrueConst):
        return lambda args: True
    if isinstance(node, FalseConst):
        return lambda args: False
    if isinstance(node, Not):
        inner = _compile(node.child)
        return lambda args: not inner(args)
    if isinstance(node, And):
        parts = [_compile(c) for c in node.children]
        return lambda args: all(p(args) for p in parts)
    if isinstance(node, Or):
        parts = [_compile(c) for c in node.children]
        return lambda args: any(p(args) for p in parts)
    if isinstance(node, Compare):
        lhs, rhs, op = _operand_fn(node.lhs), _operand_fn(node.rhs), node.op
        return lambda args: _compare(op, lhs(args), rhs(args))
    raise TypeError(f"not a formula node: {node!r}")


def _operand_fn(operand) -> Callable:
    if isinstance(operand, Const):
        value = operand.value
        return lambda args: value
    arg, attr = operand.arg, operand.attr

    def lookup(args):
        event = args[arg]
        if event is None:
            raise FormulaError(f"argument {arg} is empty")
        try:
            return event[attr]
        except KeyError:
            raise FormulaError(f"argument {arg} has no attribute {attr!r}") from None

    return lookup


def _compare(op: str, a: Scalar, b: Scalar) -> bool:
    a_sym, b_sym = isinstance(a, str), isinstance(b, str)
    if a_sym or b_sym:
        if op == "=":
            return a_sym and b_sym and a == b
        if op == "!=":
            return not (a_sym and b_sym and a == b)
        raise FormulaError(f"ordered comparison {op!r} on symbol {a if a_sym else b!r}")
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    return _ORDERED[op](a, b)


# -- algebra ----------------------------------------------------------------


def _shift(node, offset: int):
    if offset == 0:
        return node
    if isinstance(node, Compare):
        return Compare(node.op, _shift_operand(node.lhs, offset), _shift_operand(node.rhs, offset))
    if isinstance(node, And):
        return And(tuple(_shift(c, offset) for c in node.children))
    if isinstance(node, Or):
        return Or(tuple(_shift(c, offset) for c in node.children))
    if isinstance(node, Not):
        return Not(_shift(node.child, offset))
    return node


def _shift_operand(operand, offset):
    if isinstance(operand, AttrRef):
        return AttrRef(operand.arg + offset, operand.attr)
    return operand


def remap_args(f: Formula, mapping: Sequence[int], arity: int) -> Formula:
    """Rename argument ``i`` to ``mapping[i]`` in a formula of the given new arity."""

    def operand(o):
        return AttrRef(mapping[o.arg], o.attr) if isinstance(o, AttrRef) else o

    def walk(node):
        if isinstance(node, Compare):
            return Compare(node.op, operand(node.lhs), operand(node.rhs))
        if isinstance(node, And):
            return And(tuple(walk(c) for c in node.children))
        if isinstance(node, Or):
            return Or(tuple(walk(c) for c in node.children))
        if isinstance(node, Not):
            return Not(walk(node.child))
        return node

    return Formula(walk(f.body), arity)


def _conj(nodes) -> Node:
    flat = []
    for node in nodes:
        flat.extend(node.children if isinstance(node, And) else (node,))
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def conjoin(a: Formula, b: Formula) -> Formula:
    """``a and b`` over the same arguments."""
    if a.arity != b.arity:
        raise ValueError("conjoin needs formulas of equal arity")
    return Formula(_conj([a.body, b.body]), a.arity)


def conjoin_with_offset(base: Formula, appended: Formula) -> Formula:
    """``base(a0..ak-1) and appended(ak..ak+m-1)`` with arity k+m."""
    body = _conj([base.body, _shift(appended.body, base.arity)])
    return Formula(body, base.arity + appended.arity)


def negate(f: Formula) -> Formula:
    return Formula(_negate_node(f.body), f.arity)


def _negate_node(node) -> Node:
    if isinstance(node, TrueConst):
        return FALSE_NODE
    if isinstance(node, FalseConst):
        return TRUE_NODE
    if isinstance(node, Not):
        return node.child
    return Not(node)


def fold_constants(f: Formula) -> Formula:
    return Formula(_fold(f.body), f.arity)


def _fold(node) -> Node:
    if isinstance(node, Not):
        return _negate_node(_fold(node.child))
    if isinstance(node, (And, Or)):
        is_and = isinstance(node, And)
        absorbing, neutral = (FalseConst, TrueConst) if is_and else (TrueConst, FalseConst)
        kids = []
        for child in node.children:
            child = _fold(child)
            if isinstance(child, absorbing):
                return child
            if isinstance(child, neutral):
                continue
            if type(child) is type(node):
                kids.extend(child.children)
            else:
                kids.append(child)
        if not kids:
            return TRUE_NODE if is_and else FALSE_NODE
        if len(kids) == 1:
            return kids[0]
        return And(tuple(kids)) if is_and else Or(tuple(kids))
    return node


def is_true(f: Formula) -> bool:
    return isinstance(_fold(f.body), TrueConst)


def is_false(f: Formula) -> bool:
    return isinstance(_fold(f.body), FalseConst)


@dataclass(frozen=True)
class SignedFormula:
    formula: Formula
    positive: bool
    arg_offset: int

    def evaluate(self, args) -> bool:
        sub = args[self.arg_offset : self.arg_offset + self.formula.arity]
        return evaluate(self.formula, sub) == self.positive


def propagate_constants(f: Formula) -> Formula:
    """Fold constants and resolve atoms implied by sibling equalities.

    Inside a conjunction, ``a.attr = c`` fixes that attribute, so other atoms
    comparing the same attribute with a constant become TRUE or FALSE (for
    example ``z.type = T and z.type = H`` is FALSE).  No solver is involved;
    atoms relating two attributes are left alone.
    """
    return Formula(_propagate(_fold(f.body), {}, {}), f.arity)


def _const_atom(node):
    """``(key, op, value)`` for ``ref OP const`` atoms, else None."""
    if not isinstance(node, Compare):
        return None
    lhs, rhs, op = node.lhs, node.rhs, node.op
    if isinstance(lhs, Const) and isinstance(rhs, AttrRef):
        lhs, rhs = rhs, lhs
        op = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}.get(op, op)
    if isinstance(lhs, AttrRef) and isinstance(rhs, Const):
        return (lhs.arg, lhs.attr), op, rhs.value
    return None


def _join(is_and: bool, kids) -> Node:
    """Shallow fold of an AND/OR over already simplified children."""
    absorbing, neutral = (FalseConst, TrueConst) if is_and else (TrueConst, FalseConst)
    cls = And if is_and else Or
    flat = []
    for kid in kids:
        if isinstance(kid, absorbing):
            return kid
        if isinstance(kid, neutral):
            continue
        flat.extend(kid.children if isinstance(kid, cls) else (kid,))
    if not flat:
        return TRUE_NODE if is_and else FALSE_NODE
    return flat[0] if len(flat) == 1 else cls(tuple(flat))


def _propagate(node, eq: dict, neq: dict) -> Node:
    """Simplify a folded node under known attribute equalities/inequalities."""
    if isinstance(node, Compare):
        atom = _const_atom(node)
        if atom is None:
            return node
        key, op, value = atom
        if key in eq:
            try:
                return TRUE_NODE if _compare(op, eq[key], value) else FALSE_NODE
            except FormulaError:
                return node
        if value in neq.get(key, ()):
            if op == "=":
                return FALSE_NODE
            if op == "!=":
                return TRUE_NODE
        return node
    if isinstance(node, Not):
        return _negate_node(_propagate(node.child, eq, neq))
    if isinstance(node, Or):
        return _join(False, [_propagate(c, eq, neq) for c in node.children])
    if isinstance(node, And):
        eq, neq = dict(eq), {k: set(v) for k, v in neq.items()}
        kinds = []  # per child: "keep", "drop" or "rest"
        children = list(dict.fromkeys(node.children))
        for kid in children:
            fact = _fact(kid)
            if fact is None:
                kinds.append("rest")
                continue
            kind, key, value = fact
            if kind == "eq":
                if key in eq:
                    if eq[key] != value:
                        return FALSE_NODE
                    kinds.append("drop")  # already known, possibly from outside
                    continue
                if value in neq.get(key, ()):
                    return FALSE_NODE
                eq[key] = value
            else:
                if key in eq:
                    if eq[key] == value:
                        return FALSE_NODE
                    kinds.append("drop")
                    continue
                if value in neq.get(key, ()):
                    kinds.append("drop")
                    continue
                neq.setdefault(key, set()).add(value)
            kinds.append("keep")
        out = []
        for kid, kind in zip(children, kinds):
            if kind == "rest":
                out.append(_propagate(kid, eq, neq))
            elif kind == "keep":
                fact = _fact(kid)
                # an equality makes inequalities on the same attribute redundant
                if not (fact[0] == "neq" and fact[1] in eq):
                    out.append(kid)
        return _join(True, out)
    return node


def _fact(node):
    atom = _const_atom(node.child) if isinstance(node, Not) else _const_atom(node)
    if atom is None:
        return None
    key, op, value = atom
    if op not in ("=", "!="):
        return None
    positive = not isinstance(node, Not)
    return ("eq" if (op == "=") == positive else "neq", key, value)


def _simplifier(propagate: bool):
    return (lambda n: _propagate(_fold(n), {}, {})) if propagate else _fold


@dataclass(frozen=True)
class MinTerm:
    conjuncts: tuple[SignedFormula, ...]
    total_arity: int
    # simplified conjunction computed during enumeration, with its mode
    simplified: tuple[bool, Node] | None = field(default=None, compare=False, repr=False)

    def signs(self) -> tuple[bool, ...]:
        return tuple(c.positive for c in self.conjuncts)

    def formula(self, propagate: bool = False) -> Formula:
        """The simplified conjunction as one formula over the concatenated blocks."""
        if self.simplified is not None and self.simplified[0] == propagate:
            return Formula(self.simplified[1], self.total_arity)
        parts = []
        for c in self.conjuncts:
            body = _shift(c.formula.body, c.arg_offset)
            parts.append(body if c.positive else _negate_node(body))
        body = _simplifier(propagate)(And(tuple(parts))) if parts else TRUE_NODE
        return Formula(body, self.total_arity)

    def evaluate(self, args) -> bool:
        return all(c.evaluate(args) for c in self.conjuncts)


def min_terms(
    formulas: Sequence[tuple[Formula, int]], drop_unsat: bool = True, propagate: bool = False
) -> list[MinTerm]:
    """One min-term per sign assignment over ``formulas``.

    With ``drop_unsat`` the assignments whose conjunction simplifies to FALSE
    (e.g. negating a TRUE guard) are skipped; ``propagate`` selects
    ``propagate_constants`` instead of plain constant folding for that test.
    Order is the binary order of sign assignments, positive before negated.
    """
    total = max((off + f.arity for f, off in formulas), default=0)
    simplify = _simplifier(propagate)
    shifted = [_shift(f.body, off) for f, off in formulas]
    result: list[MinTerm] = []

    def extend(signs: tuple[bool, ...], acc: Node):
        # acc is the simplified conjunction of the parts chosen so far
        if drop_unsat and isinstance(acc, FalseConst):
            return
        i = len(signs)
        if i == len(formulas):
            conjuncts = tuple(SignedFormula(f, s, off) for (f, off), s in zip(formulas, signs))
            result.append(MinTerm(conjuncts, total, (propagate, acc)))
            return
        for sign in (True, False):
            part = shifted[i] if sign else _negate_node(shifted[i])
            extend(signs + (sign,), simplify(And((acc, part))))

    extend((), TRUE_NODE)
    return result


# -- text syntax ------------------------------------------------------------

_KEYWORDS = {"and", "or", "not", "TRUE", "FALSE"}
_DEFAULT_NAMES = ("z", "w", "u", "v")


def default_arg_names(arity: int) -> list[str]:
    return [_DEFAULT_NAMES[i] if i < len(_DEFAULT_NAMES) else f"a{i}" for i in range(arity)]


def render(f: Formula, names: Sequence[str] | None = None) -> str:
    names = list(names) if names is not None else default_arg_names(f.arity)
    return _render(f.body, names, 0)


def _render(node, names, level) -> str:
    # levels: 0 or, 1 and, 2 not/atom
    if isinstance(node, TrueConst):
        return "TRUE"
    if isinstance(node, FalseConst):
        return "FALSE"
    if isinstance(node, Compare):
        return f"{_render_operand(node.lhs, names)} {node.op} {_render_operand(node.rhs, names)}"
    if isinstance(node, Not):
        return "not " + _render(node.child, names, 2)
    if isinstance(node, And):
        text = " and ".join(_render(c, names, 2) for c in node.children)
        return f"({text})" if level > 1 else text
    if isinstance(node, Or):
        text = " or ".join(_render(c, names, 1) for c in node.children)
        return f"({text})" if level > 0 else text
    raise TypeError(node)


def _render_operand(operand, names) -> str:
    if isinstance(operand, AttrRef):
        return f"{names[operand.arg]}.{operand.attr}"
    return render_scalar(operand.value)


def render_scalar(value: Scalar) -> str:
    if isinstance(value, str):
        if value.isidentifier() and value not in _KEYWORDS and value not in _CEPL_WORDS:
            return value
        escaped = value.replace("\\", "\\\\").replace("'", "\\'")
        return f"'{escaped}'"
    return repr(value)


# words that terminate a formula inside a CEPL expression
_CEPL_WORDS = {"AS", "FILTER", "OR", "WINDOW"}


def parse_formula(text: str, arg_names: Sequence[str] | None = None) -> tuple[Formula, list[str]]:
    """Parse the textual syntax.

    With ``arg_names`` the arity is fixed and every ``name.attr`` must use one
    of them; otherwise argument positions follow first appearance.
    """
    ts = TokenStream(tokenize(text))
    f, names = parse_formula_tokens(ts, arg_names)
    tok = ts.peek()
    if tok.kind != "eof":
        raise ParseError(f"unexpected {tok.text!r} after formula", tok.pos)
    return f, names


def parse_formula_tokens(ts: TokenStream, arg_names: Sequence[str] | None = None):
    parser = _FormulaParser(ts, arg_names)
    body = parser.parse_or()
    arity = len(parser.names)
    return Formula(body, arity), list(parser.names)


class _FormulaParser:
    def __init__(self, ts: TokenStream, arg_names):
        self.ts = ts
        self.fixed = arg_names is not None
        self.names = list(arg_names) if arg_names is not None else []

    def parse_or(self):
        kids = [self.parse_and()]
        while self.ts.at("or", "ident"):
            self.ts.next()
            kids.append(self.parse_and())
        return kids[0] if len(kids) == 1 else Or(tuple(kids))

    def parse_and(self):
        kids = [self.parse_not()]
        while self.ts.at("and", "ident"):
            self.ts.next()
            kids.append(self.parse_not())
        return kids[0] if len(kids) == 1 else And(tuple(kids))

    def parse_not(self):
        if self.ts.at("not", "ident"):
            self.ts.next()
            return Not(self.parse_not())
        return self.parse_atom()

    def parse_atom(self):
        tok = self.ts.peek()
        if tok.kind == "punct" and tok.text == "(":
            self.ts.next()
            node = self.parse_or()
            self.ts.expect(")")
            return node
        if tok.kind == "ident" and tok.text in ("TRUE", "FALSE"):
            self.ts.next()
            return TRUE_NODE if tok.text == "TRUE" else FALSE_NODE
        lhs = self.parse_operand()
        op_tok = self.ts.next()
        if op_tok.kind != "op":
            raise ParseError(f"expected comparison operator, found {op_tok.text or 'end of input'!r}", op_tok.pos)
        op = _OP_ALIASES.get(op_tok.text, op_tok.text)
        rhs = self.parse_operand()
        if not (isinstance(lhs, AttrRef) or isinstance(rhs, AttrRef)):
            raise ParseError("a comparison needs at least one variable.attribute operand", tok.pos)
        return Compare(op, lhs, rhs)

    def parse_operand(self) -> Operand:
        tok = self.ts.next()
        if tok.kind == "number":
            text = tok.text
            return Const(float(text) if any(ch in text for ch in ".eE") else int(text))
        if tok.kind == "string":
            return Const(_unescape(tok.text[1:-1]))
        if tok.kind == "ident" and tok.text not in _KEYWORDS and tok.text not in _CEPL_WORDS:
            if self.ts.at(".", "punct"):
                self.ts.next()
                attr = self.ts.next()
                if attr.kind != "ident":
                    raise ParseError("expected attribute name after '.'", attr.pos)
                return AttrRef(self._arg(tok), attr.text)
            return Const(tok.text)
        raise ParseError(f"expected operand, found {tok.text or 'end of input'!r}", tok.pos)

    def _arg(self, tok: Token) -> int:
        if tok.text in self.names:
            return self.names.index(tok.text)
        if self.fixed:
            raise ParseError(f"unknown argument {tok.text!r}", tok.pos)
        self.names.append(tok.text)
        return len(self.names) - 1


def _unescape(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)
