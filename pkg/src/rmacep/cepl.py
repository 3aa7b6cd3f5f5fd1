"""Pattern expressions: syntax tree, parser, printer and static checks.

Concrete syntax (keywords are upper case)::

    top     := or_expr ('WINDOW' INT)?
    or_expr := filtered ('OR' filtered)*
    filtered:= seq ('FILTER' formula)*
    seq     := postfix (';' postfix)*
    postfix := primary '+'*
    primary := '(' or_expr ')' | RELATION 'AS' VAR

So ``(T AS x) ; (H AS y) FILTER x.id = y.id`` filters the whole sequence,
and a filtered expression must be parenthesized before it can be sequenced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from . import formula as fm
from ._lexer import TokenStream, tokenize
from .errors import ParseError

KEYWORDS = frozenset({"AS", "FILTER", "OR", "WINDOW"})


@dataclass(frozen=True)
class As:
    relation: str
    var: str

    def __post_init__(self):
        if not self.var or not self.relation:
            raise ValueError("relation and variable names must be non-empty")


@dataclass(frozen=True)
class FilterSpec:
    """A formula plus the variable bound to each of its argument positions.

    Arguments are renumbered on construction so that they follow order of
    first appearance in the formula; two specs that differ only in argument
    numbering compare equal.
    """

    formula: fm.Formula
    arg_vars: tuple[str, ...]

    def __post_init__(self):
        arg_vars = tuple(self.arg_vars)
        if len(arg_vars) != self.formula.arity:
            raise ValueError("one variable per formula argument is required")
        if len(set(arg_vars)) != len(arg_vars):
            raise ValueError(f"duplicate filter variables {arg_vars}")
        order = _appearance_order(self.formula.body)
        if sorted(order) != list(range(len(arg_vars))):
            raise ValueError("every filter variable must be referenced by the formula")
        if not arg_vars:
            raise ValueError("a filter must reference at least one variable")
        mapping = [0] * len(order)
        for new, old in enumerate(order):
            mapping[old] = new
        object.__setattr__(self, "formula", fm.remap_args(self.formula, mapping, len(order)))
        object.__setattr__(self, "arg_vars", tuple(arg_vars[old] for old in order))

    @classmethod
    def parse(cls, text: str) -> "FilterSpec":
        f, names = fm.parse_formula(text)
        return cls(f, tuple(names))

    def __str__(self) -> str:
        return fm.render(self.formula, self.arg_vars)


def _appearance_order(node) -> list[int]:
    seen: list[int] = []

    def walk(n):
        if isinstance(n, fm.Compare):
            for o in (n.lhs, n.rhs):
                if isinstance(o, fm.AttrRef) and o.arg not in seen:
                    seen.append(o.arg)
        elif isinstance(n, (fm.And, fm.Or)):
            for c in n.children:
                walk(c)
        elif isinstance(n, fm.Not):
            walk(n.child)

    walk(node)
    return seen


@dataclass(frozen=True)
class Filter:
    child: "Expr"
    spec: FilterSpec


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Seq:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Iter:
    child: "Expr"


Expr = Union[As, Filter, Or, Seq, Iter]


@dataclass(frozen=True)
class WindowedExpr:
    body: Expr
    w: int

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("window length must be at least 1")


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.message} [in {self.location}]"


# -- parsing ----------------------------------------------------------------


def parse_expr(text: str) -> Expr | WindowedExpr:
    ts = TokenStream(tokenize(text))
    parser = _Parser(ts)
    body = parser.or_expr()
    result: Expr | WindowedExpr = body
    if ts.at("WINDOW", "ident"):
        ts.next()
        tok = ts.next()
        if tok.kind != "number" or not tok.text.lstrip("-").isdigit():
            raise ParseError("WINDOW expects an integer length", tok.pos)
        w = int(tok.text)
        if w <= 0:
            raise ParseError(f"window length must be positive, got {w}", tok.pos)
        result = WindowedExpr(body, w)
    tok = ts.peek()
    if tok.kind != "eof":
        hint = ""
        if tok.text == ";":
            hint = " (parenthesize a filtered expression before sequencing it)"
        raise ParseError(f"unexpected {tok.text!r}{hint}", tok.pos)
    return result


class _Parser:
    def __init__(self, ts: TokenStream):
        self.ts = ts

    def or_expr(self) -> Expr:
        node = self.filtered()
        while self.ts.at("OR", "ident"):
            self.ts.next()
            node = Or(node, self.filtered())
        return node

    def filtered(self) -> Expr:
        node = self.seq()
        while self.ts.at("FILTER", "ident"):
            tok = self.ts.next()
            f, names = fm.parse_formula_tokens(self.ts)
            if not names:
                raise ParseError("FILTER formula must reference at least one variable", tok.pos)
            node = Filter(node, FilterSpec(f, tuple(names)))
        return node

    def seq(self) -> Expr:
        node = self.postfix()
        while self.ts.at(";", "punct"):
            self.ts.next()
            node = Seq(node, self.postfix())
        return node

    def postfix(self) -> Expr:
        node = self.primary()
        while self.ts.at("+", "punct"):
            self.ts.next()
            node = Iter(node)
        return node

    def primary(self) -> Expr:
        tok = self.ts.next()
        if tok.kind == "punct" and tok.text == "(":
            node = self.or_expr()
            if self.ts.at("WINDOW", "ident"):
                raise ParseError("WINDOW is only allowed at the top level", self.ts.peek().pos)
            self.ts.expect(")")
            return node
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise ParseError(f"expected relation name or '(', found {tok.text or 'end of input'!r}", tok.pos)
        self.ts.expect("AS")
        var = self.ts.next()
        if var.kind != "ident" or var.text in KEYWORDS:
            raise ParseError(f"expected variable name, found {var.text or 'end of input'!r}", var.pos)
        return As(tok.text, var.text)


# -- printing ---------------------------------------------------------------

_OR, _FILTER, _SEQ, _ITER, _PRIMARY = 1, 2, 3, 4, 5


def to_text(e: Expr | WindowedExpr) -> str:
    if isinstance(e, WindowedExpr):
        return f"{to_text(e.body)} WINDOW {e.w}"
    text, _ = _print(e)
    return text


def _print(e: Expr) -> tuple[str, int]:
    if isinstance(e, As):
        return f"{e.relation} AS {e.var}", _PRIMARY
    if isinstance(e, Iter):
        child, level = _print(e.child)
        if level < _ITER or isinstance(e.child, As):
            child = f"({child})"
        return child + "+", _ITER
    if isinstance(e, Seq):
        return f"{_at(e.left, _SEQ)} ; {_at(e.right, _ITER)}", _SEQ
    if isinstance(e, Filter):
        child, level = _print(e.child)
        if level < _SEQ and not isinstance(e.child, Filter):
            child = f"({child})"
        return f"{child} FILTER {e.spec}", _FILTER
    if isinstance(e, Or):
        return f"{_at(e.left, _OR)} OR {_at(e.right, _FILTER)}", _OR
    raise TypeError(f"not an expression: {e!r}")


def _at(e: Expr, minimum: int) -> str:
    text, level = _print(e)
    return f"({text})" if level < minimum else text


# -- analysis ---------------------------------------------------------------


def subexpressions(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, (Filter, Iter)):
        yield from subexpressions(e.child)
    elif isinstance(e, (Or, Seq)):
        yield from subexpressions(e.left)
        yield from subexpressions(e.right)


def declared(e: Expr) -> set[str]:
    """Variables introduced by an AS somewhere in ``e``."""
    return {s.var for s in subexpressions(e) if isinstance(s, As)}


def variables(e: Expr) -> set[str]:
    """All variables occurring in ``e``, in AS clauses or in filters."""
    out = set()
    for s in subexpressions(e):
        if isinstance(s, As):
            out.add(s.var)
        elif isinstance(s, Filter):
            out.update(s.spec.arg_vars)
    return out


def bound(e: Expr) -> set[str]:
    if isinstance(e, As):
        return {e.var}
    if isinstance(e, Filter):
        return bound(e.child)
    if isinstance(e, Or):
        return bound(e.left) & bound(e.right)
    if isinstance(e, Seq):
        return bound(e.left) | bound(e.right)
    if isinstance(e, Iter):
        return set()
    raise TypeError(f"not an expression: {e!r}")


def check_well_formed(e: Expr) -> list[Diagnostic]:
    """Every filter variable must be introduced by some AS of the expression."""
    known = declared(e)
    diags = []
    for s in subexpressions(e):
        if isinstance(s, Filter):
            for var in s.spec.arg_vars:
                if var not in known:
                    diags.append(Diagnostic("error", to_text(s), f"not well-formed: variable {var} is never declared"))
    return diags


def check_bounded(e: Expr | WindowedExpr) -> list[Diagnostic]:
    """Empty iff ``e`` is well-formed and bounded."""
    if isinstance(e, WindowedExpr):
        e = e.body
    diags = check_well_formed(e)
    for s in subexpressions(e):
        if isinstance(s, Filter):
            have = bound(s.child)
            for var in s.spec.arg_vars:
                if var not in have:
                    where = to_text(s.child)
                    diags.append(Diagnostic("error", to_text(s), f"not bounded: {var} ∉ bound({where})"))
        elif isinstance(s, Seq):
            shared = variables(s.left) & variables(s.right)
            if shared:
                names = ", ".join(sorted(shared))
                diags.append(
                    Diagnostic("error", to_text(s), f"not bounded: both sides of ';' use {names}")
                )
    return diags


def is_bounded(e: Expr | WindowedExpr) -> bool:
    return not check_bounded(e)


def depth(e: Expr) -> int:
    """Length of the longest chain of operator nodes (an AS alone has depth 0)."""
    if isinstance(e, As):
        return 0
    if isinstance(e, (Filter, Iter)):
        return 1 + depth(e.child)
    return 1 + max(depth(e.left), depth(e.right))
