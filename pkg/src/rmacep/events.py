"""Events, schemas and text-format stream ingestion.

A stream file is UTF-8 text.  The first non-comment line is the schema
(``type:symbol,id:integer,value:real``), every following line is one event
with one comma-separated value per attribute.  Lines starting with ``#``
are ignored.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

from .errors import SchemaError, StreamFormatError

Scalar = Union[str, int, float]


class Kind(enum.Enum):
    SYMBOL = "symbol"
    INTEGER = "integer"
    REAL = "real"


@dataclass(frozen=True)
class Schema:
    attributes: tuple[tuple[str, Kind], ...]

    def __post_init__(self):
        names = [name for name, _ in self.attributes]
        if any(not name for name in names):
            raise SchemaError("attribute names must be non-empty")
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate attribute name(s): {', '.join(dupes)}")
        kinds = dict(self.attributes)
        if "type" not in kinds:
            raise SchemaError("schema must declare a 'type' attribute")
        if kinds["type"] is not Kind.SYMBOL:
            raise SchemaError("the 'type' attribute must be of kind symbol")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.attributes)

    def kind(self, name: str) -> Kind:
        for attr, kind in self.attributes:
            if attr == name:
                return kind
        raise KeyError(name)

    def header(self) -> str:
        return ",".join(f"{name}:{kind.value}" for name, kind in self.attributes)

    def event(self, **values: Scalar) -> "Event":
        """Build an event, checking it against the schema."""
        event = Event(values)
        self.check(event)
        return event

    def check(self, event: "Event") -> None:
        if set(event.keys()) != set(self.names):
            raise StreamFormatError(
                f"event attributes {sorted(event.keys())} do not match schema {list(self.names)}"
            )
        for name, kind in self.attributes:
            value = event[name]
            if kind is Kind.SYMBOL and not isinstance(value, str):
                raise StreamFormatError(f"attribute {name!r} expects a symbol, got {value!r}")
            if kind is Kind.INTEGER and (isinstance(value, bool) or not isinstance(value, int)):
                raise StreamFormatError(f"attribute {name!r} expects an integer, got {value!r}")
            if kind is Kind.REAL and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise StreamFormatError(f"attribute {name!r} expects a real, got {value!r}")


class Event(Mapping[str, Scalar]):
    """An immutable attribute tuple.  Hashable, compared by value."""

    __slots__ = ("_values", "_hash")

    def __init__(self, values: Mapping[str, Scalar]):
        self._values = dict(values)
        self._hash = hash(frozenset(self._values.items()))

    def __getitem__(self, key: str) -> Scalar:
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, Event):
            return self._hash == other._hash and self._values == other._values
        return NotImplemented

    def __repr__(self) -> str:
        body = ",".join(str(v) for v in self._values.values())
        return f"({body})"


@dataclass(frozen=True)
class Stream:
    schema: Schema
    events: tuple[Event, ...] = ()

    def __post_init__(self):
        for event in self.events:
            self.schema.check(event)

    def __len__(self) -> int:
        return len(self.events)

    def __getitem__(self, index):
        return self.events[index]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def prefix(self, n: int) -> "Stream":
        return Stream(self.schema, self.events[:n])

    def dumps(self) -> str:
        lines = [self.schema.header()]
        for event in self.events:
            lines.append(",".join(_format_scalar(event[name]) for name in self.schema.names))
        return "\n".join(lines) + "\n"


def parse_schema(header: str) -> Schema:
    attributes = []
    for entry in header.strip().split(","):
        entry = entry.strip()
        if ":" not in entry:
            raise SchemaError(f"schema entry {entry!r} is not of the form name:kind")
        name, kind_text = (part.strip() for part in entry.split(":", 1))
        try:
            kind = Kind(kind_text)
        except ValueError:
            raise SchemaError(f"unknown attribute kind {kind_text!r}") from None
        attributes.append((name, kind))
    return Schema(tuple(attributes))


def load_stream(source: str | Iterable[str], schema: Schema | None = None) -> Stream:
    """Parse a stream file.

    ``source`` is either the whole text or an iterable of lines.  When
    ``schema`` is given the file has no header line and every non-comment
    line is an event; otherwise the first non-comment line is the header.
    """
    lines = source.splitlines() if isinstance(source, str) else list(source)
    rows = [line.rstrip("\r\n") for line in lines]
    rows = [row for row in rows if row.strip() and not row.lstrip().startswith("#")]
    if schema is None:
        if not rows:
            raise StreamFormatError("missing schema header")
        schema = parse_schema(rows[0])
        rows = rows[1:]
    events = []
    for lineno, row in enumerate(rows):
        cells = [cell.strip() for cell in row.split(",")]
        if len(cells) != len(schema.attributes):
            raise StreamFormatError(
                f"event {lineno}: expected {len(schema.attributes)} values, got {len(cells)}"
            )
        values = {}
        for (name, kind), cell in zip(schema.attributes, cells):
            values[name] = _parse_scalar(cell, kind, lineno, name)
        events.append(Event(values))
    return Stream(schema, tuple(events))


def _parse_scalar(cell: str, kind: Kind, lineno: int, name: str) -> Scalar:
    if kind is Kind.SYMBOL:
        if not cell:
            raise StreamFormatError(f"event {lineno}: empty symbol for {name!r}")
        return cell
    try:
        return int(cell) if kind is Kind.INTEGER else float(cell)
    except ValueError:
        raise StreamFormatError(
            f"event {lineno}: cannot parse {cell!r} as {kind.value} for {name!r}"
        ) from None


def _format_scalar(value: Scalar) -> str:
    return repr(value) if isinstance(value, float) else str(value)
