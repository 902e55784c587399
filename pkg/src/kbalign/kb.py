"""Tabular knowledge store: ingestion, structured queries, lexical retrieval.

Tables are immutable after ingestion and safe for concurrent reads. Cell
values are kept as the strings found in the source file (validated against
the column's value kind); comparisons parse on demand so that e.g. "72.50"
and "72.5" are equal for a decimal column while grounding texts still show
the file's spelling verbatim.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .errors import (
    EmptyTable,
    KbAlignError,
    ParseError,
    PredicateTypeError,
    SchemaMismatch,
    UnknownColumn,
)
from .text import normalize, tokenize

VALUE_KINDS = ("text", "integer", "decimal", "date")

# Cells holding these markers (or nothing at all) are stored as None.
NULL_MARKERS = {""}


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    value_kind: str = "text"
    is_identifier_like: bool = False

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise SchemaMismatch("column name must be non-empty")
        if self.value_kind not in VALUE_KINDS:
            raise SchemaMismatch(
                f"column {self.name!r}: unknown value kind {self.value_kind!r}"
            )


@dataclass
class KnowledgeTable:
    table_name: str
    columns: list[ColumnSpec]
    rows: list[list[str | None]] = field(default_factory=list)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate column names in {self.table_name!r}")
        self._index = {c.name: i for i, c in enumerate(self.columns)}

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnSpec:
        try:
            return self.columns[self._index[name]]
        except KeyError:
            raise UnknownColumn(f"{self.table_name!r} has no column {name!r}") from None

    def column_index(self, name: str) -> int:
        self.column(name)
        return self._index[name]

    def cell(self, row_index: int, column: str) -> str | None:
        return self.rows[row_index][self.column_index(column)]

    def distinct_values(self, column: str) -> list[str]:
        """Non-null values of a column, deduplicated under normalization.

        The first stored spelling of each value is kept, in row order.
        """
        idx = self.column_index(column)
        seen: dict[str, str] = {}
        for row in self.rows:
            value = row[idx]
            if value is None:
                continue
            key = normalize(value)
            if key and key not in seen:
                seen[key] = value
        return list(seen.values())


@dataclass(frozen=True)
class Grounding:
    """One row rendered as text evidence for the generator."""

    source: tuple[str, int]
    text: str
    relevance_score: float = 0.0


@dataclass
class CandidateSet:
    """Retrieved groundings, deduplicated by source and capped at k."""

    groundings: list[Grounding]
    retrieval_mode: str  # structured | lexical | none
    query_echo: str = ""

    def __len__(self) -> int:
        return len(self.groundings)

    def sources(self) -> list[tuple[str, int]]:
        return [g.source for g in self.groundings]


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str  # eq | contains
    value: str


@dataclass
class StructuredQuery:
    table: str
    predicates: list[Predicate] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    # grammar: strict parse; fallback: literal extraction; empty_fallback:
    # nothing could be extracted and retrieval should degrade to lexical.
    parse_path: str = "grammar"


def render_grounding(table: KnowledgeTable, row_index: int, score: float = 0.0) -> Grounding:
    """Flatten a row to "col: value; col: value" text, omitting null cells."""
    parts = []
    for col, value in zip(table.columns, table.rows[row_index]):
        if value is None:
            continue
        parts.append(f"{col.name}: {value}")
    return Grounding(
        source=(table.table_name, row_index), text="; ".join(parts), relevance_score=score
    )


# Ingestion ------------------------------------------------------------------


def load_schema(path: str | Path) -> KnowledgeTable:
    """Read a sidecar schema file into an empty KnowledgeTable shell."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    columns = [
        ColumnSpec(
            name=col["name"],
            value_kind=col.get("value_kind", "text"),
            is_identifier_like=bool(col.get("is_identifier_like", False)),
        )
        for col in raw["columns"]
    ]
    return KnowledgeTable(table_name=raw["table_name"], columns=columns)


def _check_cell(value: str, column: ColumnSpec, line: int) -> str | None:
    if value in NULL_MARKERS:
        return None
    kind = column.value_kind
    try:
        if kind == "integer":
            int(value)
        elif kind == "decimal":
            float(value)
        elif kind == "date":
            date.fromisoformat(value)
    except ValueError:
        raise ParseError(
            f"column {column.name!r}: {value!r} is not a valid {kind}", line
        ) from None
    return value


def ingest_table(path: str | Path, format: str, schema: KnowledgeTable) -> KnowledgeTable:
    """Load a CSV or JSONL file into a validated table, preserving row order."""
    if format not in ("csv", "jsonl"):
        raise ValueError(f"unsupported format {format!r}")
    table = KnowledgeTable(table_name=schema.table_name, columns=list(schema.columns))
    loader = _ingest_csv if format == "csv" else _ingest_jsonl
    loader(Path(path), table)
    return table


def _ingest_csv(path: Path, table: KnowledgeTable) -> None:
    expected = set(table.column_names)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file has no header row", 1) from None
        if set(header) != expected or len(header) != len(table.columns):
            raise SchemaMismatch(
                f"header {header} does not match schema columns {table.column_names}"
            )
        order = [header.index(name) for name in table.column_names]
        for line, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise ParseError(
                    f"expected {len(header)} cells, found {len(cells)}", line
                )
            row = [
                _check_cell(cells[pos], table.columns[i], line)
                for i, pos in enumerate(order)
            ]
            table.rows.append(row)


def _ingest_jsonl(path: Path, table: KnowledgeTable) -> None:
    expected = set(table.column_names)
    with open(path, encoding="utf-8") as fh:
        for line, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line) from None
            if not isinstance(obj, dict):
                raise ParseError("row is not a JSON object", line)
            if set(obj) != expected:
                raise SchemaMismatch(
                    f"line {line}: keys {sorted(obj)} do not match schema columns "
                    f"{sorted(expected)}"
                )
            row = []
            for col in table.columns:
                value = obj[col.name]
                if value is None:
                    row.append(None)
                else:
                    row.append(_check_cell(str(value), col, line))
            table.rows.append(row)


# Structured retrieval -------------------------------------------------------


def _typed_eq(cell: str, value: str, kind: str) -> bool:
    if kind == "integer":
        try:
            return int(cell) == int(value)
        except ValueError:
            raise PredicateTypeError(f"{value!r} is not an integer") from None
    if kind == "decimal":
        try:
            return float(cell) == float(value)
        except ValueError:
            raise PredicateTypeError(f"{value!r} is not a decimal") from None
    if kind == "date":
        try:
            return date.fromisoformat(cell) == date.fromisoformat(value)
        except ValueError:
            raise PredicateTypeError(f"{value!r} is not an ISO date") from None
    return normalize(cell) == normalize(value)


def row_matches(table: KnowledgeTable, row_index: int, query: StructuredQuery) -> bool:
    """True if the row satisfies every predicate; null cells never match."""
    for pred in query.predicates:
        column = table.column(pred.column)
        cell = table.cell(row_index, pred.column)
        if cell is None:
            return False
        if pred.op == "contains":
            if normalize(pred.value) not in normalize(cell):
                return False
        elif pred.op == "eq":
            if not _typed_eq(cell, pred.value, column.value_kind):
                return False
        else:
            raise ValueError(f"unknown predicate op {pred.op!r}")
    return True


def execute_structured_query(
    table: KnowledgeTable, query: StructuredQuery, k: int | None = None
) -> CandidateSet:
    """All rows satisfying the conjunction of predicates, in row order.

    An empty predicate list matches every row. The result is capped at k
    when given.
    """
    for pred in query.predicates:
        table.column(pred.column)  # raises UnknownColumn
    matches = [i for i in range(len(table.rows)) if row_matches(table, i, query)]
    if k is not None:
        matches = matches[:k]
    groundings = [render_grounding(table, i) for i in matches]
    echo = " AND ".join(f"{p.column} {p.op} {p.value!r}" for p in query.predicates)
    return CandidateSet(
        groundings=groundings,
        retrieval_mode="structured",
        query_echo=echo or "(all rows)",
    )


# Lexical retrieval ----------------------------------------------------------


def _row_tokens(table: KnowledgeTable, row_index: int) -> list[str]:
    tokens: list[str] = []
    for value in table.rows[row_index]:
        if value is not None:
            tokens.extend(tokenize(value))
    return tokens


def lexical_scores(table: KnowledgeTable, query_text: str) -> list[float]:
    """TF-IDF token overlap between the query and each row's cell values.

    score(row) = sum over distinct query tokens t of tf(t, row) * idf(t)
    where tf is the token's count in the row divided by the row's token
    count, and idf(t) = ln((1 + N) / (1 + df(t))) + 1 over the N rows.
    """
    n_rows = len(table.rows)
    all_tokens = [_row_tokens(table, i) for i in range(n_rows)]
    query_tokens = set(tokenize(query_text))
    df = {t: sum(1 for toks in all_tokens if t in toks) for t in query_tokens}
    scores = []
    for toks in all_tokens:
        score = 0.0
        if toks:
            for token in query_tokens:
                tf = toks.count(token) / len(toks)
                if tf:
                    score += tf * (math.log((1 + n_rows) / (1 + df[token])) + 1.0)
        scores.append(score)
    return scores


def lexical_retrieve(table: KnowledgeTable, query_text: str, k: int) -> CandidateSet:
    """Top-k rows by lexical score; ties break toward lower row index.

    Rows sharing no token with the query score 0 but still fill the result
    up to min(k, row count), in row order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not table.rows:
        raise EmptyTable(f"table {table.table_name!r} has no rows")
    scores = lexical_scores(table, query_text)
    order = sorted(range(len(table.rows)), key=lambda i: (-scores[i], i))[:k]
    groundings = [render_grounding(table, i, score=scores[i]) for i in order]
    return CandidateSet(groundings=groundings, retrieval_mode="lexical", query_echo=query_text)


# Multi-table holder ---------------------------------------------------------


class KbStore:
    """Named tables loaded at startup; read-only afterwards."""

    def __init__(self, tables: list[KnowledgeTable] | None = None):
        self._tables: dict[str, KnowledgeTable] = {}
        for table in tables or []:
            self.add(table)

    def add(self, table: KnowledgeTable) -> None:
        if table.table_name in self._tables:
            raise SchemaMismatch(f"duplicate table {table.table_name!r}")
        self._tables[table.table_name] = table

    def get(self, name: str) -> KnowledgeTable:
        try:
            return self._tables[name]
        except KeyError:
            raise KbAlignError(f"no table named {name!r}") from None

    def names(self) -> list[str]:
        return list(self._tables)

    def __contains__(self, name: str) -> bool:
        return name in self._tables
