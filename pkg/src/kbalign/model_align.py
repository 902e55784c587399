"""Model-based question/knowledge alignment.

The language model turns the question into SQL against the table schema; the
SQL is parsed with a restricted grammar, extracted values are resolved
against stored values via co-reference probes, and the rebuilt query fetches
groundings. Lexical mode bypasses all of this and retrieves on the raw
question text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .aliases import AliasMap
from .errors import UnparsableSql
from .gateway import LmExchange, LmGateway
from .kb import (
    CandidateSet,
    KnowledgeTable,
    Predicate,
    StructuredQuery,
    execute_structured_query,
    lexical_retrieve,
)
from .text import contains_span, normalize, trigram_similarity

COREF_PROBE_BUDGET = 5
FALLBACK_SIMILARITY_FLOOR = 0.35


@dataclass
class ExtractedSlot:
    column: str
    surface_value: str
    resolved_value: str
    resolution: str  # exact | coreferenced | unresolved
    op: str = "eq"

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "surface_value": self.surface_value,
            "resolved_value": self.resolved_value,
            "resolution": self.resolution,
            "op": self.op,
        }


@dataclass
class CoreferenceLink:
    surface_value: str
    kb_value: str
    verdict: bool
    exchange_index: int = -1

    def to_dict(self) -> dict:
        return {
            "surface_value": self.surface_value,
            "kb_value": self.kb_value,
            "verdict": self.verdict,
            "exchange_index": self.exchange_index,
        }


@dataclass
class AlignmentMetadata:
    mode: str = "structured"
    raw_sql: str | None = None
    parse_path: str | None = None
    slots: list[ExtractedSlot] = field(default_factory=list)
    links: list[CoreferenceLink] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    fallback_lexical: bool = False

    def affirmed_links(self) -> list[CoreferenceLink]:
        return [link for link in self.links if link.verdict]

    def asked_columns(self) -> set[str]:
        return {slot.column for slot in self.slots}

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "raw_sql": self.raw_sql,
            "parse_path": self.parse_path,
            "slots": [s.to_dict() for s in self.slots],
            "links": [l.to_dict() for l in self.links],
            "warnings": list(self.warnings),
            "fallback_lexical": self.fallback_lexical,
        }


# SQL generation --------------------------------------------------------------


def generate_sql(
    question: str,
    table: KnowledgeTable,
    gateway: LmGateway,
    transcript: list[LmExchange] | None = None,
) -> str:
    """Ask the model for a SQL query; the completion is returned verbatim."""
    exchange = gateway.run(
        "sql_gen",
        {
            "USER_QUESTION": question,
            "TABLE_NAME": table.table_name,
            "COLUMNS": ", ".join(table.column_names),
        },
        transcript,
    )
    return exchange.completion


# Restricted SQL grammar ------------------------------------------------------
#
#   SELECT <cols|*> FROM <name> [WHERE <col> (=|LIKE) <literal> [AND ...]*]
#          [ORDER BY ... | LIMIT ... | GROUP BY ...] [;]
#
# Literals are quoted strings (doubled-quote escapes) or bare numbers/words.
# LIKE maps to a `contains` predicate with %-wildcards stripped. Unknown
# columns are dropped with a warning rather than failing the parse.

_TOKEN = re.compile(
    r"""
      '(?:[^']|'')*'
    | "(?:[^"]|"")*"
    | [A-Za-z_][\w.]*
    | -?\d+(?:\.\d+)?
    | <>|!=|<=|>=|[=<>*,;()%.]
    """,
    re.VERBOSE,
)

_FENCE = re.compile(r"```(?:sql)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)

_TAIL_KEYWORDS = {"ORDER", "LIMIT", "GROUP"}


def _tokenize_sql(text: str) -> list[str] | None:
    tokens: list[str] = []
    pos = 0
    for match in _TOKEN.finditer(text):
        if text[pos : match.start()].strip():
            return None  # unexpected characters between tokens
        tokens.append(match.group(0))
        pos = match.end()
    if text[pos:].strip():
        return None
    return tokens


def _unquote(token: str) -> str:
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        inner = token[1:-1]
        return inner.replace(token[0] * 2, token[0])
    return token


def _is_word(token: str) -> bool:
    return bool(re.fullmatch(r"[A-Za-z_][\w.]*|-?\d+(?:\.\d+)?", token))


class _Grammar:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> str | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> str | None:
        token = self.peek()
        if token is not None:
            self.i += 1
        return token

    def parse(self) -> tuple[str, list[tuple[str, str, str]]]:
        if (self.next() or "").upper() != "SELECT":
            raise UnparsableSql("expected SELECT")
        # Skip the select list; downstream only uses WHERE values.
        while True:
            token = self.peek()
            if token is None:
                raise UnparsableSql("expected FROM")
            if token.upper() == "FROM":
                self.next()
                break
            self.next()
        table = self.next()
        if table is None or not _is_word(table):
            raise UnparsableSql("expected table name after FROM")
        conditions: list[tuple[str, str, str]] = []
        token = self.peek()
        if token is not None and token.upper() == "WHERE":
            self.next()
            conditions = self._conditions()
        self._tail()
        return table, conditions

    def _conditions(self) -> list[tuple[str, str, str]]:
        conditions = []
        while True:
            column = self.next()
            if column is None or not _is_word(column):
                raise UnparsableSql("expected column name in WHERE")
            op = self.next()
            if op is None or (op != "=" and op.upper() != "LIKE"):
                raise UnparsableSql(f"unsupported operator {op!r}")
            value = self.next()
            if value is None:
                raise UnparsableSql("expected literal value")
            if not (value[0] in "'\"" or _is_word(value)):
                raise UnparsableSql(f"bad literal {value!r}")
            conditions.append((column, "LIKE" if op.upper() == "LIKE" else "=", _unquote(value)))
            token = self.peek()
            if token is None or token == ";":
                break
            if token.upper() == "AND":
                self.next()
                continue
            if token.upper() in _TAIL_KEYWORDS:
                break
            raise UnparsableSql(f"unexpected token {token!r} after condition")
        return conditions

    def _tail(self) -> None:
        token = self.peek()
        if token is None or token == ";":
            return
        if token.upper() in _TAIL_KEYWORDS:
            return  # trailing ORDER BY / LIMIT / GROUP BY is ignored
        raise UnparsableSql(f"unexpected trailing token {token!r}")


def _strip_fences(raw: str) -> str:
    match = _FENCE.search(raw)
    return match.group(1) if match else raw


def _match_column(name: str, table: KnowledgeTable) -> str | None:
    wanted = normalize(name)
    for column in table.columns:
        if normalize(column.name) == wanted:
            return column.name
    return None


def parse_sql(
    raw: str,
    table: KnowledgeTable,
    aliases: AliasMap | None = None,
    strict: bool = False,
) -> StructuredQuery:
    """Parse a model completion into a structured query.

    Grammar failures fall back to extracting quoted literals and
    alias-matched spans from the raw text, assigning each to the column
    whose stored values contain it (directly, via an alias pair, or by
    best trigram similarity). With strict=True the fallback is skipped and
    UnparsableSql is raised instead.
    """
    text = _strip_fences(raw).strip()
    warnings: list[str] = []
    tokens = _tokenize_sql(text)
    if tokens is not None:
        try:
            name, conditions = _Grammar(tokens).parse()
        except UnparsableSql:
            if strict:
                raise
            return _fallback_query(raw, table, aliases, warnings)
        if normalize(name) != normalize(table.table_name):
            warnings.append(f"query table {name!r} replaced by {table.table_name!r}")
        predicates = []
        for column, op, value in conditions:
            resolved = _match_column(column, table)
            if resolved is None:
                warnings.append(f"unknown column {column!r} dropped")
                continue
            if op == "LIKE":
                predicates.append(Predicate(resolved, "contains", value.replace("%", "")))
            else:
                predicates.append(Predicate(resolved, "eq", value))
        return StructuredQuery(
            table=table.table_name,
            predicates=predicates,
            warnings=warnings,
            parse_path="grammar",
        )
    if strict:
        raise UnparsableSql("completion is not tokenizable SQL")
    return _fallback_query(raw, table, aliases, warnings)


def _fallback_query(
    raw: str,
    table: KnowledgeTable,
    aliases: AliasMap | None,
    warnings: list[str],
) -> StructuredQuery:
    aliases = aliases or AliasMap()
    literals: list[str] = []
    seen: set[str] = set()

    def add(candidate: str) -> None:
        key = normalize(candidate)
        if key and key not in seen:
            seen.add(key)
            literals.append(candidate)

    for match in re.finditer(r"'((?:[^']|'')*)'|\"((?:[^\"]|\"\")*)\"", raw):
        add((match.group(1) or match.group(2) or "").replace("''", "'"))
    for column in table.columns:
        for value in table.distinct_values(column.name):
            for phrase in [value, *aliases.surfaces_for(value)]:
                if contains_span(raw, phrase):
                    add(phrase)

    predicates: list[Predicate] = []
    for literal in literals:
        assigned = _assign_literal(literal, table, aliases)
        if assigned is None:
            warnings.append(f"literal {literal!r} matched no column; dropped")
        else:
            predicates.append(Predicate(assigned, "eq", literal))
    path = "fallback" if predicates else "empty_fallback"
    if path == "empty_fallback":
        warnings.append("no values extracted; degrading to lexical retrieval")
    return StructuredQuery(
        table=table.table_name, predicates=predicates, warnings=warnings, parse_path=path
    )


def _assign_literal(literal: str, table: KnowledgeTable, aliases: AliasMap) -> str | None:
    target = normalize(literal)
    for column in table.columns:
        if any(normalize(v) == target for v in table.distinct_values(column.name)):
            return column.name
    for column in table.columns:
        if any(aliases.affirms(literal, v) for v in table.distinct_values(column.name)):
            return column.name
    best, best_sim = None, FALLBACK_SIMILARITY_FLOOR
    for column in table.columns:
        for value in table.distinct_values(column.name):
            sim = trigram_similarity(literal, value)
            if sim > best_sim:
                best, best_sim = column.name, sim
    return best


# Co-reference resolution -----------------------------------------------------


def resolve_coreferences(
    slots: list[ExtractedSlot],
    table: KnowledgeTable,
    gateway: LmGateway,
    transcript: list[LmExchange] | None = None,
    probe_budget: int = COREF_PROBE_BUDGET,
) -> tuple[list[ExtractedSlot], list[CoreferenceLink]]:
    """Resolve each slot's surface value against the column's stored values.

    Values already stored (case-insensitively) are marked exact with no
    model call. Otherwise the top `probe_budget` stored values by trigram
    similarity are probed in order; the first affirmative wins. Slots with
    no affirmed reference stay unresolved and are later demoted to a
    `contains` predicate on the surface value.
    """
    links: list[CoreferenceLink] = []
    resolved_slots: list[ExtractedSlot] = []
    for slot in slots:
        distinct = table.distinct_values(slot.column)
        by_norm = {normalize(v): v for v in distinct}
        key = normalize(slot.surface_value)
        if key in by_norm:
            resolved_slots.append(
                ExtractedSlot(slot.column, slot.surface_value, by_norm[key], "exact", slot.op)
            )
            continue
        ranked = sorted(
            range(len(distinct)),
            key=lambda i: (-trigram_similarity(slot.surface_value, distinct[i]), i),
        )[:probe_budget]
        outcome: ExtractedSlot | None = None
        for i in ranked:
            candidate = distinct[i]
            exchange = gateway.run(
                "coref_check",
                {"VALUE_1": slot.surface_value, "VALUE_2": candidate},
                transcript,
            )
            verdict = exchange.completion.lstrip().startswith(("Yes", "yes"))
            index = len(transcript) - 1 if transcript is not None else -1
            links.append(CoreferenceLink(slot.surface_value, candidate, verdict, index))
            if verdict:
                outcome = ExtractedSlot(
                    slot.column, slot.surface_value, candidate, "coreferenced", slot.op
                )
                break
        if outcome is None:
            outcome = ExtractedSlot(
                slot.column, slot.surface_value, slot.surface_value, "unresolved", slot.op
            )
        resolved_slots.append(outcome)
    return resolved_slots, links


def _rebuild_query(query: StructuredQuery, slots: list[ExtractedSlot]) -> StructuredQuery:
    predicates = []
    for slot in slots:
        if slot.resolution == "unresolved":
            predicates.append(Predicate(slot.column, "contains", slot.surface_value))
        else:
            predicates.append(Predicate(slot.column, "eq", slot.resolved_value))
    return StructuredQuery(
        table=query.table,
        predicates=predicates,
        warnings=query.warnings,
        parse_path=query.parse_path,
    )


# Full alignment --------------------------------------------------------------


def align_and_retrieve(
    question: str,
    table: KnowledgeTable,
    mode: str,
    k: int,
    gateway: LmGateway,
    transcript: list[LmExchange] | None = None,
    aliases: AliasMap | None = None,
) -> tuple[CandidateSet, AlignmentMetadata]:
    """Run the mode's retrieval path and report alignment metadata.

    Structured mode: SQL generation, parsing, co-reference resolution, then
    an exact query. Lexical mode: top-k retrieval on the raw question. An
    empty candidate set is a recorded outcome, not an error.
    """
    if mode == "lexical":
        candidates = lexical_retrieve(table, question, k)
        return candidates, AlignmentMetadata(mode="lexical")
    if mode != "structured":
        raise ValueError(f"unknown retrieval mode {mode!r}")

    raw = generate_sql(question, table, gateway, transcript)
    parsed = parse_sql(raw, table, aliases)
    slots = [
        ExtractedSlot(p.column, p.value, p.value, "unresolved", p.op)
        for p in parsed.predicates
    ]
    slots, links = resolve_coreferences(slots, table, gateway, transcript)
    metadata = AlignmentMetadata(
        mode="structured",
        raw_sql=raw,
        parse_path=parsed.parse_path,
        slots=slots,
        links=links,
        warnings=list(parsed.warnings),
    )
    if parsed.parse_path == "empty_fallback":
        metadata.fallback_lexical = True
        candidates = lexical_retrieve(table, question, k)
        return candidates, metadata
    query = _rebuild_query(parsed, slots)
    candidates = execute_structured_query(table, query, k)
    return candidates, metadata
