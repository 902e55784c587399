"""Dataset handling, user simulators, coverage/hallucination metrics, and
controlled grounding-noise experiments.

Coverage is a binary per-record check that every gold answer value appears
in the generated answer. Hallucination flags answer values absent from both
the question and the gold row; abstentions are excluded from its average.
Value extraction is vocabulary-based: the table's distinct values plus the
gold answers, matched as token spans, longest match first.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .aliases import AliasMap, load_aliases
from .answer import AnswerResult
from .errors import DatasetParseError, InsufficientRows, MissingGoldRow
from .gateway import LmExchange, LmGateway
from .human_align import ClarifyingTurn
from .kb import CandidateSet, KbStore, ingest_table, load_schema, render_grounding
from .text import contains_span, normalize, tokenize

ALIGNMENT_BUCKETS = (
    ("[0,0.33)", 0.0, 0.33),
    ("[0.33,0.66)", 0.33, 0.66),
    ("[0.66,1]", 0.66, 1.0),
)


@dataclass
class EvalRecord:
    record_id: str
    question: str
    table_ref: str
    gold_row_index: int
    gold_answer_values: list[str]
    question_type: str = "simple"
    attribution_info: dict[str, str] = field(default_factory=dict)

    @property
    def gold_row(self) -> tuple[str, int]:
        return (self.table_ref, self.gold_row_index)


@dataclass
class MetricScores:
    coverage: float  # percentage over all records
    hallucination: float  # percentage over non-abstained records
    abstention_count: int
    n: int

    @classmethod
    def from_pairs(cls, pairs: list[tuple[int, int | None]]) -> "MetricScores":
        n = len(pairs)
        coverage = 100.0 * sum(c for c, _ in pairs) / n if n else 0.0
        counted = [h for _, h in pairs if h is not None]
        hallucination = 100.0 * sum(counted) / len(counted) if counted else 0.0
        return cls(
            coverage=coverage,
            hallucination=hallucination,
            abstention_count=n - len(counted),
            n=n,
        )


# Dataset loading -------------------------------------------------------------


def load_records(path: str | Path) -> list[EvalRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(f"invalid JSON: {exc.msg}", index) from None
            try:
                record = EvalRecord(
                    record_id=raw["record_id"],
                    question=raw["question"],
                    table_ref=raw["table_ref"],
                    gold_row_index=int(raw["gold_row_index"]),
                    gold_answer_values=[str(v) for v in raw["gold_answer_values"]],
                    question_type=raw.get("question_type", "simple"),
                    attribution_info={
                        str(k): str(v) for k, v in raw.get("attribution_info", {}).items()
                    },
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetParseError(str(exc), index) from None
            if not record.gold_answer_values:
                raise DatasetParseError("gold_answer_values is empty", index)
            records.append(record)
    return records


@dataclass
class DatasetBundle:
    store: KbStore
    aliases: AliasMap
    records: list[EvalRecord]


def load_manifest(path: str | Path) -> DatasetBundle:
    """Load a dataset manifest: KB tables, alias pairs, and eval records."""
    base = Path(path).parent
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    store = KbStore()
    for entry in manifest["tables"]:
        schema = load_schema(base / entry["schema"])
        store.add(ingest_table(base / entry["data"], entry["format"], schema))
    aliases = AliasMap()
    if manifest.get("aliases"):
        aliases = load_aliases(base / manifest["aliases"])
    records = load_records(base / manifest["records"])
    for index, record in enumerate(records, start=1):
        if record.table_ref not in store:
            raise DatasetParseError(f"unknown table {record.table_ref!r}", index)
        table = store.get(record.table_ref)
        if not 0 <= record.gold_row_index < len(table.rows):
            raise DatasetParseError(
                f"gold row {record.gold_row_index} outside table", index
            )
    return DatasetBundle(store=store, aliases=aliases, records=records)


# Value extraction and scoring ------------------------------------------------


def extract_values(text: str, vocabulary: set[str]) -> set[str]:
    """Vocabulary entries appearing as contiguous token spans in the text.

    Longest match wins at each position and matched spans do not overlap.
    """
    tokens = tokenize(text)
    sequences = sorted(
        ((tuple(tokenize(entry)), entry) for entry in vocabulary if tokenize(entry)),
        key=lambda pair: (-len(pair[0]), pair[0]),
    )
    found: set[str] = set()
    i = 0
    while i < len(tokens):
        step = 1
        for seq, entry in sequences:
            width = len(seq)
            if i + width <= len(tokens) and tuple(tokens[i : i + width]) == seq:
                found.add(entry)
                step = width
                break
        i += step
    return found


def table_vocabulary(table) -> set[str]:
    vocab: set[str] = set()
    for column in table.columns:
        for value in table.distinct_values(column.name):
            normalized = normalize(value)
            if normalized:
                vocab.add(normalized)
    return vocab


def gold_row_values(table, row_index: int) -> set[str]:
    return {
        normalize(value)
        for value in table.rows[row_index]
        if value is not None and normalize(value)
    }


def score_record(
    record: EvalRecord, answer: AnswerResult, store: KbStore
) -> tuple[int, int | None]:
    """Per-record (coverage, hallucination); hallucination is None when the
    answer abstained."""
    table = store.get(record.table_ref)
    if not 0 <= record.gold_row_index < len(table.rows):
        raise MissingGoldRow(
            f"record {record.record_id}: row {record.gold_row_index} not in table"
        )
    gold_values = {normalize(v) for v in record.gold_answer_values}
    vocabulary = table_vocabulary(table) | gold_values
    if answer.abstained:
        return 0, None
    answer_values = extract_values(answer.answer_text, vocabulary)
    coverage = int(gold_values <= answer_values)
    question_values = extract_values(record.question, vocabulary)
    grounding_values = gold_row_values(table, record.gold_row_index)
    hallucination = int(bool(answer_values - (question_values | grounding_values)))
    return coverage, hallucination


def alignment_degree(record: EvalRecord, store: KbStore, aliases: AliasMap) -> float:
    """Fraction of the gold row's attributes recoverable from the question.

    A slot counts as filled when its stored value, or a listed alias of it,
    occurs as a token span in the question.
    """
    table = store.get(record.table_ref)
    row = table.rows[record.gold_row_index]
    slots = [value for value in row if value is not None]
    if not slots:
        return 0.0
    filled = 0
    for value in slots:
        spellings = [value, *aliases.surfaces_for(value)]
        if any(contains_span(record.question, s) for s in spellings):
            filled += 1
    return filled / len(slots)


def alignment_bucket(degree: float) -> str:
    for label, low, high in ALIGNMENT_BUCKETS:
        if low <= degree < high:
            return label
    return ALIGNMENT_BUCKETS[-1][0]  # degree == 1.0


# Controlled groundings -------------------------------------------------------


def inject_irrelevant_groundings(
    candidates: CandidateSet,
    gold_row: tuple[str, int],
    count: int,
    store: KbStore,
    seed: int | str,
) -> CandidateSet:
    """The gold grounding plus `count` seeded samples of other rows.

    The combined order is shuffled by the same generator, so equal seeds
    give identical sets.
    """
    table_name, gold_index = gold_row
    table = store.get(table_name)
    others = [i for i in range(len(table.rows)) if i != gold_index]
    if count > len(others):
        raise InsufficientRows(
            f"requested {count} distractors but only {len(others)} rows available"
        )
    rng = random.Random(seed)
    indices = [gold_index] + rng.sample(others, count)
    rng.shuffle(indices)
    groundings = [render_grounding(table, i) for i in indices]
    return CandidateSet(
        groundings=groundings,
        retrieval_mode=candidates.retrieval_mode if candidates.groundings else "structured",
        query_echo=f"injected:{count}",
    )


# User simulators -------------------------------------------------------------


def simulate_user(
    turn: ClarifyingTurn,
    record: EvalRecord,
    simulator: str,
    store: KbStore | None = None,
    gateway: LmGateway | None = None,
    transcript: list[LmExchange] | None = None,
) -> str:
    """Answer a clarifying question on the user's behalf.

    The deterministic simulator replies with the gold row's value of the
    asked slot ("I don't know" when the slot is absent); open-ended turns
    get the record's attribution facts. The oracle simulator prompts the
    model with the same attribution information.
    """
    if simulator == "deterministic":
        if not turn.options:
            if record.attribution_info:
                facts = ", ".join(f"{k} {v}" for k, v in record.attribution_info.items())
                return f"I mean the one with {facts}."
            return "I don't know"
        if store is None:
            raise ValueError("deterministic simulator needs the knowledge store")
        table = store.get(record.table_ref)
        if turn.slot not in table.column_names:
            return "I don't know"
        value = table.cell(record.gold_row_index, turn.slot)
        if value is None:
            return "I don't know"
        return value
    if simulator == "oracle_lm":
        if gateway is None:
            raise ValueError("oracle_lm simulator needs a gateway")
        attribution = "; ".join(f"{k}: {v}" for k, v in record.attribution_info.items())
        exchange = gateway.run(
            "oracle_user",
            {
                "ATTRIBUTION": attribution,
                "CLARIFYING_QUESTION": turn.question_text,
                "SLOT": turn.slot,
            },
            transcript,
        )
        return exchange.completion.strip()
    raise ValueError(f"unknown simulator {simulator!r}")


# Experiment runner -----------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def run_experiment(
    engine,
    records: list[EvalRecord],
    modes: list[str],
    grounding_counts: list[int],
    seed: int,
    out_dir: str | Path,
    simulator: str = "deterministic",
    emit_buckets: bool = True,
) -> dict[str, Path]:
    """Cross modes with distractor counts over the dataset.

    Each record's candidate set is pinned to its gold grounding plus the
    seeded distractor sample before clarification and answering. Emits
    per-record JSONL, an aggregate CSV, and alignment-degree-bucketed
    aggregates. Identical seeds give byte-identical outputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: r.record_id)
    rows: list[dict] = []
    for mode in modes:
        for count in grounding_counts:
            for record in ordered:
                injected = inject_irrelevant_groundings(
                    CandidateSet([], retrieval_mode="structured"),
                    record.gold_row,
                    count,
                    engine.store,
                    seed=f"{seed}:{record.record_id}:{count}",
                )
                session = engine.run_record(
                    record,
                    mode,
                    simulator=simulator,
                    grounding_override=injected,
                )
                if session.result is not None:
                    coverage, hallucination = score_record(
                        record, session.result, engine.store
                    )
                    answer_text = session.result.answer_text
                    abstained = session.result.abstained
                else:
                    coverage, hallucination = 0, None
                    answer_text = ""
                    abstained = False
                rows.append(
                    {
                        "mode": mode,
                        "irrelevant_count": count,
                        "record_id": record.record_id,
                        "state": session.state,
                        "answer_text": answer_text,
                        "abstained": abstained,
                        "coverage": coverage,
                        "hallucination": hallucination,
                        "alignment_degree": round(
                            alignment_degree(record, engine.store, engine.aliases), 4
                        ),
                        "sources": [list(s) for s in session.candidates.sources()],
                    }
                )

    results_path = out / "results.jsonl"
    with open(results_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")

    aggregate_path = out / "aggregate.csv"
    with open(aggregate_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["mode", "irrelevant_count", "coverage", "hallucination", "abstentions", "n"]
        )
        for mode in modes:
            for count in grounding_counts:
                cell = [
                    (r["coverage"], r["hallucination"])
                    for r in rows
                    if r["mode"] == mode and r["irrelevant_count"] == count
                ]
                scores = MetricScores.from_pairs(cell)
                writer.writerow(
                    [
                        mode,
                        count,
                        _fmt(scores.coverage),
                        _fmt(scores.hallucination),
                        scores.abstention_count,
                        scores.n,
                    ]
                )

    paths = {"results": results_path, "aggregate": aggregate_path}
    if not emit_buckets:
        return paths

    buckets_path = out / "alignment_buckets.csv"
    with open(buckets_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "mode",
                "irrelevant_count",
                "bucket",
                "coverage",
                "hallucination",
                "abstentions",
                "n",
            ]
        )
        for mode in modes:
            for count in grounding_counts:
                for label, _, _ in ALIGNMENT_BUCKETS:
                    cell = [
                        (r["coverage"], r["hallucination"])
                        for r in rows
                        if r["mode"] == mode
                        and r["irrelevant_count"] == count
                        and alignment_bucket(r["alignment_degree"]) == label
                    ]
                    if not cell:
                        continue
                    scores = MetricScores.from_pairs(cell)
                    writer.writerow(
                        [
                            mode,
                            count,
                            label,
                            _fmt(scores.coverage),
                            _fmt(scores.hallucination),
                            scores.abstention_count,
                            scores.n,
                        ]
                    )

    paths["buckets"] = buckets_path
    return paths


def run_overall(
    engine,
    records: list[EvalRecord],
    modes: list[str],
    out_path: str | Path,
    simulator: str = "deterministic",
) -> Path:
    """Mode-by-mode run with each mode's own retrieval (no injection).

    Emits one CSV row per mode: mode,coverage,hallucination,abstentions,n.
    """
    ordered = sorted(records, key=lambda r: r.record_id)
    out_path = Path(out_path)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "coverage", "hallucination", "abstentions", "n"])
        for mode in modes:
            pairs = []
            for record in ordered:
                session = engine.run_record(record, mode, simulator=simulator)
                if session.result is None:
                    pairs.append((0, None))
                else:
                    pairs.append(score_record(record, session.result, engine.store))
            scores = MetricScores.from_pairs(pairs)
            writer.writerow(
                [
                    mode,
                    _fmt(scores.coverage),
                    _fmt(scores.hallucination),
                    scores.abstention_count,
                    scores.n,
                ]
            )
    return out_path
