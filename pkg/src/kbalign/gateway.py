"""Language-model access: prompt templates, remote HTTP backend, offline stub.

The stub backend implements every template's contract as a pure function of
(template id, bindings) so the whole pipeline is deterministic in CI. The
remote backend speaks a minimal JSON completion protocol:
request {"prompt", "max_tokens", "temperature"}, response {"text"}.
"""

from __future__ import annotations

import json
import os
import re
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import requests

from .aliases import AliasMap
from .errors import BackendUnavailable, CompletionEmpty, MissingBinding, RateLimited
from .kb import KbStore
from .text import contains_span, normalize, tokenize

TEMPLATES: dict[str, str] = {
    "sql_gen": (
        "You are a PostgreSQL expert. Given an input question, create a "
        "syntactically correct PostgreSQL query to run, you must use only the "
        "column names you can see in the table information below.\n"
        "\n"
        "Question: {USER_QUESTION}\n"
        "\n"
        "Table information: A table named {TABLE_NAME} with columns of {COLUMNS}."
    ),
    "coref_check": "Is {VALUE_1} referring to {VALUE_2}?",
    "clarify_gen": (
        "Origin question: {USER_QUESTION}\n"
        "\n"
        "The origin question is unclear. Ask a clarifying question to make "
        "user confirm the value of the slot: {SLOT}, which can only take "
        "values in this list: [{VALUES}].\n"
        "\n"
        "Clarifying question:"
    ),
    "answer_gen": (
        "Answer the question using only the evidence below.\n"
        "\n"
        "Question: {QUESTION}\n"
        "\n"
        "Evidence:\n"
        "{EVIDENCE}\n"
        "\n"
        "Alignment notes:\n"
        "{ALIGNMENT_NOTES}\n"
        "\n"
        "Clarification:\n"
        "{CLARIFICATION}\n"
        "\n"
        "Answer:"
    ),
    "direct_qa": (
        "Answer the following question.\n"
        "\n"
        "Question: {QUESTION}\n"
        "\n"
        "Answer:"
    ),
    "clam_clarify": (
        "Origin question: {USER_QUESTION}\n"
        "\n"
        "Ask the user a clarifying question that would help answer the origin "
        "question.\n"
        "\n"
        "Clarifying question:"
    ),
    "oracle_user": (
        "You are answering a clarifying question on behalf of a user. You "
        "know these facts about the answer: {ATTRIBUTION}\n"
        "\n"
        "Clarifying question: {CLARIFYING_QUESTION}\n"
        "\n"
        "The question asks about: {SLOT}\n"
        "\n"
        "Reply:"
    ),
}

NO_EVIDENCE_MARKER = "(no evidence retrieved)"
NONE_MARKER = "(none)"
STUB_ABSTENTION = "There is not enough information to answer."
STUB_CLAM_QUESTION = "Could you share more details about what you are asking?"

_PLACEHOLDER = re.compile(r"\{([A-Z][A-Z0-9_]*)\}")


def render(template_id: str, bindings: dict[str, str]) -> str:
    """Byte-exact placeholder substitution; no other transformation."""
    body = TEMPLATES[template_id]

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise MissingBinding(name)
        return bindings[name]

    return _PLACEHOLDER.sub(substitute, body)


@dataclass
class LmExchange:
    template_id: str
    rendered_prompt: str
    completion: str
    backend: str
    latency_ms: int = 0

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "rendered_prompt": self.rendered_prompt,
            "completion": self.completion,
            "backend": self.backend,
            "latency_ms": self.latency_ms,
        }


def write_transcript(path: str | Path, exchanges: list[LmExchange]) -> None:
    """Export a session transcript as JSONL, one exchange per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for exchange in exchanges:
            fh.write(json.dumps(exchange.to_dict(), ensure_ascii=False) + "\n")


@dataclass
class DecodingParams:
    max_tokens: int = 256
    temperature: float = 0.0


# Configuration ---------------------------------------------------------------


@dataclass
class GatewayConfig:
    backend: str = "stub"
    endpoint: str = ""
    auth_token_env: str = "KBALIGN_LM_TOKEN"
    retries: int = 3
    timeout_ms: int = 10000
    backoff_base_s: float = 0.5
    max_tokens: int = 256
    temperature: float = 0.0


def load_gateway_config(path: str | Path) -> GatewayConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {f for f in GatewayConfig.__dataclass_fields__}
    return GatewayConfig(**{k: v for k, v in raw.items() if k in known})


# Stub backend ----------------------------------------------------------------


@dataclass
class StubRules:
    """Per-fixture knowledge the stub matches question text against."""

    # table -> column -> distinct stored values, in schema/row order
    values: dict[str, dict[str, list[str]]]
    aliases: AliasMap

    @classmethod
    def from_store(cls, store: KbStore, aliases: AliasMap | None = None) -> "StubRules":
        values = {
            name: {
                col.name: store.get(name).distinct_values(col.name)
                for col in store.get(name).columns
            }
            for name in store.names()
        }
        return cls(values=values, aliases=aliases or AliasMap())


class StubBackend:
    """Deterministic completions implementing each template's contract."""

    kind = "stub"

    def __init__(self, rules: StubRules):
        self.rules = rules

    def complete(
        self,
        prompt: str,
        params: DecodingParams,
        template_id: str | None = None,
        bindings: dict[str, str] | None = None,
    ) -> str:
        handler = getattr(self, f"_{template_id}", None)
        if handler is None or bindings is None:
            return STUB_ABSTENTION
        return handler(bindings)

    # Template handlers. Each is a pure function of the bindings.

    def _sql_gen(self, bindings: dict[str, str]) -> str:
        question = bindings["USER_QUESTION"]
        table = bindings["TABLE_NAME"]
        columns = [c.strip() for c in bindings["COLUMNS"].split(",")]
        table_values = self.rules.values.get(table, {})
        predicates: list[tuple[str, str]] = []
        for column in columns:
            phrases: list[str] = []
            for value in table_values.get(column, []):
                phrases.append(value)
                phrases.extend(self.rules.aliases.surfaces_for(value))
            # Longest token span first so "New York Yankees" beats "New York".
            phrases.sort(key=lambda p: (-len(tokenize(p)), p))
            for phrase in phrases:
                if contains_span(question, phrase):
                    predicates.append((column, phrase))
                    break
        if not predicates:
            return f"SELECT * FROM {table}"
        where = " AND ".join(
            f"{col} = '{val.replace(chr(39), chr(39) * 2)}'" for col, val in predicates
        )
        return f"SELECT * FROM {table} WHERE {where}"

    def _coref_check(self, bindings: dict[str, str]) -> str:
        if self.rules.aliases.affirms(bindings["VALUE_1"], bindings["VALUE_2"]):
            return "Yes"
        return "No"

    def _clarify_gen(self, bindings: dict[str, str]) -> str:
        options = [o.strip() for o in bindings["VALUES"].split(",") if o.strip()]
        return f"Which {bindings['SLOT']} do you mean: {' or '.join(options)}?"

    def _clam_clarify(self, bindings: dict[str, str]) -> str:
        return STUB_CLAM_QUESTION

    def _direct_qa(self, bindings: dict[str, str]) -> str:
        return STUB_ABSTENTION

    def _answer_gen(self, bindings: dict[str, str]) -> str:
        groundings = _parse_evidence(bindings.get("EVIDENCE", ""))
        if not groundings:
            return STUB_ABSTENTION
        requested = _requested_column(bindings.get("QUESTION", ""), groundings)
        if requested is None:
            return STUB_ABSTENTION
        values = [g[requested] for g in groundings if requested in g]
        if not values:
            return STUB_ABSTENTION
        counts = Counter(normalize(v) for v in values)
        ranked = counts.most_common()
        # Consensus requires a unique most-common value; a tie is a conflict.
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            return STUB_ABSTENTION
        winner = ranked[0][0]
        representative = next(v for v in values if normalize(v) == winner)
        return f"{representative}."

    def _oracle_user(self, bindings: dict[str, str]) -> str:
        facts = _parse_pairs(bindings.get("ATTRIBUTION", ""))
        slot = bindings.get("SLOT", "")
        if slot in facts:
            return f"It is the one with {slot} {facts[slot]}."
        return "I don't know."


def _parse_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for part in text.split("; "):
        if ": " in part:
            key, value = part.split(": ", 1)
            pairs.setdefault(key.strip(), value.strip())
    return pairs


def _parse_evidence(evidence: str) -> list[dict[str, str]]:
    groundings = []
    for line in evidence.splitlines():
        line = line.strip()
        if not line.startswith("- "):
            continue
        groundings.append(_parse_pairs(line[2:]))
    return groundings


def _requested_column(question: str, groundings: list[dict[str, str]]) -> str | None:
    """The evidence column whose name shares the most tokens with the question."""
    question_tokens = set(tokenize(question))
    columns: list[str] = []
    for grounding in groundings:
        for column in grounding:
            if column not in columns:
                columns.append(column)
    best, best_overlap = None, 0
    for column in columns:
        name_tokens = set(tokenize(column.replace("_", " ")))
        overlap = len(name_tokens & question_tokens)
        if overlap > best_overlap:
            best, best_overlap = column, overlap
    return best


# Remote backend --------------------------------------------------------------


class RemoteBackend:
    """HTTP completion endpoint with bounded exponential-backoff retries."""

    kind = "remote"

    def __init__(self, config: GatewayConfig):
        self.config = config

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(
        self,
        prompt: str,
        params: DecodingParams,
        template_id: str | None = None,
        bindings: dict[str, str] | None = None,
    ) -> str:
        payload = {
            "prompt": prompt,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
        }
        timeout = self.config.timeout_ms / 1000.0
        last_error: Exception | None = None
        retry_after: float | None = None
        rate_limited = False
        for attempt in range(self.config.retries + 1):
            if attempt:
                time.sleep(self.config.backoff_base_s * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    self.config.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code == 429:
                rate_limited = True
                header = response.headers.get("Retry-After")
                retry_after = float(header) if header else None
                continue
            if response.status_code >= 500:
                last_error = BackendUnavailable(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise BackendUnavailable(
                    f"endpoint returned {response.status_code}: {response.text[:200]}"
                )
            text = response.json().get("text", "")
            if not text.strip():
                raise CompletionEmpty("backend returned an empty completion")
            return text
        if rate_limited:
            raise RateLimited(retry_after=retry_after)
        raise BackendUnavailable(f"backend unreachable after retries: {last_error}")


def build_backend(
    config: GatewayConfig,
    store: KbStore | None = None,
    aliases: AliasMap | None = None,
):
    if config.backend == "stub":
        rules = StubRules.from_store(store, aliases) if store else StubRules({}, aliases or AliasMap())
        return StubBackend(rules)
    if config.backend == "remote":
        if not config.endpoint:
            raise BackendUnavailable("remote backend requires an endpoint")
        return RemoteBackend(config)
    raise ValueError(f"unknown backend kind {config.backend!r}")


# Gateway ---------------------------------------------------------------------


class LmGateway:
    """Renders templates, dispatches to the backend, records exchanges."""

    def __init__(self, backend, params: DecodingParams | None = None):
        self.backend = backend
        self.params = params or DecodingParams()

    def run(
        self,
        template_id: str,
        bindings: dict[str, str],
        transcript: list[LmExchange] | None = None,
        params: DecodingParams | None = None,
    ) -> LmExchange:
        rendered = render(template_id, bindings)
        started = time.monotonic()
        completion = self.backend.complete(
            rendered, params or self.params, template_id=template_id, bindings=bindings
        )
        latency = int((time.monotonic() - started) * 1000)
        exchange = LmExchange(
            template_id=template_id,
            rendered_prompt=rendered,
            completion=completion,
            backend=self.backend.kind,
            latency_ms=latency,
        )
        if transcript is not None:
            transcript.append(exchange)
        return exchange
