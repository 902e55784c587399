"""Align-in-the-loop question answering over tabular knowledge bases."""

__version__ = "0.1.0"

from .kb import (  # noqa: F401
    CandidateSet,
    ColumnSpec,
    Grounding,
    KbStore,
    KnowledgeTable,
    Predicate,
    StructuredQuery,
    execute_structured_query,
    ingest_table,
    lexical_retrieve,
    load_schema,
)
from .orchestrator import Engine, EngineConfig, Session  # noqa: F401
