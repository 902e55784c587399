"""Desk-scale demo knowledge base, alias table, and evaluation records.

The table deliberately concentrates birth_state on a single value so that
randomly injected distractor rows tend to agree with each other: a
no-clarification pipeline that trusts a noisy candidate set will copy that
majority value for the records whose gold row holds a rarer one.
"""

from pathlib import Path

FIXTURE_DIR = Path(__file__).parent
MANIFEST_PATH = FIXTURE_DIR / "manifest.json"
PLAYERS_CSV = FIXTURE_DIR / "players.csv"
PLAYERS_JSONL = FIXTURE_DIR / "players.jsonl"
PLAYERS_SCHEMA = FIXTURE_DIR / "players.schema.json"
ALIASES_PATH = FIXTURE_DIR / "aliases.json"
RECORDS_PATH = FIXTURE_DIR / "records.jsonl"

# Records whose gold row disagrees with the table's dominant birth_state;
# these are the ones distractor injection is expected to corrupt.
RIGGED_RECORD_IDS = ("q04", "q05")


def load_bundle():
    from ..evaluation import load_manifest

    return load_manifest(MANIFEST_PATH)


def build_engine(config=None, bundle=None):
    """Engine over the fixture KB with the deterministic stub backend."""
    from ..gateway import LmGateway, StubBackend, StubRules
    from ..orchestrator import Engine

    bundle = bundle or load_bundle()
    backend = StubBackend(StubRules.from_store(bundle.store, bundle.aliases))
    return Engine(
        store=bundle.store,
        gateway=LmGateway(backend),
        aliases=bundle.aliases,
        config=config,
    )
