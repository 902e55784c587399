from __future__ import annotations

import random

import pytest

from kbalign import fixtures
from kbalign.aliases import AliasMap
from kbalign.gateway import DecodingParams, LmGateway, StubBackend, StubRules
from kbalign.kb import ColumnSpec, KbStore, KnowledgeTable
from kbalign.orchestrator import Engine, EngineConfig


@pytest.fixture(scope="session")
def bundle():
    return fixtures.load_bundle()


@pytest.fixture(scope="session")
def players(bundle):
    return bundle.store.get("players")


@pytest.fixture()
def engine(bundle):
    return fixtures.build_engine(bundle=bundle)


@pytest.fixture()
def stub_gateway(bundle):
    backend = StubBackend(StubRules.from_store(bundle.store, bundle.aliases))
    return LmGateway(backend, DecodingParams())


# Random-table generation for the brute-force oracles -------------------------

COLUMN_POOL = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
VALUE_POOL = [
    "red", "blue", "green", "Gold", "silver", "north", "south", "east",
    "west", "Apex FC", "Delta Club", "n/a value", "plain",
]


def make_random_table(rng: random.Random, n_columns: int, n_rows: int) -> KnowledgeTable:
    columns = []
    for name in COLUMN_POOL[:n_columns]:
        kind = rng.choice(["text", "text", "text", "integer"])
        columns.append(
            ColumnSpec(name=name, value_kind=kind, is_identifier_like=rng.random() < 0.2)
        )
    table = KnowledgeTable(table_name="rand", columns=columns)
    for _ in range(n_rows):
        row = []
        for spec in columns:
            if rng.random() < 0.08:
                row.append(None)
            elif spec.value_kind == "integer":
                row.append(str(rng.randint(0, 5)))
            else:
                row.append(rng.choice(VALUE_POOL))
        table.rows.append(row)
    return table


@pytest.fixture(scope="session")
def random_table_factory():
    return make_random_table


@pytest.fixture()
def tiny_store():
    """Three-row table matching the structured-query walkthrough examples."""
    table = KnowledgeTable(
        table_name="games",
        columns=[
            ColumnSpec("player"),
            ColumnSpec("league"),
            ColumnSpec("birth_state"),
        ],
    )
    table.rows = [
        ["Ann Cole", "MLB", "Texas"],
        ["Bo Diaz", "MLB", "Ohio"],
        ["Kei Sato", "NPB", "Aichi"],
    ]
    return KbStore([table])


@pytest.fixture()
def engine_factory(bundle):
    def build(config: EngineConfig | None = None) -> Engine:
        return fixtures.build_engine(config=config, bundle=bundle)

    return build


@pytest.fixture()
def alias_map():
    return AliasMap([("NY Yankees", "New York Yankees"), ("Y. Mura", "Yoshi Mura")])
