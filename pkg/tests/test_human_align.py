from __future__ import annotations

import random

import pytest

from kbalign.errors import AmbiguousReply
from kbalign.human_align import (
    apply_user_reply,
    build_profiles,
    generate_clarifying_question,
    select_attribute,
)
from kbalign.kb import (
    CandidateSet,
    ColumnSpec,
    KnowledgeTable,
    render_grounding,
)


def candidate_set(table: KnowledgeTable, indices: list[int]) -> CandidateSet:
    return CandidateSet(
        groundings=[render_grounding(table, i) for i in indices],
        retrieval_mode="structured",
    )


def make_table(columns: list[str], rows: list[list[str | None]]) -> KnowledgeTable:
    table = KnowledgeTable("t", [ColumnSpec(c) for c in columns])
    table.rows = rows
    return table


# Selection rules -------------------------------------------------------------


def test_spec_walkthrough_tie_breaks_to_schema_order():
    table = make_table(
        ["team", "year", "state"],
        [["teamA", "2019", "TX"], ["teamB", "2019", "TX"], ["teamB", "2020", "CA"]],
    )
    profile = select_attribute(candidate_set(table, [0, 1, 2]), set(), table)
    assert profile is not None
    assert profile.column == "team"  # team and year both split 2 ways
    assert profile.unique_count == 2


def test_all_distinct_column_excluded_even_unflagged():
    table = make_table(
        ["player", "league"],
        [["a", "MLB"], ["b", "MLB"], ["c", "NPB"]],
    )
    profiles = {p.column: p for p in build_profiles(candidate_set(table, [0, 1, 2]), set(), table)}
    assert profiles["player"].excluded_reason == "id_like_all_distinct"
    chosen = select_attribute(candidate_set(table, [0, 1, 2]), set(), table)
    assert chosen.column == "league"


def test_asked_factor_excluded():
    table = make_table(
        ["league", "state"],
        [["MLB", "TX"], ["MLB", "CA"], ["NPB", "CA"]],
    )
    chosen = select_attribute(candidate_set(table, [0, 1, 2]), {"league"}, table)
    assert chosen.column == "state"


def test_singleton_column_excluded():
    table = make_table(
        ["league", "state"],
        [["MLB", "TX"], ["MLB", "CA"], ["MLB", "CA"]],
    )
    chosen = select_attribute(candidate_set(table, [0, 1, 2]), set(), table)
    assert chosen.column == "state"
    profiles = {p.column: p for p in build_profiles(candidate_set(table, [0, 1, 2]), set(), table)}
    assert profiles["league"].excluded_reason == "singleton"


def test_exhaustion_returns_none():
    table = make_table(
        ["player", "league"],
        [["a", "MLB"], ["b", "MLB"]],
    )
    # player is all-distinct, league is a singleton
    assert select_attribute(candidate_set(table, [0, 1]), set(), table) is None


def test_two_candidates_need_at_least_two():
    table = make_table(["a"], [["x"]])
    with pytest.raises(ValueError):
        select_attribute(candidate_set(table, [0]), set(), table)


def test_null_cells_ignored_in_profiles():
    table = make_table(
        ["league", "state"],
        [["MLB", None], ["NPB", "CA"], ["MLB", "CA"]],
    )
    profiles = {p.column: p for p in build_profiles(candidate_set(table, [0, 1, 2]), set(), table)}
    assert profiles["state"].distinct_values == ["CA"]
    assert profiles["state"].excluded_reason == "singleton"


# Brute-force oracle ----------------------------------------------------------


def oracle_select(table: KnowledgeTable, indices: list[int], asked: set[str]):
    """Independent restatement of the selection rules."""

    def norm(text: str) -> str:
        return " ".join(text.strip().lower().split())

    best_column, best_count = None, -1
    for spec in table.columns:
        column = spec.name
        col_idx = table.column_names.index(column)
        seen = []
        for i in indices:
            value = table.rows[i][col_idx]
            if value is None:
                continue
            key = norm(value).strip("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~ ")
            if key and key not in seen:
                seen.append(key)
        count = len(seen)
        if norm(column) in {norm(a) for a in asked}:
            continue
        if count == len(indices) or count <= 1:
            continue
        if count > best_count:
            best_column, best_count = column, count
    return best_column


def test_selection_matches_oracle_on_random_sets(random_table_factory):
    rng = random.Random(99)
    agree = 0
    for _ in range(150):
        table = random_table_factory(rng, rng.randint(1, 8), rng.randint(2, 10))
        size = rng.randint(2, len(table.rows))
        indices = sorted(rng.sample(range(len(table.rows)), size))
        asked = {
            c for c in table.column_names if rng.random() < 0.25
        }
        expected = oracle_select(table, indices, asked)
        got = select_attribute(candidate_set(table, indices), asked, table)
        assert (got.column if got else None) == expected
        agree += 1
    assert agree == 150


# Clarifying question ---------------------------------------------------------


def test_clarifying_question_stub_render(players, stub_gateway):
    candidates = candidate_set(players, [0, 1, 2])
    profile = select_attribute(candidates, {"stat_title"}, players)
    assert profile.column == "league"
    turn = generate_clarifying_question("q", profile, stub_gateway)
    assert turn.question_text == "Which league do you mean: MLB or NPB?"
    assert turn.options == ["MLB", "NPB"]


def test_clarifying_question_needs_two_options(players, stub_gateway):
    candidates = candidate_set(players, [0, 1, 2])
    profile = select_attribute(candidates, {"stat_title"}, players)
    profile.distinct_values = ["MLB"]
    with pytest.raises(ValueError):
        generate_clarifying_question("q", profile, stub_gateway)


# Reply handling --------------------------------------------------------------


@pytest.fixture()
def league_turn(players, stub_gateway):
    candidates = candidate_set(players, [0, 1, 2])
    profile = select_attribute(candidates, {"stat_title"}, players)
    return generate_clarifying_question("q", profile, stub_gateway), candidates


def test_reply_containment_filters(players, league_turn):
    turn, candidates = league_turn
    filtered, updated = apply_user_reply(turn, "the MLB one", candidates, players)
    assert updated.matched_value == "MLB"
    assert [g.source[1] for g in filtered.groundings] == [0, 1]


def test_reply_no_match_passes_through(players, league_turn):
    turn, candidates = league_turn
    filtered, updated = apply_user_reply(turn, "I don't know", candidates, players)
    assert updated.matched_value is None
    assert updated.user_reply == "I don't know"
    assert len(filtered.groundings) == len(candidates.groundings)


def test_reply_double_containment_is_ambiguous(players, league_turn):
    turn, candidates = league_turn
    with pytest.raises(AmbiguousReply):
        apply_user_reply(turn, "MLB or NPB, either", candidates, players)


def test_reply_trigram_similarity_path(players, league_turn):
    turn, candidates = league_turn
    turn.options = ["New York Yankees", "Sapporo Bears"]
    turn.slot = "team"
    candidates = candidate_set(players, [3, 5])
    filtered, updated = apply_user_reply(
        turn, "the new york yankee", candidates, players
    )
    assert updated.matched_value == "New York Yankees"
    assert [g.source[1] for g in filtered.groundings] == [3]


def test_nested_containment_prefers_longer_option(players):
    table = make_table(
        ["team", "x"],
        [["New York", "a"], ["New York Yankees", "b"], ["Boston", "c"]],
    )
    candidates = candidate_set(table, [0, 1, 2])
    from kbalign.human_align import ClarifyingTurn

    turn = ClarifyingTurn(
        slot="team",
        options=["New York", "New York Yankees", "Boston"],
        question_text="which team?",
    )
    filtered, updated = apply_user_reply(
        turn, "the New York Yankees", candidates, table
    )
    assert updated.matched_value == "New York Yankees"
    assert [g.source[1] for g in filtered.groundings] == [1]


def test_empty_reply_rejected(players, league_turn):
    turn, candidates = league_turn
    with pytest.raises(ValueError):
        apply_user_reply(turn, "   ", candidates, players)


def test_matched_filter_never_empties(random_table_factory, stub_gateway):
    rng = random.Random(321)
    for _ in range(60):
        table = random_table_factory(rng, rng.randint(2, 6), rng.randint(2, 10))
        indices = sorted(
            rng.sample(range(len(table.rows)), rng.randint(2, len(table.rows)))
        )
        candidates = candidate_set(table, indices)
        profile = select_attribute(candidates, set(), table)
        if profile is None:
            continue
        turn = generate_clarifying_question("q", profile, stub_gateway)
        reply = rng.choice(turn.options)
        filtered, updated = apply_user_reply(turn, reply, candidates, table)
        assert updated.matched_value is not None
        assert 1 <= len(filtered.groundings) < len(candidates.groundings) + 1
        # strict reduction whenever the attribute truly splits the set
        if profile.unique_count >= 2:
            assert len(filtered.groundings) < len(candidates.groundings)
