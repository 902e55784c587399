from __future__ import annotations

from kbalign.answer import (
    build_answer_bindings,
    detect_abstention,
    generate_answer,
    generate_direct_answer,
)
from kbalign.gateway import NO_EVIDENCE_MARKER, NONE_MARKER
from kbalign.human_align import ClarifyingTurn
from kbalign.kb import CandidateSet, render_grounding
from kbalign.model_align import AlignmentMetadata, CoreferenceLink


# Abstention detection ---------------------------------------------------------


def test_detects_listed_phrase():
    assert detect_abstention("I cannot answer this question.") is True


def test_plain_answer_not_flagged():
    assert detect_abstention("Texas.") is False


def test_detects_phrase_mid_sentence():
    assert detect_abstention("It is unclear; not enough information is given.") is True


def test_custom_phrase_list():
    assert detect_abstention("no comment", phrases=("no comment",)) is True
    assert detect_abstention("no comment") is False


# Prompt assembly ---------------------------------------------------------------


def test_prompt_contains_each_grounding_exactly_once(players):
    candidates = CandidateSet(
        [render_grounding(players, 0), render_grounding(players, 1)], "structured"
    )
    bindings = build_answer_bindings("q", candidates, AlignmentMetadata())
    for grounding in candidates.groundings:
        assert bindings["EVIDENCE"].count(grounding.text) == 1


def test_prompt_excludes_eliminated_groundings(players):
    survivors = CandidateSet([render_grounding(players, 0)], "structured")
    eliminated = render_grounding(players, 2)
    bindings = build_answer_bindings("q", survivors, AlignmentMetadata())
    assert eliminated.text not in bindings["EVIDENCE"]


def test_prompt_section_order_and_markers(players):
    candidates = CandidateSet([render_grounding(players, 2)], "structured")
    metadata = AlignmentMetadata(
        links=[CoreferenceLink("Y. Mura", "Yoshi Mura", True, 0)]
    )
    turn = ClarifyingTurn(
        slot="league",
        options=["MLB", "NPB"],
        question_text="Which league do you mean: MLB or NPB?",
        user_reply="NPB",
    )
    bindings = build_answer_bindings("the question", candidates, metadata, [turn])
    assert bindings["ALIGNMENT_NOTES"] == "Y. Mura refers to Yoshi Mura"
    assert bindings["CLARIFICATION"] == (
        "Q: Which league do you mean: MLB or NPB?\nA: NPB"
    )
    from kbalign.gateway import render

    prompt = render("answer_gen", bindings)
    assert prompt.index("the question") < prompt.index(candidates.groundings[0].text)
    assert prompt.index(candidates.groundings[0].text) < prompt.index(
        "refers to Yoshi Mura"
    )
    assert prompt.index("refers to Yoshi Mura") < prompt.index("A: NPB")


def test_unanswered_turns_not_included(players):
    candidates = CandidateSet([render_grounding(players, 0)], "structured")
    turn = ClarifyingTurn(slot="league", options=["MLB", "NPB"], question_text="q?")
    bindings = build_answer_bindings("q", candidates, AlignmentMetadata(), [turn])
    assert bindings["CLARIFICATION"] == NONE_MARKER


def test_empty_candidates_render_marker(players):
    bindings = build_answer_bindings(
        "q", CandidateSet([], "structured"), AlignmentMetadata()
    )
    assert bindings["EVIDENCE"] == NO_EVIDENCE_MARKER


# Generation with the stub -------------------------------------------------------


def test_single_grounding_answer(players, stub_gateway):
    candidates = CandidateSet([render_grounding(players, 0)], "structured")
    result = generate_answer(
        "In which state was he born?", candidates, AlignmentMetadata(), stub_gateway
    )
    assert "Texas" in result.answer_text
    assert result.abstained is False
    assert result.used_groundings == [("players", 0)]


def test_empty_candidates_abstain(players, stub_gateway):
    result = generate_answer(
        "In which state was he born?",
        CandidateSet([], "structured"),
        AlignmentMetadata(),
        stub_gateway,
    )
    assert result.abstained is True


def test_conflicting_groundings_abstain(players, stub_gateway):
    candidates = CandidateSet(
        [render_grounding(players, 0), render_grounding(players, 2)], "structured"
    )
    result = generate_answer(
        "In which state was he born?", candidates, AlignmentMetadata(), stub_gateway
    )
    assert result.abstained is True


def test_direct_answer_has_no_groundings(stub_gateway):
    transcript = []
    result = generate_direct_answer("Who?", stub_gateway, transcript)
    assert result.used_groundings == []
    assert transcript[0].template_id == "direct_qa"
    assert result.abstained is True  # the stub abstains without evidence
