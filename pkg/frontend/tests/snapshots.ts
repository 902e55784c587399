// Session snapshots captured from the fixture knowledge base service.
import type { SessionSnapshot } from "../src/types.js";

export const awaitingSnapshot: SessionSnapshot = {
  "session_id": "8e91aa0b367e45458ca0db643fb0dfd1",
  "question": "In which state was the hit leader born?",
  "mode": "mixalign",
  "k": 5,
  "table_name": "players",
  "state": "awaiting_clarification",
  "candidates": {
    "retrieval_mode": "structured",
    "query_echo": "stat_title eq 'hit leader'",
    "groundings": [
      {
        "source": [
          "players",
          0
        ],
        "text": "player: Mick Harlow; league: MLB; stat_title: hit leader; team: Austin Bats; birth_state: Texas; debut_season: 2012",
        "relevance_score": 0.0
      },
      {
        "source": [
          "players",
          1
        ],
        "text": "player: Dale Roker; league: MLB; stat_title: hit leader; team: Round Rock Express; birth_state: Texas; debut_season: 2015",
        "relevance_score": 0.0
      },
      {
        "source": [
          "players",
          2
        ],
        "text": "player: Yoshi Mura; league: NPB; stat_title: hit leader; team: Nagoya Cranes; birth_state: Aichi; debut_season: 2013",
        "relevance_score": 0.0
      }
    ]
  },
  "metadata": {
    "mode": "structured",
    "raw_sql": "SELECT * FROM players WHERE stat_title = 'hit leader'",
    "parse_path": "grammar",
    "slots": [
      {
        "column": "stat_title",
        "surface_value": "hit leader",
        "resolved_value": "hit leader",
        "resolution": "exact",
        "op": "eq"
      }
    ],
    "links": [],
    "warnings": [],
    "fallback_lexical": false
  },
  "turns": [
    {
      "slot": "league",
      "options": [
        "MLB",
        "NPB"
      ],
      "question_text": "Which league do you mean: MLB or NPB?",
      "user_reply": null,
      "matched_value": null
    }
  ],
  "result": null,
  "failure": null,
  "rounds_used": 1,
  "transcript": []
};

export const answeredSnapshot: SessionSnapshot = {
  "session_id": "8e91aa0b367e45458ca0db643fb0dfd1",
  "question": "In which state was the hit leader born?",
  "mode": "mixalign",
  "k": 5,
  "table_name": "players",
  "state": "answered",
  "candidates": {
    "retrieval_mode": "structured",
    "query_echo": "stat_title eq 'hit leader' + league=MLB",
    "groundings": [
      {
        "source": [
          "players",
          0
        ],
        "text": "player: Mick Harlow; league: MLB; stat_title: hit leader; team: Austin Bats; birth_state: Texas; debut_season: 2012",
        "relevance_score": 0.0
      },
      {
        "source": [
          "players",
          1
        ],
        "text": "player: Dale Roker; league: MLB; stat_title: hit leader; team: Round Rock Express; birth_state: Texas; debut_season: 2015",
        "relevance_score": 0.0
      }
    ]
  },
  "metadata": {
    "mode": "structured",
    "raw_sql": "SELECT * FROM players WHERE stat_title = 'hit leader'",
    "parse_path": "grammar",
    "slots": [
      {
        "column": "stat_title",
        "surface_value": "hit leader",
        "resolved_value": "hit leader",
        "resolution": "exact",
        "op": "eq"
      }
    ],
    "links": [],
    "warnings": [],
    "fallback_lexical": false
  },
  "turns": [
    {
      "slot": "league",
      "options": [
        "MLB",
        "NPB"
      ],
      "question_text": "Which league do you mean: MLB or NPB?",
      "user_reply": "MLB",
      "matched_value": "MLB"
    }
  ],
  "result": {
    "answer_text": "Texas.",
    "used_groundings": [
      [
        "players",
        0
      ],
      [
        "players",
        1
      ]
    ],
    "abstained": false,
    "alignment_echo": {
      "mode": "structured",
      "raw_sql": "SELECT * FROM players WHERE stat_title = 'hit leader'",
      "parse_path": "grammar",
      "slots": [
        {
          "column": "stat_title",
          "surface_value": "hit leader",
          "resolved_value": "hit leader",
          "resolution": "exact",
          "op": "eq"
        }
      ],
      "links": [],
      "warnings": [],
      "fallback_lexical": false
    }
  },
  "failure": null,
  "rounds_used": 1,
  "transcript": []
};
