"""Per-turn state update: score every candidate, select, apply.

Selection drops anything at or below the 0.5 relevance threshold, keeps only
the highest-scoring goal change per slot, and resolves competing requests
for the same slot to the most recently mentioned item.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .actions import Action, CandidateInput, InformGoal, Request, render_candidates
from .ontology import Ontology
from .state import DialogueState

THRESHOLD = 0.5


@dataclass(frozen=True)
class ScoredAction:
    action: Action
    score: float


@dataclass
class TurnUpdate:
    executed: list[Action]
    rejected: list[ScoredAction]
    resulting_state: DialogueState
    scored: list[ScoredAction] = field(default_factory=list)


def detect(scorer, state: DialogueState, ontology: Ontology, utterance: str,
           gold=None, include_dontcare: bool = False) -> list[ScoredAction]:
    """Score every dynamically generated candidate for this turn."""
    candidates = render_candidates(state, ontology, utterance, include_dontcare)
    scores = scorer.score_candidates(candidates, gold)
    return [ScoredAction(c.action, float(s)) for c, s in zip(candidates, scores)]


def select(scored: list[ScoredAction], state: DialogueState,
           ontology: Ontology) -> list[Action]:
    """Apply the selection heuristics to thresholded candidates.

    Per informable slot only the best-scoring goal change survives (score
    ties break toward the earlier ontology value); per requestable slot only
    the request whose item was mentioned most recently survives (ties break
    toward the larger item id).  The result is in canonical order and does
    not depend on the order of the input list.
    """
    surviving = [sa for sa in scored if sa.score > THRESHOLD]

    def value_rank(action: InformGoal) -> int:
        values = ontology.informable_values.get(action.slot, ())
        try:
            return values.index(action.value)
        except ValueError:
            return len(values)  # dontcare sorts after listed values

    best_goal: dict[str, ScoredAction] = {}
    for sa in surviving:
        if not isinstance(sa.action, InformGoal):
            continue
        cur = best_goal.get(sa.action.slot)
        if (
            cur is None
            or sa.score > cur.score
            or (sa.score == cur.score and value_rank(sa.action) < value_rank(cur.action))
        ):
            best_goal[sa.action.slot] = sa

    mention = {item.item_id: item.last_mention_turn for item in state.history}
    best_request: dict[str, Request] = {}
    for sa in surviving:
        if not isinstance(sa.action, Request):
            continue
        cur = best_request.get(sa.action.slot)
        candidate_key = (mention.get(sa.action.item_id, -1), sa.action.item_id)
        if cur is None or candidate_key > (mention.get(cur.item_id, -1), cur.item_id):
            best_request[sa.action.slot] = sa.action

    selected: list[Action] = [
        best_goal[slot].action for slot in ontology.informable_slots if slot in best_goal
    ]
    selected.extend(
        best_request[slot] for slot in ontology.requestable_slots if slot in best_request
    )
    return selected


def update_turn(scorer, state: DialogueState, ontology: Ontology, utterance: str,
                turn: int, gold=None, include_dontcare: bool = False) -> TurnUpdate:
    """Run the full detect -> select -> apply cycle for one user turn."""
    scored = detect(scorer, state, ontology, utterance, gold, include_dontcare)
    selected = select(scored, state, ontology)
    chosen = set(selected)
    for action in selected:
        state.apply_action(action, ontology, turn)
    state.turn_index = turn
    return TurnUpdate(
        executed=list(selected),
        rejected=[sa for sa in scored if sa.action not in chosen],
        resulting_state=state,
        scored=scored,
    )
