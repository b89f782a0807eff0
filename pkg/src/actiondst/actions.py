"""Candidate state-update actions and their text renderings.

A turn's candidate set is generated dynamically from the state: every
informable slot-value pair as a goal change, plus one request per
(history item x requestable slot).  Each candidate is rendered to an
action sentence and paired with the item description for scoring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .ontology import DONTCARE, Ontology
from .scorer import ScorerInput
from .state import DialogueState, item_description
from .text import slot_phrase


@dataclass(frozen=True)
class InformGoal:
    slot: str
    value: str

    def to_json(self) -> dict:
        return {"type": "inform_goal", "slot": self.slot, "value": self.value}


@dataclass(frozen=True)
class Request:
    item_id: int
    slot: str

    def to_json(self) -> dict:
        return {"type": "request", "item_id": self.item_id, "slot": self.slot}


Action = Union[InformGoal, Request]


def action_from_json(obj: dict) -> Action:
    kind = obj.get("type")
    if kind == "inform_goal":
        return InformGoal(slot=obj["slot"], value=obj["value"])
    if kind == "request":
        return Request(item_id=int(obj["item_id"]), slot=obj["slot"])
    raise ValueError(f"unknown action type {kind!r}")


@dataclass(frozen=True)
class CandidateInput:
    action: Action
    scorer_input: ScorerInput


def candidate_actions(
    state: DialogueState, ontology: Ontology, include_dontcare: bool = False
) -> list[Action]:
    """All candidate actions for the state, in canonical order.

    Goal changes come first (ontology slot order, then value order, with an
    optional dontcare per slot), then requests ordered by item id and
    requestable slot order.  Total count is always
    ``total_values (+ slots if dontcare) + requestables * history size``.
    """
    candidates: list[Action] = []
    for slot in ontology.informable_slots:
        for value in ontology.informable_values[slot]:
            candidates.append(InformGoal(slot, value))
        if include_dontcare:
            candidates.append(InformGoal(slot, DONTCARE))
    for item in state.history:
        for slot in ontology.requestable_slots:
            candidates.append(Request(item.item_id, slot))
    return candidates


def action_sentence(action: Action) -> str:
    """Fixed template rendering of a candidate action."""
    if isinstance(action, InformGoal):
        if action.value == DONTCARE:
            return f"the user does not care about the {slot_phrase(action.slot)}"
        return f"the user wants the {action.value} {slot_phrase(action.slot)}"
    return f"the user asks for the {slot_phrase(action.slot)} of this restaurant"


def render_candidates(
    state: DialogueState,
    ontology: Ontology,
    utterance: str = "",
    include_dontcare: bool = False,
) -> list[CandidateInput]:
    """One scorable input per candidate action.

    The item description is empty for goal changes and is the description of
    the targeted history item for requests.
    """
    descriptions = {item.item_id: item_description(item) for item in state.history}
    out = []
    for action in candidate_actions(state, ontology, include_dontcare):
        desc = descriptions[action.item_id] if isinstance(action, Request) else ""
        out.append(
            CandidateInput(
                action=action,
                scorer_input=ScorerInput(
                    system_acts=state.last_system_acts,
                    utterance=utterance,
                    item_description=desc,
                    action_sentence=action_sentence(action),
                ),
            )
        )
    return out
