"""System turn orchestration: update the state, pick a move, realize text.

The move policy is deterministic rules in priority order: answer pending
requests, offer when the goal changed and a match exists, apologize when
nothing matches, otherwise prompt for more.  It sits behind plain functions
so a learned policy could replace it without touching the tracker.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

from .ontology import DONTCARE, Ontology, Venue, VenueDb, query_venues
from .state import DialogueState, new_state
from .text import lexicalize_act, slot_phrase
from .updater import TurnUpdate, update_turn

ERROR_MARKER = "<error>"

GREETING_TEXT = (
    "hello, welcome to the cambridge restaurant system. you can ask for "
    "restaurants by area, price range or food type. how may i help you?"
)


@dataclass
class SystemMove:
    act: str  # welcome | offer | inform | canthelp | reqmore | bye
    venue: Venue | None = None
    informs: list[tuple[int, str, str, str]] = field(default_factory=list)
    # informs entries: (item_id, venue_name, slot, value)
    constraints: dict[str, str] = field(default_factory=dict)
    ack_error: bool = False


def select_move(state: DialogueState, db: VenueDb) -> SystemMove:
    """Deterministic move policy over the tracked state."""
    pending = state.pending_requests()
    if pending:
        informs = []
        for item_id, slot in pending:
            item = state.item(item_id)
            value = item.venue.attributes.get(slot, "unknown")
            informs.append((item_id, item.venue.name, slot, value))
        return SystemMove(act="inform", informs=informs)

    if state.goal:
        matches = query_venues(db, state.goal)
        if not matches:
            return SystemMove(act="canthelp", constraints=dict(state.goal))
        goal_changed = (
            state.goal_at_last_offer is None or state.goal != state.goal_at_last_offer
        )
        if goal_changed:
            offered = {item.venue.name for item in state.history}
            fresh = next((v for v in matches if v.name not in offered), None)
            return SystemMove(act="offer", venue=fresh or matches[0])
    return SystemMove(act="reqmore")


def realize(move: SystemMove) -> tuple[str, str]:
    """Template NLG: (utterance text, canonical lexicalized acts text)."""
    if move.act == "welcome":
        return GREETING_TEXT, "welcome"
    if move.act == "offer":
        v = move.venue
        assert v is not None
        text = f"{v.name} is a nice {v.attributes['food']} place in the {v.attributes['area']}"
        acts = lexicalize_act(
            "offer",
            [
                ("name", v.name),
                ("food", v.attributes["food"]),
                ("area", v.attributes["area"]),
                ("pricerange", v.attributes["pricerange"]),
            ],
        )
        return text, acts
    if move.act == "inform":
        sentences = []
        act_parts = []
        for _item_id, venue_name, slot, value in move.informs:
            sentences.append(f"the {slot_phrase(slot)} of {venue_name} is {value}")
            act_parts.append(
                lexicalize_act("inform", [("name", venue_name), (slot, value)])
            )
        return ". ".join(sentences), " ; ".join(act_parts)
    if move.act == "canthelp":
        phrases = [
            "any" if value == DONTCARE else value for value in move.constraints.values()
        ]
        wanted = " ".join(phrases) if phrases else "that"
        return (
            f"i am sorry but there is no place matching {wanted}",
            lexicalize_act("canthelp", list(move.constraints.items())),
        )
    if move.act == "reqmore":
        if move.ack_error:
            return (
                "thank you, i have flagged that response. is there anything else i can help you with?",
                "reqmore",
            )
        return "is there anything else i can help you with?", "reqmore"
    if move.act == "bye":
        return "goodbye and enjoy your meal", "bye"
    raise ValueError(f"unknown system act {move.act!r}")


@dataclass
class TranscriptEntry:
    speaker: str  # "system" | "user"
    text: str
    turn_idx: int
    move: SystemMove | None = None
    acts_text: str = ""
    executed: list = field(default_factory=list)
    top_scores: list = field(default_factory=list)
    error_flag: bool = False


@dataclass
class StepResult:
    move: SystemMove | None
    text: str
    update: TurnUpdate | None


class SessionClosed(RuntimeError):
    pass


class Session:
    """One dialogue: a state, a scorer, and an alternating transcript."""

    def __init__(self, scorer, ontology: Ontology, db: VenueDb,
                 session_id: str | None = None, include_dontcare: bool = False):
        self.session_id = session_id or uuid.uuid4().hex
        self.scorer = scorer
        self.ontology = ontology
        self.db = db
        self.include_dontcare = include_dontcare
        self.state = new_state()
        self.transcript: list[TranscriptEntry] = []
        self.closed = False
        self._open_with_greeting()

    def _open_with_greeting(self) -> None:
        move = SystemMove(act="welcome")
        text, acts = realize(move)
        self.state.last_system_acts = acts
        self.transcript.append(
            TranscriptEntry(speaker="system", text=text, turn_idx=0, move=move, acts_text=acts)
        )

    @property
    def greeting(self) -> str:
        return self.transcript[0].text

    def step(self, utterance: str, gold=None) -> StepResult:
        """Process one user utterance and produce the system reply."""
        if self.closed:
            raise SessionClosed(f"session {self.session_id} is closed")
        turn = self.state.turn_index + 1

        if utterance.strip() == ERROR_MARKER:
            for entry in reversed(self.transcript):
                if entry.speaker == "system":
                    entry.error_flag = True
                    break
            self.transcript.append(
                TranscriptEntry(speaker="user", text=utterance, turn_idx=self.state.turn_index)
            )
            move = SystemMove(act="reqmore", ack_error=True)
            text, _acts = realize(move)
            self.transcript.append(
                TranscriptEntry(
                    speaker="system", text=text, turn_idx=self.state.turn_index, move=move
                )
            )
            return StepResult(move=move, text=text, update=None)

        update = update_turn(
            self.scorer, self.state, self.ontology, utterance, turn,
            gold=gold, include_dontcare=self.include_dontcare,
        )
        move = select_move(self.state, self.db)
        if move.act == "inform":
            for item_id, _venue_name, slot, _value in move.informs:
                self.state.clear_request(item_id, slot)
        elif move.act == "offer":
            assert move.venue is not None
            self.state.record_offer(move.venue, turn)
            self.state.goal_at_last_offer = dict(self.state.goal)
        text, acts = realize(move)
        self.state.last_system_acts = acts

        top = sorted(update.scored, key=lambda sa: -sa.score)[:5]
        self.transcript.append(
            TranscriptEntry(
                speaker="user", text=utterance, turn_idx=turn,
                executed=list(update.executed),
                top_scores=[(sa.action, sa.score) for sa in top],
            )
        )
        self.transcript.append(
            TranscriptEntry(
                speaker="system", text=text, turn_idx=turn, move=move, acts_text=acts
            )
        )
        return StepResult(move=move, text=text, update=update)

    def close(self) -> None:
        self.closed = True
