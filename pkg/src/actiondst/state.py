"""Dialogue state: user goal constraints plus the history of discussed items.

Each history item tracks per-slot request bits (off/pending) and the turn
it was last mentioned, which drives the recency tie-break during action
selection.  A state belongs to one session; mutation is single-threaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ontology import DONTCARE, Ontology, Venue

# description labels in the fixed render order for the venue-search domain
_DESC_ORDER = [("area", "AREA"), ("pricerange", "PRICE"), ("food", "FOOD")]


class StateError(ValueError):
    """Raised for invalid state transitions (dangling items, bad bits)."""


@dataclass
class HistoryItem:
    item_id: int
    venue: Venue
    last_mention_turn: int
    request_bits: dict[str, bool] = field(default_factory=dict)

    def pending_slots(self) -> list[str]:
        return [s for s, pending in self.request_bits.items() if pending]


@dataclass
class DialogueState:
    goal: dict[str, str] = field(default_factory=dict)
    history: list[HistoryItem] = field(default_factory=list)
    turn_index: int = 0
    last_system_acts: str = ""
    # goal snapshot at the time of the last offer; lets the move policy be a
    # pure function of the state ("has the goal changed since I last offered?")
    goal_at_last_offer: dict[str, str] | None = None

    def item(self, item_id: int) -> HistoryItem:
        for it in self.history:
            if it.item_id == item_id:
                return it
        raise StateError(f"no history item with id {item_id}")

    def find_item(self, venue_name: str) -> HistoryItem | None:
        for it in self.history:
            if it.venue.name == venue_name:
                return it
        return None

    def record_offer(self, venue: Venue, turn: int) -> "DialogueState":
        """Add the venue to history (first offer) or refresh its mention turn."""
        existing = self.find_item(venue.name)
        if existing is None:
            self.history.append(
                HistoryItem(item_id=len(self.history) + 1, venue=venue, last_mention_turn=turn)
            )
        else:
            existing.last_mention_turn = turn
        return self

    def apply_action(self, action, ontology: Ontology, turn: int) -> "DialogueState":
        """Execute one state-update action (goal change or request bit)."""
        from .actions import InformGoal, Request

        if isinstance(action, InformGoal):
            if action.slot not in ontology.informable_slots:
                raise StateError(f"unknown informable slot {action.slot!r}")
            if action.value != DONTCARE and not ontology.has_value(action.slot, action.value):
                raise StateError(f"unknown value {action.value!r} for slot {action.slot!r}")
            self.goal[action.slot] = action.value
        elif isinstance(action, Request):
            if action.slot not in ontology.requestable_slots:
                raise StateError(f"unknown requestable slot {action.slot!r}")
            item = self.item(action.item_id)
            item.request_bits[action.slot] = True
            item.last_mention_turn = turn
        else:
            raise StateError(f"unknown action type {type(action).__name__}")
        return self

    def clear_request(self, item_id: int, slot: str) -> "DialogueState":
        item = self.item(item_id)
        if not item.request_bits.get(slot, False):
            raise StateError(f"request bit {slot!r} on item {item_id} is not pending")
        item.request_bits[slot] = False
        return self

    def pending_requests(self) -> list[tuple[int, str]]:
        return [(it.item_id, s) for it in self.history for s in it.pending_slots()]

    def to_dict(self) -> dict:
        return {
            "goal": dict(self.goal),
            "history": [
                {
                    "item_id": it.item_id,
                    "venue": {"name": it.venue.name, **dict(it.venue.attributes)},
                    "last_mention_turn": it.last_mention_turn,
                    "request_bits": {s: bool(v) for s, v in it.request_bits.items()},
                }
                for it in self.history
            ],
            "turn_index": self.turn_index,
            "last_system_acts": self.last_system_acts,
            "goal_at_last_offer": dict(self.goal_at_last_offer)
            if self.goal_at_last_offer is not None
            else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DialogueState":
        state = cls(
            goal=dict(data.get("goal", {})),
            turn_index=int(data.get("turn_index", 0)),
            last_system_acts=str(data.get("last_system_acts", "")),
        )
        gal = data.get("goal_at_last_offer")
        state.goal_at_last_offer = dict(gal) if gal is not None else None
        for entry in data.get("history", []):
            venue_raw = dict(entry["venue"])
            name = venue_raw.pop("name")
            item = HistoryItem(
                item_id=int(entry["item_id"]),
                venue=Venue(name=name, attributes=venue_raw),
                last_mention_turn=int(entry["last_mention_turn"]),
                request_bits={s: bool(v) for s, v in entry.get("request_bits", {}).items()},
            )
            state.history.append(item)
        return state


def new_state() -> DialogueState:
    return DialogueState()


def item_description(item: HistoryItem | Venue) -> str:
    """Flat text rendering of a discussed item, e.g.
    ``NAME zizzi AREA center PRICE cheap FOOD italian``."""
    venue = item.venue if isinstance(item, HistoryItem) else item
    parts = ["NAME", venue.name]
    for slot, label in _DESC_ORDER:
        if slot in venue.attributes:
            parts.extend([label, venue.attributes[slot]])
    for slot, value in venue.attributes.items():
        if slot in {"area", "pricerange", "food", "phone", "addr", "postcode"}:
            continue
        parts.extend([slot.upper(), value])
    return " ".join(parts)


def parse_item_description(text: str) -> dict[str, str]:
    """Inverse of :func:`item_description` (labels back to slot names)."""
    labels = {"NAME": "name", "AREA": "area", "PRICE": "pricerange", "FOOD": "food"}
    out: dict[str, str] = {}
    current: str | None = None
    buf: list[str] = []
    for tok in text.split():
        if tok.isupper():
            if current is not None:
                out[current] = " ".join(buf)
            current = labels.get(tok, tok.lower())
            buf = []
        else:
            buf.append(tok)
    if current is not None:
        out[current] = " ".join(buf)
    return out
