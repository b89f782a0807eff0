"""Annotated dialogue corpus: canonical JSONL format and DSTC2-layout import.

A corpus turn stores the lexicalized system acts preceding the user turn,
the user utterance, and the intended state-update actions inferred from the
annotation.  Imported request annotations target the most recently offered
item, since that corpus style contains no referring expressions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .actions import Action, InformGoal, Request, action_from_json
from .ontology import DONTCARE, Ontology
from .text import lexicalize_acts, parse_acts

KNOWN_ACTS = frozenset(
    {"welcome", "offer", "inform", "canthelp", "reqmore", "bye", "request", "expl-conf", "confirm", "select", "repeat", "affirm", "negate"}
)


@dataclass
class CorpusTurn:
    dialogue_id: str
    turn_idx: int
    system_acts_text: str
    user_utterance: str
    intended_actions: list[Action] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_idx": self.turn_idx,
            "system_acts_text": self.system_acts_text,
            "user_utterance": self.user_utterance,
            "intended_actions": [a.to_json() for a in self.intended_actions],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusTurn":
        return cls(
            dialogue_id=str(obj["dialogue_id"]),
            turn_idx=int(obj["turn_idx"]),
            system_acts_text=str(obj["system_acts_text"]),
            user_utterance=str(obj["user_utterance"]),
            intended_actions=[action_from_json(a) for a in obj.get("intended_actions", [])],
        )


@dataclass
class AnnotatedCorpus:
    turns: list[CorpusTurn] = field(default_factory=list)
    skipped_turns: int = 0

    def dialogues(self) -> dict[str, list[CorpusTurn]]:
        out: dict[str, list[CorpusTurn]] = {}
        for turn in self.turns:
            out.setdefault(turn.dialogue_id, []).append(turn)
        for turns in out.values():
            turns.sort(key=lambda t: t.turn_idx)
        return out

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as f:
            for turn in self.turns:
                f.write(json.dumps(turn.to_json()) + "\n")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "AnnotatedCorpus":
        turns = []
        with Path(path).open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    turns.append(CorpusTurn.from_json(json.loads(line)))
        return cls(turns=turns)


def _system_acts_from_log(turn_obj: dict) -> list[tuple[str, list[tuple[str, str]]]]:
    acts = []
    for act_obj in turn_obj.get("output", {}).get("dialog-acts", []):
        slots = [(str(s), str(v)) for s, v in act_obj.get("slots", [])]
        acts.append((str(act_obj.get("act", "")), slots))
    return acts


def import_dstc2(log_dir: str | Path, ontology: Ontology) -> AnnotatedCorpus:
    """Import ``log.json``/``label.json`` pairs found under a directory tree.

    Each annotated user inform becomes a goal-change action, each annotated
    request becomes a request on the most recently offered item.  Turns whose
    annotation references an unknown slot or value are skipped and counted.
    """
    log_dir = Path(log_dir)
    corpus = AnnotatedCorpus()
    log_files = sorted(log_dir.glob("**/log.json"))
    if not log_files:
        raise FileNotFoundError(f"no log.json files under {log_dir}")
    for log_path in log_files:
        label_path = log_path.parent / "label.json"
        if not label_path.exists():
            continue
        try:
            log = json.loads(log_path.read_text(encoding="utf-8"))
            label = json.loads(label_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise OSError(f"unreadable dialogue files in {log_path.parent}: {exc}") from exc
        dialogue_id = str(log.get("session-id", log_path.parent.name))
        offered: list[str] = []
        for turn_idx, (sys_turn, usr_turn) in enumerate(zip(log.get("turns", []), label.get("turns", []))):
            acts = _system_acts_from_log(sys_turn)
            for act, slots in acts:
                if act == "offer":
                    for slot, value in slots:
                        if slot == ontology.name_slot and value not in offered:
                            offered.append(value)
            acts_text = lexicalize_acts(acts)
            utterance = str(usr_turn.get("transcription", ""))
            intended: list[Action] = []
            bad = False
            for sem in usr_turn.get("semantics", {}).get("json", []):
                act = sem.get("act")
                slots = sem.get("slots", [])
                if act == "inform":
                    for slot, value in slots:
                        if slot == "this":
                            continue
                        value = str(value).lower()
                        if value == DONTCARE:
                            intended.append(InformGoal(str(slot), DONTCARE))
                        elif ontology.has_value(str(slot), value):
                            intended.append(InformGoal(str(slot), value))
                        else:
                            bad = True
                elif act == "request":
                    for _key, slot in slots:
                        slot = str(slot)
                        if slot not in ontology.requestable_slots:
                            bad = True
                        elif offered:
                            intended.append(Request(item_id=len(offered), slot=slot))
            if bad:
                corpus.skipped_turns += 1
                continue
            corpus.turns.append(
                CorpusTurn(
                    dialogue_id=dialogue_id,
                    turn_idx=turn_idx,
                    system_acts_text=acts_text,
                    user_utterance=utterance,
                    intended_actions=intended,
                )
            )
    return corpus


def parse_offers(acts_text: str, name_slot: str = "name") -> list[dict[str, str]]:
    """Venue field dicts for every offer act in a canonical acts string."""
    known_slots = frozenset({"name", "food", "area", "pricerange", "phone", "addr", "postcode", "slot"})
    offers = []
    for act, slots in parse_acts(acts_text, KNOWN_ACTS, known_slots):
        if act == "offer":
            fields = {s: v for s, v in slots}
            if name_slot in fields:
                offers.append(fields)
    return offers
