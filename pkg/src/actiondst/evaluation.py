"""Simulated and corpus evaluation of the action tracker.

Simulation runs full dialogues between the system and the agenda-based user
and reports dialogue success plus per-turn state-update accuracy, bucketed
into inform-only and request-only turns.  Corpus evaluation replays an
annotated corpus with gold state updates between turns (teacher forcing) so
per-turn model quality is measured without error compounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actions import InformGoal, Request
from .corpus import AnnotatedCorpus, parse_offers
from .manager import Session
from .ontology import Ontology, Venue, VenueDb
from .simulator import DEFAULT_TURN_CAP, SimulatedUser, sample_scenario
from .state import new_state
from .updater import detect, select


@dataclass
class Metrics:
    n_dialogues: int
    avg_length: float
    std_length: float
    success_rate: float
    accuracy_all: float
    accuracy_inform: float
    accuracy_request: float
    std_accuracy_request: float
    informs_per_dialogue: float
    requests_per_dialogue: float

    def to_json(self) -> dict:
        return {
            "n_dialogues": self.n_dialogues,
            "avg_length": self.avg_length,
            "std_length": self.std_length,
            "success_rate": self.success_rate,
            "accuracy_all": self.accuracy_all,
            "accuracy_inform": self.accuracy_inform,
            "accuracy_request": self.accuracy_request,
            "std_accuracy_request": self.std_accuracy_request,
            "informs_per_dialogue": self.informs_per_dialogue,
            "requests_per_dialogue": self.requests_per_dialogue,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Metrics":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__})


@dataclass
class TurnRecord:
    dialogue_idx: int
    turn_idx: int
    system_acts: str
    utterance: str
    gold: list
    executed: list
    correct: bool
    bucket: str  # inform | request | mixed | none
    referring: bool
    scored: list = field(default_factory=list)  # (action, score) when collected
    item_venues: dict = field(default_factory=dict)  # item_id -> venue name, pre-turn

    def to_json(self) -> dict:
        return {
            "dialogue_idx": self.dialogue_idx,
            "turn_idx": self.turn_idx,
            "system_acts": self.system_acts,
            "utterance": self.utterance,
            "gold": [a.to_json() for a in self.gold],
            "executed": [a.to_json() for a in self.executed],
            "correct": self.correct,
            "bucket": self.bucket,
            "referring": self.referring,
        }


@dataclass
class DialogueResult:
    turns: list[TurnRecord]
    success: bool
    length: int
    capped: bool


def turn_correct(executed, gold) -> bool:
    """Exact set match between executed and gold actions for one turn."""
    return set(executed) == set(gold)


def _bucket(gold) -> str:
    has_inform = any(isinstance(a, InformGoal) for a in gold)
    has_request = any(isinstance(a, Request) for a in gold)
    if has_inform and has_request:
        return "mixed"
    if has_inform:
        return "inform"
    if has_request:
        return "request"
    return "none"


def run_dialogue(
    scorer,
    ontology: Ontology,
    db: VenueDb,
    rng: np.random.Generator,
    dialogue_idx: int = 0,
    turn_cap: int = DEFAULT_TURN_CAP,
    generic_only: bool = False,
    corpus_bank=None,
    collect_scores: bool = False,
    scenario=None,
) -> DialogueResult:
    """Simulate one dialogue and record per-turn outcomes."""
    scenario = scenario or sample_scenario(
        ontology, db, rng, generic_only=generic_only, turn_cap=turn_cap
    )
    sim = SimulatedUser(scenario, ontology, db, rng, corpus_bank=corpus_bank)
    session = Session(scorer, ontology, db)
    records: list[TurnRecord] = []
    capped = False
    while True:
        if sim.turns_emitted >= turn_cap:
            capped = True
            break
        turn = sim.next_turn()
        if turn is None:
            break
        state = session.state
        item_venues = {it.item_id: it.venue.name for it in state.history}
        acts_before = state.last_system_acts
        gold = set(turn.gold_actions)
        result = session.step(turn.utterance, gold=gold)
        assert result.update is not None
        executed = result.update.executed
        records.append(
            TurnRecord(
                dialogue_idx=dialogue_idx,
                turn_idx=state.turn_index,
                system_acts=acts_before,
                utterance=turn.utterance,
                gold=list(turn.gold_actions),
                executed=list(executed),
                correct=turn_correct(executed, gold),
                bucket=_bucket(turn.gold_actions),
                referring=turn.referring,
                scored=list(result.update.scored) if collect_scores else [],
                item_venues=item_venues,
            )
        )
        sim.observe(result.move)
    return DialogueResult(
        turns=records,
        success=sim.success and not capped,
        length=sim.turns_emitted,
        capped=capped,
    )


def run_simulation(
    scorer,
    ontology: Ontology,
    db: VenueDb,
    n: int,
    seed: int,
    turn_cap: int = DEFAULT_TURN_CAP,
    generic_only: bool = False,
    corpus_bank=None,
    dump_path: str | Path | None = None,
) -> Metrics:
    """Simulate ``n`` dialogues (per-dialogue seeds ``seed + i``) and aggregate."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lengths: list[int] = []
    successes = 0
    turn_flags: list[bool] = []
    inform_flags: list[bool] = []
    request_flags: list[bool] = []
    per_dialogue_req_acc: list[float] = []
    informs_count = 0
    requests_count = 0
    dump_file = None
    if dump_path is not None:
        dump_file = Path(dump_path).open("w", encoding="utf-8")
    try:
        for i in range(n):
            rng = np.random.Generator(np.random.PCG64(seed + i))
            result = run_dialogue(
                scorer, ontology, db, rng,
                dialogue_idx=i, turn_cap=turn_cap, generic_only=generic_only,
                corpus_bank=corpus_bank,
            )
            lengths.append(result.length)
            successes += int(result.success)
            dialogue_request_flags = []
            for rec in result.turns:
                turn_flags.append(rec.correct)
                if rec.bucket == "inform":
                    inform_flags.append(rec.correct)
                elif rec.bucket == "request":
                    request_flags.append(rec.correct)
                    dialogue_request_flags.append(rec.correct)
                informs_count += sum(isinstance(a, InformGoal) for a in rec.gold)
                requests_count += sum(isinstance(a, Request) for a in rec.gold)
                if dump_file is not None:
                    dump_file.write(json.dumps(rec.to_json()) + "\n")
            if dialogue_request_flags:
                per_dialogue_req_acc.append(
                    sum(dialogue_request_flags) / len(dialogue_request_flags)
                )
    finally:
        if dump_file is not None:
            dump_file.close()

    def mean(xs) -> float:
        return sum(xs) / len(xs) if xs else 0.0

    def std(xs) -> float:
        if len(xs) < 2:
            return 0.0
        m = mean(xs)
        return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))

    return Metrics(
        n_dialogues=n,
        avg_length=mean(lengths),
        std_length=std(lengths),
        success_rate=successes / n,
        accuracy_all=mean([float(f) for f in turn_flags]),
        accuracy_inform=mean([float(f) for f in inform_flags]),
        accuracy_request=mean([float(f) for f in request_flags]),
        std_accuracy_request=std(per_dialogue_req_acc),
        informs_per_dialogue=informs_count / n,
        requests_per_dialogue=requests_count / n,
    )


def replay_dialogue(turns, ontology: Ontology):
    """Yield (state, turn) pairs, applying offers and gold actions between turns.

    The state seen by the scorer at each turn is the gold-tracked state, so
    per-turn errors do not compound.
    """
    state = new_state()
    for turn in turns:
        for fields in parse_offers(turn.system_acts_text, ontology.name_slot):
            name = fields.pop(ontology.name_slot)
            venue = Venue(name=name, attributes=fields)
            state.record_offer(venue, turn.turn_idx)
        state.last_system_acts = turn.system_acts_text
        yield state, turn
        for action in turn.intended_actions:
            state.apply_action(action, ontology, turn.turn_idx)
        state.turn_index = turn.turn_idx


def corpus_eval(
    scorer,
    corpus: AnnotatedCorpus,
    ontology: Ontology,
    include_dontcare: bool = False,
    teacher_forcing: bool = True,
) -> tuple[float, float]:
    """(goal accuracy, request accuracy) of per-turn selections over a corpus."""
    if not corpus.turns:
        raise ValueError("corpus is empty")
    goal_flags: list[bool] = []
    request_flags: list[bool] = []
    for dialogue_turns in corpus.dialogues().values():
        if teacher_forcing:
            pairs = replay_dialogue(dialogue_turns, ontology)
            for state, turn in pairs:
                _score_turn(scorer, state, ontology, turn, include_dontcare,
                            goal_flags, request_flags)
        else:
            state = new_state()
            for turn in dialogue_turns:
                for fields in parse_offers(turn.system_acts_text, ontology.name_slot):
                    name = fields.pop(ontology.name_slot)
                    state.record_offer(Venue(name=name, attributes=fields), turn.turn_idx)
                state.last_system_acts = turn.system_acts_text
                executed = _score_turn(scorer, state, ontology, turn, include_dontcare,
                                       goal_flags, request_flags)
                for action in executed:
                    state.apply_action(action, ontology, turn.turn_idx)
                state.turn_index = turn.turn_idx
    return (
        sum(goal_flags) / len(goal_flags),
        sum(request_flags) / len(request_flags),
    )


def _score_turn(scorer, state, ontology, turn, include_dontcare, goal_flags, request_flags):
    gold = set(turn.intended_actions)
    scored = detect(
        scorer, state, ontology, turn.user_utterance, gold=gold,
        include_dontcare=include_dontcare,
    )
    executed = select(scored, state, ontology)
    gold_goals = {a for a in gold if isinstance(a, InformGoal)}
    gold_requests = {a for a in gold if isinstance(a, Request)}
    exec_goals = {a for a in executed if isinstance(a, InformGoal)}
    exec_requests = {a for a in executed if isinstance(a, Request)}
    goal_flags.append(exec_goals == gold_goals)
    request_flags.append(exec_requests == gold_requests)
    return executed
