"""Agenda-based simulated user.

A scenario drives one dialogue: inform the initial constraints, change the
goal a couple of times to elicit alternative venues, then ask follow-up
questions about venues offered earlier, identifying them with referring
expressions ("the italian place") or generically when the target is the most
recently mentioned one.  The simulator re-issues an intent, rephrased, when
the system's reply does not address it.  Every emitted turn carries the gold
state-update actions implied by its intents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actions import Action, InformGoal, Request
from .manager import SystemMove
from .ontology import Ontology, Venue, VenueDb, query_venues

DEFAULT_TURN_CAP = 30
DEFAULT_PATIENCE = 1  # re-issues of one unaddressed intent before giving up on it

# Canonical referring-request surface parts.  Utterances compose a generic
# request head for the requested slot with a referring tail naming the
# target venue by one of its properties.
REQUEST_HEADS: dict[str, list[str]] = {
    "phone": ["phone number", "what is the phone number", "can i get the phone number"],
    "addr": ["what is the address", "address", "could you give me the address"],
    "postcode": ["what is the postcode", "postcode", "can i have the postcode"],
    "area": ["what's the area", "area", "what area is it in"],
    "pricerange": ["price range", "what is the price range", "how pricey is it"],
    "food": ["what type of food", "what kind of food is served", "food type"],
}

REFERRING_TAILS: dict[str, list[str]] = {
    "area": ["for the place in the {value}", "of the place in the {value}", "for the restaurant in the {value}"],
    "pricerange": ["of the {value} place", "for the {value} place", "of the {value} one"],
    "food": ["for the {value} place", "of the {value} place", "for the {value} restaurant"],
    "name": ["of {value}", "for {value}"],
}

# pair-specific canonical surfaces (the deterministic first choice)
PAIR_OVERRIDES: dict[tuple[str, str], str] = {
    ("food", "name"): "What type of food does {value} serve?",
    ("pricerange", "area"): "price range for the place in the {value}",
    ("area", "pricerange"): "area of the {value} place",
    ("area", "food"): "what's the area for the {value} place",
}

GENERIC_REQUESTS: dict[str, list[str]] = {
    "phone": ["what is the phone number", "can i get the phone number", "phone number please"],
    "addr": ["what is the address", "can i have the address", "address please"],
    "postcode": ["what is the postcode", "can i get the postcode", "postcode please"],
    "area": ["what area is it in", "what is the area", "which part of town is it in"],
    "pricerange": ["what is the price range", "how expensive is it", "what price range is it"],
    "food": ["what type of food do they serve", "what kind of food is it", "what food do they have"],
}

INFORM_PREFIXES = ["i am looking for", "i want", "can you find me"]

CHANGE_TEMPLATES: dict[str, list[str]] = {
    "food": ["how about {value}", "what about {value} food", "can you find something {value} instead"],
    "area": ["how about the {value} of town", "what about somewhere in the {value}", "how about the {value} part of town"],
    "pricerange": ["how about something {value}", "what about {a_value} one", "how about {a_value} place instead"],
}


def _an(word: str) -> str:
    return ("an " if word[:1] in "aeiou" else "a ") + word


class ScenarioError(RuntimeError):
    """Raised when rejection sampling cannot produce a valid scenario."""


@dataclass(frozen=True)
class Followup:
    req_slot: str
    stage: int  # which goal stage's offered venue is the referent
    ref_slot: str  # preferred identifying property ("name" or an informable slot)


@dataclass
class Scenario:
    initial_constraints: dict[str, str]
    goal_changes: list[tuple[str, str]]
    followups: list[Followup]
    expected_venues: list[str]
    turn_cap: int = DEFAULT_TURN_CAP
    generic_only: bool = False

    def stage_goals(self) -> list[dict[str, str]]:
        goals = [dict(self.initial_constraints)]
        for slot, value in self.goal_changes:
            nxt = dict(goals[-1])
            nxt[slot] = value
            goals.append(nxt)
        return goals


@dataclass
class UserTurn:
    intents: list
    utterance: str
    gold_actions: list[Action]
    referring: bool = False


@dataclass(frozen=True)
class InformIntent:
    slot: str
    value: str


@dataclass(frozen=True)
class RequestIntent:
    slot: str
    venue_name: str
    referring: bool
    ref_slot: str | None


def _first_unoffered(db: VenueDb, goal: dict[str, str], offered: list[str]) -> Venue | None:
    for venue in query_venues(db, goal):
        if venue.name not in offered:
            return venue
    return None


def sample_scenario(
    ontology: Ontology,
    db: VenueDb,
    rng: np.random.Generator,
    n_goal_changes: int = 2,
    generic_only: bool = False,
    turn_cap: int = DEFAULT_TURN_CAP,
    max_attempts: int = 1000,
) -> Scenario:
    """Sample a satisfiable scenario by rejection.

    Every goal stage is guaranteed at least one matching venue that has not
    been offered in an earlier stage, so a correctly tracking system always
    has something new to recommend.
    """
    if len(db) == 0:
        raise ScenarioError("venue database is empty")
    slots = list(ontology.informable_slots)

    for _ in range(max_attempts):
        k = int(rng.integers(1, min(3, len(slots)) + 1))
        chosen = [slots[i] for i in sorted(rng.choice(len(slots), size=k, replace=False))]
        constraints = {
            s: str(rng.choice(list(ontology.informable_values[s]))) for s in chosen
        }
        first = _first_unoffered(db, constraints, [])
        if first is None:
            continue

        goal = dict(constraints)
        expected = [first.name]
        changes: list[tuple[str, str]] = []
        ok = True
        for _ in range(n_goal_changes):
            found = False
            for _ in range(max_attempts):
                slot = str(rng.choice(slots))
                value = str(rng.choice(list(ontology.informable_values[slot])))
                if goal.get(slot) == value:
                    continue
                trial = dict(goal)
                trial[slot] = value
                fresh = _first_unoffered(db, trial, expected)
                if fresh is not None:
                    goal = trial
                    changes.append((slot, value))
                    expected.append(fresh.name)
                    found = True
                    break
            if not found:
                ok = False
                break
        if not ok:
            continue

        followups = _sample_followups(ontology, db, rng, expected, generic_only)
        if followups is None:
            continue
        return Scenario(
            initial_constraints=constraints,
            goal_changes=changes,
            followups=followups,
            expected_venues=expected,
            turn_cap=turn_cap,
            generic_only=generic_only,
        )
    raise ScenarioError(f"no satisfiable scenario after {max_attempts} attempts")


def _unique_properties(venue: Venue, among: list[Venue], ontology: Ontology) -> list[str]:
    """Informable slots whose value singles this venue out within ``among``."""
    out = []
    for slot in ontology.informable_slots:
        value = venue.attributes.get(slot)
        if value is None:
            continue
        if sum(1 for v in among if v.attributes.get(slot) == value) == 1:
            out.append(slot)
    return out


def _sample_followups(ontology, db, rng, expected, generic_only) -> list[Followup] | None:
    n_stages = len(expected)
    n = int(rng.integers(2, 5))
    requestables = list(ontology.requestable_slots)
    venues = [db.get(name) for name in expected]
    if any(v is None for v in venues):
        return None

    if generic_only:
        stages = [n_stages - 1] * n
    else:
        # one followup is guaranteed to reach back to an earlier venue; the
        # rest spread over all venues, so generic requests stay in the mix
        stages = [int(rng.integers(0, n_stages - 1))]
        stages.extend(int(rng.integers(0, n_stages)) for _ in range(n - 1))
        if len(set(stages)) < 2:
            stages[-1] = n_stages - 1

    followups = []
    for stage in stages:
        req_slot = str(rng.choice(requestables))
        venue = venues[stage]
        uniq = _unique_properties(venue, venues, ontology)
        uniq = [s for s in uniq if s != req_slot]  # don't identify by what is asked
        if uniq and rng.random() < 0.75:
            ref_slot = str(rng.choice(uniq))
        else:
            ref_slot = "name"
        followups.append(Followup(req_slot=req_slot, stage=stage, ref_slot=ref_slot))
    if not generic_only and len({f.stage for f in followups}) < 2:
        return None
    return followups


def gen_referring_request(
    req_slot: str,
    ref_slot: str,
    item: Venue,
    rng: np.random.Generator | None = None,
    corpus_bank=None,
) -> str:
    """A request for ``req_slot`` identifying ``item`` by its ``ref_slot`` value.

    With ``rng=None`` the canonical (first) surface is returned; otherwise one
    of the variants is sampled.  The head is retrieved from the corpus bank
    when one is supplied, otherwise from the built-in phrases.
    """
    if ref_slot not in REFERRING_TAILS:
        raise KeyError(f"no referring template for reference slot {ref_slot!r}")
    if req_slot not in REQUEST_HEADS:
        raise KeyError(f"no request template for slot {req_slot!r}")
    value = item.name if ref_slot == "name" else item.attributes[ref_slot]

    override = PAIR_OVERRIDES.get((req_slot, ref_slot))
    if rng is None:
        if override is not None:
            return override.format(value=value)
        head = REQUEST_HEADS[req_slot][0]
        tail = REFERRING_TAILS[ref_slot][0]
        return f"{head} {tail.format(value=value)}"

    heads = list(REQUEST_HEADS[req_slot])
    if corpus_bank is not None:
        retrieved = corpus_bank.request_head(req_slot, rng)
        if retrieved:
            heads.append(retrieved)
    choices = [f"{h} {t.format(value=value)}" for h in heads for t in REFERRING_TAILS[ref_slot]]
    if override is not None:
        choices.append(override.format(value=value))
    return str(choices[int(rng.integers(0, len(choices)))])


def _inform_surface(constraints: dict[str, str], rng: np.random.Generator) -> str:
    price = constraints.get("pricerange")
    food = constraints.get("food")
    area = constraints.get("area")
    noun = "restaurant" if rng.random() < 0.6 else "place"
    middle = " ".join(p for p in (price, food) if p)
    core = f"{middle} {noun}" if middle else noun
    if rng.random() < 0.2:
        phrase = f"are there any {core}s"
    else:
        prefix = INFORM_PREFIXES[int(rng.integers(0, len(INFORM_PREFIXES)))]
        phrase = f"{prefix} {_an(core)}"
    if area:
        phrase += f" in the {area}"
    return phrase


def _change_surface(slot: str, value: str, rng: np.random.Generator) -> str:
    templates = CHANGE_TEMPLATES.get(slot, ["how about {value}"])
    t = templates[int(rng.integers(0, len(templates)))]
    return t.format(value=value, a_value=_an(value))


def generate_utterance(
    intents: list,
    rng: np.random.Generator,
    corpus_bank=None,
    referent_item: Venue | None = None,
) -> str:
    """Hybrid retrieval/template surface realization for one user turn."""
    if not intents:
        raise ValueError("cannot generate an utterance for an empty intent list")
    first = intents[0]
    if isinstance(first, InformIntent):
        constraints = {i.slot: i.value for i in intents}
        if corpus_bank is not None:
            retrieved = corpus_bank.inform_surface(constraints, rng)
            if retrieved:
                return retrieved
        return _inform_surface(constraints, rng)
    assert isinstance(first, RequestIntent)
    if first.referring and referent_item is not None and first.ref_slot is not None:
        return gen_referring_request(first.slot, first.ref_slot, referent_item, rng, corpus_bank)
    if corpus_bank is not None:
        retrieved = corpus_bank.request_surface(first.slot, rng)
        if retrieved:
            return retrieved
    surfaces = GENERIC_REQUESTS[first.slot]
    return surfaces[int(rng.integers(0, len(surfaces)))]


class SimulatedUser:
    """Walks one scenario against a running system."""

    def __init__(self, scenario: Scenario, ontology: Ontology, db: VenueDb,
                 rng: np.random.Generator, corpus_bank=None,
                 patience: int = DEFAULT_PATIENCE):
        self.scenario = scenario
        self.ontology = ontology
        self.db = db
        self.rng = rng
        self.corpus_bank = corpus_bank
        self.patience = patience

        self.stage_goals = scenario.stage_goals()
        self.stage = 0
        self.followup_idx = 0
        self.pending: UserTurn | None = None
        self.pending_kind: str | None = None  # "inform" | "request"
        self.retries = 0

        self.observed: list[str] = []  # venue names in first-offer order
        self.mention_turn: dict[str, int] = {}
        self.sim_turn = 0

        self.stage_satisfied = [False] * len(self.stage_goals)
        self.stage_offer: dict[int, str] = {}
        self.followups_answered = [False] * len(scenario.followups)

        self.turns_emitted = 0
        self.finished = False

    # -- observation ---------------------------------------------------------

    def observe(self, move: SystemMove) -> None:
        """Record the system's reply and decide whether the pending intent was addressed."""
        self.sim_turn += 1
        if move.act == "offer" and move.venue is not None:
            if move.venue.name not in self.observed:
                self.observed.append(move.venue.name)
            self.mention_turn[move.venue.name] = self.sim_turn
        elif move.act == "inform":
            for _item_id, venue_name, _slot, _value in move.informs:
                self.mention_turn[venue_name] = self.sim_turn

        if self.pending is None:
            return
        if self.pending_kind == "inform":
            goal = self.stage_goals[self.stage]
            if move.act == "offer" and move.venue is not None and self._matches(move.venue, goal):
                self.stage_satisfied[self.stage] = True
                self.stage_offer[self.stage] = move.venue.name
                self.pending = None
                self.stage += 1
        elif self.pending_kind == "request":
            fu = self.scenario.followups[self.followup_idx]
            referent = self._referent_name(fu)
            if referent is not None and move.act == "inform":
                venue = self.db.get(referent)
                for _item_id, venue_name, slot, value in move.informs:
                    if (
                        venue_name == referent
                        and slot == fu.req_slot
                        and venue is not None
                        and venue.attributes.get(slot) == value
                    ):
                        self.followups_answered[self.followup_idx] = True
                        self.pending = None
                        self.followup_idx += 1
                        break

    def _matches(self, venue: Venue, goal: dict[str, str]) -> bool:
        return all(venue.attributes.get(s) == v or v == "dontcare" for s, v in goal.items())

    def _referent_name(self, fu: Followup) -> str | None:
        # the user refers to the venue that was actually offered for the stage
        return self.stage_offer.get(fu.stage)

    # -- turn generation -----------------------------------------------------

    def next_turn(self) -> UserTurn | None:
        """The next user turn, or None when the agenda is complete."""
        if self.finished:
            return None
        if self.pending is not None:
            if self.retries < self.patience:
                # not addressed: repeat verbatim or rephrase the same intent
                self.retries += 1
                if self.rng.random() < 0.5:
                    turn = self.pending
                else:
                    turn = self._rephrase(self.pending)
                self.pending = turn
                self.turns_emitted += 1
                return turn
            # out of patience: abandon the intent and move on
            self._abandon_pending()

        self.retries = 0
        if self.stage < len(self.stage_goals):
            turn = self._stage_inform_turn()
        elif self.followup_idx < len(self.scenario.followups):
            turn = self._followup_turn()
            if turn is None:
                self.finished = True
                return None
        else:
            self.finished = True
            return None
        self.pending = turn
        self.turns_emitted += 1
        return turn

    def _abandon_pending(self) -> None:
        self.pending = None
        if self.pending_kind == "inform":
            self.stage += 1
        elif self.pending_kind == "request":
            self.followup_idx += 1

    def _stage_inform_turn(self) -> UserTurn:
        self.pending_kind = "inform"
        if self.stage == 0:
            constraints = self.stage_goals[0]
            intents = [InformIntent(s, v) for s, v in constraints.items()]
            utterance = generate_utterance(intents, self.rng, self.corpus_bank)
        else:
            slot, value = self.scenario.goal_changes[self.stage - 1]
            intents = [InformIntent(slot, value)]
            utterance = _change_surface(slot, value, self.rng)
        gold: list[Action] = [InformGoal(i.slot, i.value) for i in intents]
        return UserTurn(intents=intents, utterance=utterance, gold_actions=gold)

    def _followup_turn(self) -> UserTurn | None:
        fu = self.scenario.followups[self.followup_idx]
        referent = self._referent_name(fu)
        while referent is None:
            # the stage never got an offer (tracking failure): drop this
            # followup, the dialogue can no longer fully succeed anyway
            self.followup_idx += 1
            if self.followup_idx >= len(self.scenario.followups):
                return None
            fu = self.scenario.followups[self.followup_idx]
            referent = self._referent_name(fu)
        self.pending_kind = "request"
        return self._build_request_turn(fu, referent)

    def _build_request_turn(self, fu: Followup, referent: str) -> UserTurn:
        venue = self.db.get(referent)
        assert venue is not None
        item_id = self.observed.index(referent) + 1
        most_recent = max(self.mention_turn, key=lambda n: self.mention_turn[n], default=None)
        referring = not self.scenario.generic_only and referent != most_recent
        ref_slot = self._usable_ref_slot(fu, venue) if referring else None
        intent = RequestIntent(
            slot=fu.req_slot, venue_name=referent, referring=referring, ref_slot=ref_slot
        )
        utterance = generate_utterance([intent], self.rng, self.corpus_bank, referent_item=venue)
        gold: list[Action] = [Request(item_id=item_id, slot=fu.req_slot)]
        return UserTurn(
            intents=[intent], utterance=utterance, gold_actions=gold, referring=referring
        )

    def _usable_ref_slot(self, fu: Followup, venue: Venue) -> str:
        observed_venues = [self.db.get(n) for n in self.observed if self.db.get(n) is not None]
        uniq = _unique_properties(venue, observed_venues, self.ontology)
        uniq = [s for s in uniq if s != fu.req_slot]
        if fu.ref_slot in uniq or fu.ref_slot == "name":
            return fu.ref_slot
        if uniq:
            return uniq[0]
        return "name"

    def _rephrase(self, turn: UserTurn) -> UserTurn:
        first = turn.intents[0]
        if isinstance(first, InformIntent):
            if self.stage == 0:
                utterance = generate_utterance(turn.intents, self.rng, self.corpus_bank)
            else:
                utterance = _change_surface(first.slot, first.value, self.rng)
            return UserTurn(
                intents=turn.intents,
                utterance=utterance,
                gold_actions=turn.gold_actions,
                referring=turn.referring,
            )
        # a repeated request re-derives its referring decision: what counts as
        # the most recently mentioned venue may have shifted since the attempt
        return self._build_request_turn(
            self.scenario.followups[self.followup_idx], first.venue_name
        )

    # -- outcome -------------------------------------------------------------

    @property
    def success(self) -> bool:
        return self.finished and all(self.stage_satisfied) and all(self.followups_answered)
