"""Training dataset construction.

Three builders: a baseline set from an annotated corpus (positives from the
intended actions, distractors sampled with frequency/similarity weighting);
a heuristic extension that adds generated referring-expression requests over
the full requestable x referrable slot grid; and an active-learning set that
mines hard positives and hard negatives from dialogues simulated against a
system running the baseline model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actions import Action, InformGoal, Request, action_sentence, candidate_actions
from .corpus import AnnotatedCorpus, CorpusTurn
from .evaluation import replay_dialogue, run_dialogue
from .manager import Session, SystemMove, realize
from .ontology import Ontology, Venue, VenueDb
from .scorer import ModelScorer, OracleScorer, RelevanceModel, ScorerInput, TrainingExample
from .simulator import SimulatedUser, gen_referring_request, sample_scenario
from .state import item_description

WEIGHT_FLOOR = 0.02


class DatagenError(ValueError):
    pass


@dataclass
class ActiveLearningConfig:
    t1: float = 0.99
    t2: float = 0.5
    m: int = 2
    n_dialogues: int = 5000

    def __post_init__(self) -> None:
        if not (0.0 <= self.t2 < self.t1 <= 1.0):
            raise DatagenError(f"need 0 <= T2 < T1 <= 1, got T1={self.t1} T2={self.t2}")
        if self.m < 1:
            raise DatagenError("M must be >= 1")


@dataclass
class Dataset:
    train: list[TrainingExample] = field(default_factory=list)
    dev: list[TrainingExample] = field(default_factory=list)

    def stats(self) -> dict:
        def split_stats(examples):
            n = len(examples)
            pos = sum(ex.label for ex in examples)
            sources: dict[str, int] = {}
            for ex in examples:
                sources[ex.source] = sources.get(ex.source, 0) + 1
            return {
                "n": n,
                "n_positive": pos,
                "positive_rate": pos / n if n else 0.0,
                "sources": sources,
            }

        return {"train": split_stats(self.train), "dev": split_stats(self.dev)}

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, examples in (("train.jsonl", self.train), ("dev.jsonl", self.dev)):
            tmp = out_dir / (name + ".tmp")
            with tmp.open("w", encoding="utf-8") as f:
                for ex in examples:
                    f.write(json.dumps(ex.to_json()) + "\n")
            tmp.replace(out_dir / name)
        tmp = out_dir / "stats.json.tmp"
        tmp.write_text(json.dumps(self.stats(), indent=2), encoding="utf-8")
        tmp.replace(out_dir / "stats.json")

    @classmethod
    def load(cls, out_dir: str | Path) -> "Dataset":
        out_dir = Path(out_dir)
        ds = cls()
        for name, target in (("train.jsonl", ds.train), ("dev.jsonl", ds.dev)):
            with (out_dir / name).open("r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        target.append(TrainingExample.from_json(json.loads(line)))
        return ds


class UtteranceBank:
    """Retrieval index over corpus utterances for the hybrid generator."""

    def __init__(self, corpus: AnnotatedCorpus, ontology: Ontology, db: VenueDb | None = None):
        self._informs: dict[frozenset[str], list[tuple[str, dict[str, str]]]] = {}
        self._requests: dict[str, list[str]] = {}
        venue_names = {v.name for v in db} if db is not None else set()
        for turn in corpus.turns:
            actions = turn.intended_actions
            if actions and all(isinstance(a, InformGoal) for a in actions):
                values = {a.slot: a.value for a in actions}
                if all(v in turn.user_utterance for v in values.values()):
                    key = frozenset(values)
                    self._informs.setdefault(key, []).append((turn.user_utterance, values))
            elif len(actions) == 1 and isinstance(actions[0], Request):
                utt = turn.user_utterance
                if not any(name in utt for name in venue_names):
                    self._requests.setdefault(actions[0].slot, []).append(utt)

    def inform_surface(self, constraints: dict[str, str], rng: np.random.Generator) -> str | None:
        entries = self._informs.get(frozenset(constraints))
        if not entries:
            return None
        utt, values = entries[int(rng.integers(0, len(entries)))]
        for slot, old in values.items():
            utt = utt.replace(old, constraints[slot])
        return utt

    def request_surface(self, slot: str, rng: np.random.Generator) -> str | None:
        entries = self._requests.get(slot)
        if not entries:
            return None
        return entries[int(rng.integers(0, len(entries)))]

    def request_head(self, slot: str, rng: np.random.Generator) -> str | None:
        return self.request_surface(slot, rng)


def simulate_corpus(
    ontology: Ontology,
    db: VenueDb,
    n_dialogues: int,
    seed: int,
    generic_only: bool = True,
) -> AnnotatedCorpus:
    """Annotated corpus from dialogues simulated under gold tracking.

    With ``generic_only`` the user's requests are generic and target the last
    offered venue, matching the behaviour of corpora without referring
    expressions; this serves as the baseline training corpus.
    """
    corpus = AnnotatedCorpus()
    scorer = OracleScorer()
    for i in range(n_dialogues):
        rng = np.random.Generator(np.random.PCG64(seed + i))
        scenario = sample_scenario(ontology, db, rng, generic_only=generic_only)
        sim = SimulatedUser(scenario, ontology, db, rng)
        session = Session(scorer, ontology, db)
        dialogue_id = f"sim-{seed}-{i:05d}"
        turn_idx = 0
        while True:
            turn = sim.next_turn()
            if turn is None or turn_idx >= scenario.turn_cap:
                break
            acts_before = session.state.last_system_acts
            result = session.step(turn.utterance, gold=set(turn.gold_actions))
            corpus.turns.append(
                CorpusTurn(
                    dialogue_id=dialogue_id,
                    turn_idx=turn_idx,
                    system_acts_text=acts_before,
                    user_utterance=turn.utterance,
                    intended_actions=list(turn.gold_actions),
                )
            )
            sim.observe(result.move)
            turn_idx += 1
    return corpus


def _action_freq(corpus: AnnotatedCorpus) -> dict:
    """Corpus frequency of each intended action, normalized to [0, 1].

    Requests are keyed by slot only; which item they target depends on the
    dialogue, not on the action's identity in the corpus.
    """
    counts: dict[tuple, int] = {}
    for turn in corpus.turns:
        for action in turn.intended_actions:
            key = _freq_key(action)
            counts[key] = counts.get(key, 0) + 1
    top = max(counts.values(), default=1)
    return {k: v / top for k, v in counts.items()}


def _freq_key(action: Action) -> tuple:
    if isinstance(action, InformGoal):
        return ("inform", action.slot, action.value)
    return ("request", action.slot)


def _similarity(positive: Action, distractor: Action) -> float:
    if isinstance(positive, InformGoal) and isinstance(distractor, InformGoal):
        return 1.0 if positive.slot == distractor.slot else 0.0
    if isinstance(positive, Request) and isinstance(distractor, Request):
        return 1.0 if positive.slot == distractor.slot else 0.0
    return 0.0


def sample_distractors(
    positive: Action,
    pool: list[Action],
    freq: dict,
    rng: np.random.Generator,
    k: int,
) -> list[Action]:
    """Sample ``k`` unintended actions, weighted toward frequent and similar ones."""
    if not pool:
        return []
    weights = np.array(
        [
            0.5 * freq.get(_freq_key(a), 0.0) + 0.5 * _similarity(positive, a) + WEIGHT_FLOOR
            for a in pool
        ],
        dtype=np.float64,
    )
    weights /= weights.sum()
    k = min(k, len(pool))
    picked = rng.choice(len(pool), size=k, replace=False, p=weights)
    return [pool[int(i)] for i in picked]


def _example_input(
    state_or_items, acts_text: str, utterance: str, action: Action, db: VenueDb | None = None
) -> ScorerInput:
    """Assemble the 4-part scorer input for an action in a turn context."""
    desc = ""
    if isinstance(action, Request):
        if isinstance(state_or_items, dict):
            venue = db.get(state_or_items[action.item_id]) if db else None
            if venue is None:
                raise DatagenError(f"cannot resolve venue for item {action.item_id}")
            desc = item_description(venue)
        else:
            desc = item_description(state_or_items.item(action.item_id))
    return ScorerInput(
        system_acts=acts_text,
        utterance=utterance,
        item_description=desc,
        action_sentence=action_sentence(action),
    )


def gen_baseline(
    corpus: AnnotatedCorpus,
    ontology: Ontology,
    rng: np.random.Generator,
    negatives_per_positive: int = 5,
    dev_every: int = 5,
) -> Dataset:
    """Positives from intended actions; 5 weighted distractors per positive."""
    if not corpus.turns:
        raise DatagenError("corpus is empty")
    freq = _action_freq(corpus)
    dataset = Dataset()
    for d_idx, (dialogue_id, turns) in enumerate(corpus.dialogues().items()):
        target = dataset.dev if d_idx % dev_every == 0 else dataset.train
        for state, turn in replay_dialogue(turns, ontology):
            if not turn.intended_actions:
                continue
            candidates = candidate_actions(state, ontology)
            if not candidates:
                raise DatagenError(
                    f"turn {turn.dialogue_id}:{turn.turn_idx} has no candidate actions"
                )
            gold = set(turn.intended_actions)
            pool = [a for a in candidates if a not in gold]
            for action in turn.intended_actions:
                target.append(
                    TrainingExample(
                        input=_example_input(state, turn.system_acts_text, turn.user_utterance, action),
                        label=1,
                        source="baseline",
                        dialogue_id=dialogue_id,
                        turn_idx=turn.turn_idx,
                    )
                )
                for distractor in sample_distractors(
                    action, pool, freq, rng, negatives_per_positive
                ):
                    target.append(
                        TrainingExample(
                            input=_example_input(
                                state, turn.system_acts_text, turn.user_utterance, distractor
                            ),
                            label=0,
                            source="baseline",
                            dialogue_id=dialogue_id,
                            turn_idx=turn.turn_idx,
                        )
                    )
    return _dedup(dataset)


def referrable_slots(ontology: Ontology) -> list[str]:
    return list(ontology.informable_slots) + ["name"]


def gen_ext_h(
    corpus: AnnotatedCorpus,
    ontology: Ontology,
    db: VenueDb,
    rng: np.random.Generator,
    n_train: int = 10000,
    n_dev: int = 3000,
    negatives_per_positive: int = 5,
) -> Dataset:
    """Baseline data plus generated referring-expression request positives.

    Pairs (requestable, referrable) are cycled so every combination occurs in
    both splits; each positive gets distractors that prefer the same request
    slot on the other in-context items.
    """
    base = gen_baseline(corpus, ontology, rng, negatives_per_positive)
    freq = _action_freq(corpus)
    bank = UtteranceBank(corpus, ontology, db)
    grid = [(req, ref) for req in ontology.requestable_slots for ref in referrable_slots(ontology)]
    dataset = Dataset(train=list(base.train), dev=list(base.dev))
    covered: set[tuple[str, str]] = set()
    seen_positive_keys: set = {ex.input.key() for ex in base.train + base.dev if ex.label == 1}
    for split_name, n_target, target in (
        ("train", n_train, dataset.train),
        ("dev", n_dev, dataset.dev),
    ):
        for i in range(n_target):
            req_slot, ref_slot = grid[i % len(grid)]
            covered.add((req_slot, ref_slot))
            # resample on text collisions so dedup never shrinks the split
            for _attempt in range(50):
                context, target_idx = _sample_context(db, ontology, rng, ref_slot, req_slot)
                target_venue = context[target_idx]
                utterance = gen_referring_request(req_slot, ref_slot, target_venue, rng, bank)
                _text, acts = realize(SystemMove(act="offer", venue=context[-1]))
                positive = Request(item_id=target_idx + 1, slot=req_slot)
                items = {j + 1: v.name for j, v in enumerate(context)}
                pos_input = _example_input(items, acts, utterance, positive, db)
                if pos_input.key() not in seen_positive_keys:
                    break
            seen_positive_keys.add(pos_input.key())
            dialogue_id = f"exth:{split_name}:{i:06d}"
            target.append(
                TrainingExample(
                    input=pos_input,
                    label=1,
                    source="ext_h",
                    dialogue_id=dialogue_id,
                    turn_idx=0,
                    referring=True,
                )
            )
            pool = [a for a in candidate_actions_for_items(ontology, len(context)) if a != positive]
            for distractor in sample_distractors(positive, pool, freq, rng, negatives_per_positive):
                target.append(
                    TrainingExample(
                        input=_example_input(items, acts, utterance, distractor, db),
                        label=0,
                        source="ext_h",
                        dialogue_id=dialogue_id,
                        turn_idx=0,
                    )
                )
    missing = set(grid) - covered
    if missing:
        raise DatagenError(f"uncovered referring combinations: {sorted(missing)}")
    return _dedup(dataset)


def candidate_actions_for_items(ontology: Ontology, n_items: int) -> list[Action]:
    out: list[Action] = []
    for slot in ontology.informable_slots:
        for value in ontology.informable_values[slot]:
            out.append(InformGoal(slot, value))
    for item_id in range(1, n_items + 1):
        for slot in ontology.requestable_slots:
            out.append(Request(item_id, slot))
    return out


def _sample_context(db: VenueDb, ontology: Ontology, rng: np.random.Generator,
                    ref_slot: str, req_slot: str, max_attempts: int = 200):
    """2-3 venues where the target is uniquely identified by its ref slot value."""
    venues = list(db)
    for _ in range(max_attempts):
        m = int(rng.integers(2, 4))
        idxs = rng.choice(len(venues), size=m, replace=False)
        context = [venues[int(j)] for j in idxs]
        target_idx = int(rng.integers(0, m))
        target = context[target_idx]
        if ref_slot == "name":
            return context, target_idx
        value = target.attributes.get(ref_slot)
        if value is None:
            continue
        if sum(1 for v in context if v.attributes.get(ref_slot) == value) == 1:
            return context, target_idx
    raise DatagenError(f"could not sample an unambiguous context for ref slot {ref_slot!r}")


def gen_ext_a(
    baseline_model: RelevanceModel,
    baseline_dataset: Dataset,
    ontology: Ontology,
    db: VenueDb,
    cfg: ActiveLearningConfig,
    rng: np.random.Generator,
    corpus_bank=None,
) -> Dataset:
    """Mine hard examples from simulation against the baseline-model system.

    Per turn: gold actions the baseline scores below T1 become positives, the
    top-M non-gold actions scoring above T2 become negatives, and gold actions
    of referring-expression turns become positives unconditionally.  The
    result is the baseline data plus the mined examples, deduplicated.
    """
    if baseline_model is None:
        raise DatagenError("a trained baseline model is required for mining")
    scorer = ModelScorer(baseline_model)
    seeds = rng.integers(0, 2**31 - 1, size=cfg.n_dialogues)
    mined_train: list[TrainingExample] = []
    mined_dev: list[TrainingExample] = []
    for i in range(cfg.n_dialogues):
        d_rng = np.random.Generator(np.random.PCG64(int(seeds[i])))
        result = run_dialogue(
            scorer, ontology, db, d_rng, dialogue_idx=i,
            corpus_bank=corpus_bank, collect_scores=True,
        )
        target = mined_dev if i % 5 == 0 else mined_train
        dialogue_id = f"exta:{i:05d}"
        for rec in result.turns:
            gold = set(rec.gold)
            score_of = {sa.action: sa.score for sa in rec.scored}
            for action in rec.gold:
                score = score_of.get(action)
                if score is None:
                    continue
                is_referring_request = rec.referring and isinstance(action, Request)
                if is_referring_request or score < cfg.t1:
                    target.append(
                        TrainingExample(
                            input=_example_input(
                                rec.item_venues, rec.system_acts, rec.utterance, action, db
                            ),
                            label=1,
                            source="ext_a",
                            dialogue_id=dialogue_id,
                            turn_idx=rec.turn_idx,
                            referring=is_referring_request,
                        )
                    )
            hard = [
                sa for sa in rec.scored
                if sa.action not in gold and sa.score > cfg.t2
            ]
            hard.sort(key=lambda sa: (-sa.score, repr(sa.action)))
            for sa in hard[: cfg.m]:
                target.append(
                    TrainingExample(
                        input=_example_input(
                            rec.item_venues, rec.system_acts, rec.utterance, sa.action, db
                        ),
                        label=0,
                        source="ext_a",
                        dialogue_id=dialogue_id,
                        turn_idx=rec.turn_idx,
                    )
                )
    combined = Dataset(
        train=list(baseline_dataset.train) + mined_train,
        dev=list(baseline_dataset.dev) + mined_dev,
    )
    return _dedup(combined)


def _dedup(dataset: Dataset) -> Dataset:
    """Drop duplicate (input, label) pairs; a positive wins over a conflicting negative."""

    def clean(examples: list[TrainingExample]) -> list[TrainingExample]:
        positive_keys = {ex.input.key() for ex in examples if ex.label == 1}
        seen: set = set()
        out = []
        for ex in examples:
            if ex.label == 0 and ex.input.key() in positive_keys:
                continue
            key = (ex.input.key(), ex.label)
            if key in seen:
                continue
            seen.add(key)
            out.append(ex)
        return out

    return Dataset(train=clean(dataset.train), dev=clean(dataset.dev))
