"""Binary action-relevance scorer.

The reference model is a linear classifier over hashed text features with a
sigmoid output.  It scores a 4-part input: lexicalized system acts, the user
utterance, an item description (empty for goal changes), and a generated
action sentence.  The scorer sits behind a small interface so that a heavier
model can be dropped in later; an oracle scorer backs upper-bound runs.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import zlib
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .text import content_token_set, normalize, tokenize

FORMAT_VERSION = 1
DEFAULT_HASH_BITS = 18


class ModelFormatError(ValueError):
    """Raised when a model file is corrupt or has an unsupported version."""


@dataclass(frozen=True)
class ScorerInput:
    """The 4-part text input one candidate action is scored on."""

    system_acts: str
    utterance: str
    item_description: str
    action_sentence: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "system_acts", normalize(self.system_acts))
        object.__setattr__(self, "utterance", normalize(self.utterance))
        object.__setattr__(self, "item_description", normalize(self.item_description))
        object.__setattr__(self, "action_sentence", normalize(self.action_sentence))
        if not self.action_sentence:
            raise ValueError("action_sentence must be nonempty")

    def key(self) -> tuple[str, str, str, str]:
        return (self.system_acts, self.utterance, self.item_description, self.action_sentence)


@dataclass(frozen=True)
class TrainingExample:
    input: ScorerInput
    label: int
    source: str  # baseline | ext_h | ext_a
    dialogue_id: str = ""
    turn_idx: int = 0
    referring: bool = False

    def to_json(self) -> dict:
        return {
            "sys": self.input.system_acts,
            "usr": self.input.utterance,
            "item": self.input.item_description,
            "act": self.input.action_sentence,
            "label": self.label,
            "source": self.source,
            "dialogue_id": self.dialogue_id,
            "turn_idx": self.turn_idx,
            "referring": self.referring,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingExample":
        return cls(
            input=ScorerInput(obj["sys"], obj["usr"], obj["item"], obj["act"]),
            label=int(obj["label"]),
            source=str(obj["source"]),
            dialogue_id=str(obj.get("dialogue_id", "")),
            turn_idx=int(obj.get("turn_idx", 0)),
            referring=bool(obj.get("referring", False)),
        )


def _crc(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


class Featurizer:
    """Deterministic sparse features for a :class:`ScorerInput`.

    Families: field-tagged hashed unigrams/bigrams; cross-field token-overlap
    (counts plus per-token indicators) between the utterance and the action
    sentence / item description; substring indicators for known domain values
    in the utterance; per-field item-value-in-utterance indicators; and a
    referent-match count of item description value tokens found in the
    utterance.  Hash collisions are accepted for determinism and memory.
    """

    def __init__(self, domain_values: Sequence[str], hash_bits: int = DEFAULT_HASH_BITS):
        self.domain_values = tuple(domain_values)
        self.hash_bits = int(hash_bits)
        self.dim = 1 << self.hash_bits
        self._mask = self.dim - 1
        self._field_cache: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
        self._value_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._count_idx = {
            name: _crc("count::" + name) & self._mask
            for name in ("ua_overlap", "ui_overlap", "referent_match")
        }

    def _hash(self, tag: str, token: str) -> int:
        return _crc(tag + "::" + token) & self._mask

    # context fields carry less per-feature mass than the action-side fields,
    # so the margin concentrates on features that transfer across surface
    # shapes (cross-field overlaps) instead of memorized turn wording
    CONTEXT_WEIGHT = 0.5

    def _field_ngrams(self, tag: str, text: str) -> tuple[np.ndarray, np.ndarray]:
        key = (tag, text)
        cached = self._field_cache.get(key)
        if cached is not None:
            return cached
        toks = tokenize(text)
        weight = self.CONTEXT_WEIGHT if tag[0] in "us" else 1.0
        counts: dict[int, float] = {}
        for tok in toks:
            idx = self._hash(tag + "1", tok)
            counts[idx] = counts.get(idx, 0.0) + weight
        for a, b in zip(toks, toks[1:]):
            idx = self._hash(tag + "2", a + " " + b)
            counts[idx] = counts.get(idx, 0.0) + weight
        idxs = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
        vals = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
        if len(self._field_cache) < 200_000:
            self._field_cache[key] = (idxs, vals)
        return idxs, vals

    def _utterance_value_hits(self, utterance: str, kind: str) -> tuple[np.ndarray, np.ndarray]:
        key = kind + "\x00" + utterance
        cached = self._value_cache.get(key)
        if cached is not None:
            return cached
        padded = " " + " ".join(tokenize(utterance)) + " "
        idxs = [
            self._hash("uval" + kind, value)
            for value in self.domain_values
            if " " + value + " " in padded
        ]
        arr = np.asarray(idxs, dtype=np.int64)
        vals = np.ones(len(idxs), dtype=np.float64)
        if len(self._value_cache) < 100_000:
            self._value_cache[key] = (arr, vals)
        return arr, vals

    def featurize(self, inp: ScorerInput) -> tuple[np.ndarray, np.ndarray]:
        """Sparse (indices, values); indices may repeat, dot products sum them."""
        # context features are tagged by candidate kind (goal change vs
        # request, derivable from the empty-description invariant) so that
        # training signal against one action class cannot bleed into the
        # other through shared per-turn features
        kind = "r" if inp.item_description else "g"
        parts_i: list[np.ndarray] = []
        parts_v: list[np.ndarray] = []
        for tag, text in (
            ("s" + kind, inp.system_acts),
            ("u" + kind, inp.utterance),
            ("i", inp.item_description),
            ("a", inp.action_sentence),
        ):
            i, v = self._field_ngrams(tag, text)
            parts_i.append(i)
            parts_v.append(v)

        usr = content_token_set(inp.utterance)
        act = content_token_set(inp.action_sentence)
        item = content_token_set(inp.item_description)

        extra_i: list[int] = []
        extra_v: list[float] = []

        ua = usr & act
        if ua:
            extra_i.append(self._count_idx["ua_overlap"])
            extra_v.append(float(len(ua)))
            for tok in sorted(ua):
                extra_i.append(self._hash("xua", tok))
                extra_v.append(1.0)
        ui = usr & item
        if ui:
            extra_i.append(self._count_idx["ui_overlap"])
            extra_v.append(float(len(ui)))
            for tok in sorted(ui):
                extra_i.append(self._hash("xui", tok))
                extra_v.append(1.0)

        if inp.item_description:
            fields = _description_fields(inp.item_description)
            referent_hits = 0
            for fname, value in fields:
                vtoks = content_token_set(value)
                hit = vtoks and vtoks <= usr
                if hit:
                    extra_i.append(self._hash("ifld", fname))
                    extra_v.append(1.0)
                referent_hits += len(vtoks & usr)
            if referent_hits:
                extra_i.append(self._count_idx["referent_match"])
                extra_v.append(float(referent_hits))

        vi, vv = self._utterance_value_hits(inp.utterance, kind)
        parts_i.append(vi)
        parts_v.append(vv)
        if extra_i:
            parts_i.append(np.asarray(extra_i, dtype=np.int64))
            parts_v.append(np.asarray(extra_v, dtype=np.float64))
        return np.concatenate(parts_i), np.concatenate(parts_v)

    def spec(self) -> dict:
        return {"hash_bits": self.hash_bits, "domain_values": list(self.domain_values)}

    @classmethod
    def from_spec(cls, spec: dict) -> "Featurizer":
        return cls(spec["domain_values"], int(spec["hash_bits"]))


@lru_cache(maxsize=4096)
def _description_fields(description: str) -> tuple[tuple[str, str], ...]:
    # descriptions reach the scorer lowercase-normalized, so field labels are
    # recovered by matching the known label tokens rather than by case
    fields: list[tuple[str, str]] = []
    current: str | None = None
    buf: list[str] = []
    labels = {"name", "area", "price", "food"}
    for tok in description.split():
        if tok in labels:
            if current is not None:
                fields.append((current, " ".join(buf)))
            current = tok
            buf = []
        else:
            buf.append(tok)
    if current is not None:
        fields.append((current, " ".join(buf)))
    return tuple(fields)


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-min(z, 35.0)))
    ez = math.exp(max(z, -35.0))
    return ez / (1.0 + ez)


@dataclass
class TrainConfig:
    epochs: int = 4
    learning_rate: float = 0.25
    seed: int = 0
    l2: float = 0.0
    hash_bits: int = DEFAULT_HASH_BITS
    positive_weight: float = 1.0  # >1 upweights the minority positive class


@dataclass
class RelevanceModel:
    featurizer: Featurizer
    weights: np.ndarray
    bias: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._dot_cache: dict[tuple[str, str, str, str], float] = {}

    def raw_score(self, inp: ScorerInput) -> float:
        idx, val = self.featurizer.featurize(inp)
        return float(self.weights[idx] @ val) + self.bias

    def score(self, inp: ScorerInput) -> float:
        key = inp.key()
        cached = self._dot_cache.get(key)
        if cached is None:
            cached = self.raw_score(inp)
            if len(self._dot_cache) < 500_000:
                self._dot_cache[key] = cached
        return sigmoid(cached)

    def score_many(self, inputs: Iterable[ScorerInput]) -> list[float]:
        return [self.score(i) for i in inputs]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        blob = base64.b64encode(w.tobytes()).decode("ascii")
        payload = {
            "format_version": FORMAT_VERSION,
            "featurizer": self.featurizer.spec(),
            "bias": self.bias,
            "weights_b64": blob,
            "weights_crc32": zlib.crc32(w.tobytes()),
            "meta": self.meta,
        }
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(payload), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "RelevanceModel":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
        if not isinstance(payload, dict) or "format_version" not in payload:
            raise ModelFormatError(f"corrupt model file {path}: missing header")
        if payload["format_version"] != FORMAT_VERSION:
            raise ModelFormatError(
                f"unsupported model format version {payload['format_version']}"
            )
        try:
            raw = base64.b64decode(payload["weights_b64"])
            if zlib.crc32(raw) != payload["weights_crc32"]:
                raise ModelFormatError(f"corrupt model file {path}: weight checksum mismatch")
            weights = np.frombuffer(raw, dtype=np.float64).copy()
            featurizer = Featurizer.from_spec(payload["featurizer"])
            if weights.shape[0] != featurizer.dim:
                raise ModelFormatError(f"corrupt model file {path}: weight size mismatch")
        except (KeyError, ValueError) as exc:
            raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
        return cls(
            featurizer=featurizer,
            weights=weights,
            bias=float(payload["bias"]),
            meta=dict(payload.get("meta", {})),
        )


def dataset_fingerprint(examples: Sequence[TrainingExample]) -> str:
    h = hashlib.sha256()
    for ex in examples:
        h.update(repr((ex.input.key(), ex.label)).encode("utf-8"))
    return h.hexdigest()[:16]


def train(
    examples: Sequence[TrainingExample],
    config: TrainConfig | None = None,
    domain_values: Sequence[str] = (),
    featurizer: Featurizer | None = None,
) -> RelevanceModel:
    """Train the linear relevance model with seeded SGD on the logistic loss.

    Deterministic for a fixed seed and example order: weights start at zero
    and the per-epoch shuffle comes from a PCG64 stream.
    """
    config = config or TrainConfig()
    labels = {ex.label for ex in examples}
    if labels != {0, 1}:
        raise ValueError("training data must contain both classes")
    feat = featurizer or Featurizer(domain_values, config.hash_bits)
    rows = [feat.featurize(ex.input) for ex in examples]
    y = np.array([ex.label for ex in examples], dtype=np.float64)

    w = np.zeros(feat.dim, dtype=np.float64)
    b = 0.0
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n = len(examples)
    initial_loss = _mean_logloss(w, b, rows, y)
    lr = config.learning_rate
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for j in order:
            idx, val = rows[j]
            z = float(w[idx] @ val) + b
            g = sigmoid(z) - y[j]
            if y[j] == 1.0 and config.positive_weight != 1.0:
                g *= config.positive_weight
            if config.l2:
                # decay only the touched coordinates; exact full-vector decay
                # would be O(dim) per step
                w[idx] -= lr * config.l2 * w[idx]
            np.subtract.at(w, idx, lr * g * val)
            b -= lr * g
    final_loss = _mean_logloss(w, b, rows, y)
    if not (math.isfinite(final_loss) and math.isfinite(b)):
        raise RuntimeError("training diverged to a non-finite loss")
    meta = {
        "seed": config.seed,
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "l2": config.l2,
        "dataset_fingerprint": dataset_fingerprint(examples),
        "n_examples": n,
        "initial_loss": initial_loss,
        "final_loss": final_loss,
    }
    return RelevanceModel(featurizer=feat, weights=w, bias=b, meta=meta)


def _softplus(m: float) -> float:
    # log(1 + exp(m)), stable for large |m|
    if m > 0:
        return m + math.log1p(math.exp(-m))
    return math.log1p(math.exp(m))


def _mean_logloss(w: np.ndarray, b: float, rows, y: np.ndarray) -> float:
    total = 0.0
    for j, (idx, val) in enumerate(rows):
        z = float(w[idx] @ val) + b
        # log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0
        total += _softplus(z if y[j] == 0.0 else -z)
    return total / len(rows)


def batch_loss_grad(
    weights: np.ndarray,
    bias: float,
    rows: Sequence[tuple[np.ndarray, np.ndarray]],
    labels: np.ndarray,
    l2: float = 0.0,
) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss and its exact gradient over a batch.

    Used by the finite-difference checks; training itself takes per-example
    SGD steps.
    """
    n = len(rows)
    grad_w = np.zeros_like(weights)
    grad_b = 0.0
    loss = 0.0
    for j, (idx, val) in enumerate(rows):
        z = float(weights[idx] @ val) + bias
        yj = float(labels[j])
        loss += _softplus(-z if yj == 1.0 else z)
        g = sigmoid(z) - yj
        np.add.at(grad_w, idx, g * val)
        grad_b += g
    loss = loss / n + 0.5 * l2 * float(weights @ weights)
    grad_w = grad_w / n + l2 * weights
    return loss, grad_w, grad_b / n


class OracleScorer:
    """Scores 1.0 for actions in the turn's gold set, 0.0 otherwise."""

    requires_gold = True

    def score_candidates(self, candidates, gold=None) -> list[float]:
        if gold is None:
            raise ValueError("oracle scorer needs the turn's gold action set")
        gold = set(gold)
        return [1.0 if c.action in gold else 0.0 for c in candidates]


class ModelScorer:
    """Adapter putting a trained RelevanceModel behind the turn-scoring interface."""

    requires_gold = False

    def __init__(self, model: RelevanceModel):
        self.model = model

    def score_candidates(self, candidates, gold=None) -> list[float]:
        return [self.model.score(c.scorer_input) for c in candidates]


def oracle_score(gold_actions, action) -> float:
    return 1.0 if action in set(gold_actions) else 0.0
