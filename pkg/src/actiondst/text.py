"""Shared text utilities: tokenization, slot phrasing, lexicalized act strings."""

from __future__ import annotations

import re
import zlib
from functools import lru_cache

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_WS_RE = re.compile(r"\s+")

# function words and venue-generic nouns, excluded from cross-field overlap
# features so that overlap evidence comes from slots, values, and names
STOPWORDS = frozenset(
    """
    the a an of for to is are was what whats i me my you your it its in on at
    do does did can could would will please this that there they and or s am
    how about any some place places restaurant restaurants venue one user
    asks wants
    """.split()
)

# human-readable phrase for each slot, used in generated sentences and replies
SLOT_PHRASES = {
    "food": "food",
    "area": "area",
    "pricerange": "price range",
    "phone": "phone number",
    "addr": "address",
    "postcode": "postcode",
    "name": "name",
}


def slot_phrase(slot: str) -> str:
    return SLOT_PHRASES.get(slot, slot)


def normalize(text: str) -> str:
    """Lowercase and collapse whitespace."""
    return _WS_RE.sub(" ", text.lower()).strip()


@lru_cache(maxsize=65536)
def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase alphanumeric tokens; punctuation acts as a separator."""
    return tuple(_TOKEN_RE.findall(text.lower()))


@lru_cache(maxsize=65536)
def token_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text))


@lru_cache(maxsize=65536)
def content_token_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text)) - STOPWORDS


def stable_hash(text: str, mask: int) -> int:
    """Deterministic string hash (crc32), independent of PYTHONHASHSEED."""
    return zlib.crc32(text.encode("utf-8")) & mask


def lexicalize_act(act: str, slots: list[tuple[str, str]]) -> str:
    """Flatten one dialogue act to the canonical text form.

    ``("offer", [("name", "zizzi"), ("food", "italian")])`` becomes
    ``"offer name zizzi food italian"``.
    """
    parts = [act]
    for slot, value in slots:
        parts.append(slot)
        if value:
            parts.append(value)
    return normalize(" ".join(parts))


def lexicalize_acts(acts: list[tuple[str, list[tuple[str, str]]]]) -> str:
    return " ; ".join(lexicalize_act(a, s) for a, s in acts)


def parse_acts(acts_text: str, known_acts: frozenset[str], known_slots: frozenset[str]):
    """Parse a canonical flat acts string back into (act, [(slot, value)]) tuples.

    Values may span multiple tokens; a token is treated as a slot key only
    when it is in ``known_slots``, so venue names and addresses must not
    contain slot-name tokens (true for the shipped fixtures).
    """
    parsed = []
    for chunk in acts_text.split(";"):
        tokens = list(tokenize(chunk))
        if not tokens or tokens[0] not in known_acts:
            continue
        act = tokens[0]
        slots: list[tuple[str, list[str]]] = []
        current: list[str] | None = None
        for tok in tokens[1:]:
            if tok in known_slots:
                current = []
                slots.append((tok, current))
            elif current is not None:
                current.append(tok)
        parsed.append((act, [(s, " ".join(v)) for s, v in slots]))
    return parsed
