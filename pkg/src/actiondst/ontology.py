"""Domain schema and venue database.

The ontology lists the informable slots (searchable constraints), their
value inventories, and the requestable slots users can ask about for a
specific venue.  The venue database backs offers and constraint queries.
Both are immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

DONTCARE = "dontcare"


class SchemaError(ValueError):
    """Raised when an ontology or venue file violates the expected schema."""


@dataclass(frozen=True)
class Ontology:
    informable_slots: tuple[str, ...]
    informable_values: Mapping[str, tuple[str, ...]]
    requestable_slots: tuple[str, ...]
    name_slot: str = "name"

    @property
    def total_values(self) -> int:
        return sum(len(v) for v in self.informable_values.values())

    def has_value(self, slot: str, value: str) -> bool:
        if value == DONTCARE:
            return slot in self.informable_values
        return value in self._value_sets().get(slot, frozenset())

    def _value_sets(self) -> dict[str, frozenset[str]]:
        cached = getattr(self, "_sets", None)
        if cached is None:
            cached = {s: frozenset(v) for s, v in self.informable_values.items()}
            object.__setattr__(self, "_sets", cached)
        return cached

    @property
    def all_values(self) -> tuple[str, ...]:
        """Every informable value, in slot order then file order."""
        out: list[str] = []
        for slot in self.informable_slots:
            out.extend(self.informable_values[slot])
        return tuple(out)


@dataclass(frozen=True)
class Venue:
    name: str
    attributes: Mapping[str, str]

    def value_of(self, slot: str) -> str:
        if slot == "name":
            return self.name
        return self.attributes[slot]


@dataclass
class VenueDb:
    venues: list[Venue] = field(default_factory=list)

    def __post_init__(self) -> None:
        names = [v.name for v in self.venues]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate venue name in database")
        self._by_name = {v.name: v for v in self.venues}

    def __len__(self) -> int:
        return len(self.venues)

    def __iter__(self):
        return iter(self.venues)

    def get(self, name: str) -> Venue | None:
        return self._by_name.get(name)


def load_ontology(path: str | Path) -> Ontology:
    """Load and validate an ontology file.

    Value lists are lowercase-normalized and must be nonempty and free of
    duplicates; slot and value order follows the file.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"ontology file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"ontology file is not valid JSON: {exc}") from exc
    return ontology_from_dict(raw)


def ontology_from_dict(raw: dict) -> Ontology:
    if not isinstance(raw, dict) or "informable" not in raw or "requestable" not in raw:
        raise SchemaError("ontology must be an object with 'informable' and 'requestable'")
    informable = raw["informable"]
    if not isinstance(informable, dict) or not informable:
        raise SchemaError("'informable' must be a nonempty object of slot -> value list")
    slots: list[str] = []
    values: dict[str, tuple[str, ...]] = {}
    for slot, vals in informable.items():
        if not isinstance(vals, list) or not vals:
            raise SchemaError(f"empty or invalid value list for slot {slot!r}")
        normed = [str(v).strip().lower() for v in vals]
        if len(set(normed)) != len(normed):
            raise SchemaError(f"duplicate value in slot {slot!r}")
        if DONTCARE in normed:
            raise SchemaError(f"reserved value {DONTCARE!r} listed for slot {slot!r}")
        slots.append(slot)
        values[slot] = tuple(normed)
    requestable = raw["requestable"]
    if not isinstance(requestable, list) or not all(isinstance(s, str) for s in requestable):
        raise SchemaError("'requestable' must be a list of slot names")
    return Ontology(
        informable_slots=tuple(slots),
        informable_values=values,
        requestable_slots=tuple(requestable),
        name_slot=str(raw.get("name_slot", "name")),
    )


def load_venues(path: str | Path, ontology: Ontology) -> VenueDb:
    """Load the venue database, checking every informable value against the ontology."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"venue file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"venue file is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaError("venue file must be a JSON array")
    venues = []
    for i, obj in enumerate(raw):
        if "name" not in obj:
            raise SchemaError(f"venue #{i} has no name")
        attrs = {k: str(v).strip().lower() for k, v in obj.items() if k != "name"}
        for slot in ontology.informable_slots:
            if slot not in attrs:
                raise SchemaError(f"venue {obj['name']!r} missing informable slot {slot!r}")
            if not ontology.has_value(slot, attrs[slot]):
                raise SchemaError(
                    f"venue {obj['name']!r} has unknown {slot}={attrs[slot]!r}"
                )
        venues.append(Venue(name=str(obj["name"]).strip().lower(), attributes=attrs))
    return VenueDb(venues)


def query_venues(db: VenueDb, goal: Mapping[str, str]) -> list[Venue]:
    """Venues matching every constrained value; ``dontcare`` matches everything.

    Result order is database order, so queries are deterministic.
    """
    out = []
    for venue in db:
        if all(
            value == DONTCARE or venue.value_of(slot) == value
            for slot, value in goal.items()
        ):
            out.append(venue)
    return out


def default_ontology_path() -> Path:
    return Path(str(resources.files("actiondst").joinpath("data/ontology.json")))


def default_venues_path() -> Path:
    return Path(str(resources.files("actiondst").joinpath("data/venues.json")))


def load_default_domain() -> tuple[Ontology, VenueDb]:
    ontology = load_ontology(default_ontology_path())
    return ontology, load_venues(default_venues_path(), ontology)


def subset_db(db: VenueDb, names: Iterable[str]) -> VenueDb:
    wanted = set(names)
    return VenueDb([v for v in db if v.name in wanted])
