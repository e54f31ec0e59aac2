"""Restaurant knowledge base: loading, belief-driven queries and the
degree-of-matching vector fed to the dialogue state."""

import json
from dataclasses import dataclass

import numpy as np

from .corpus import DONTCARE, INFORMABLE_SLOTS, NONE_VALUE, CorpusError

MATCH_BINS = 6  # one-hot over counts {0, 1, 2, 3, 4, >=5}


@dataclass(frozen=True)
class KbRecord:
    name: str
    food: str
    pricerange: str
    area: str
    address: str
    phone: str | None = None
    postcode: str | None = None

    def get(self, slot):
        return getattr(self, slot, None)


class KnowledgeBase:
    """Immutable collection of restaurant records, searchable by exact
    string match on the informable slots."""

    def __init__(self, records):
        names = [r.name for r in records]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise CorpusError("duplicate restaurant names in KB: %s" % dupes)
        self.records = tuple(records)

    def __len__(self):
        return len(self.records)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise CorpusError("KB file not found: %s" % path)
        except json.JSONDecodeError as e:
            raise CorpusError("KB file %s is not valid JSON: %s" % (path, e))
        records = []
        for i, r in enumerate(raw):
            for required in ("name", "food", "pricerange", "area", "address"):
                if required not in r:
                    raise CorpusError("KB entry %d missing field %r" % (i, required))
            records.append(KbRecord(name=r["name"], food=r["food"],
                                    pricerange=r["pricerange"], area=r["area"],
                                    address=r["address"], phone=r.get("phone"),
                                    postcode=r.get("postcode")))
        return cls(records)

    def entity_values(self):
        """Surface forms per slot for building the delexicaliser table."""
        values = {"name": [], "address": [], "phone": [], "postcode": []}
        for r in self.records:
            values["name"].append(r.name)
            values["address"].append(r.address)
            if r.phone:
                values["phone"].append(r.phone)
            if r.postcode:
                values["postcode"].append(r.postcode)
        return values

    def by_name(self, name):
        for r in self.records:
            if r.name == name:
                return r
        return None

    def search(self, query):
        """All records matching every constraint; empty query matches all."""
        hits = [r for r in self.records
                if all(r.get(slot) == value for slot, value in query.items())]
        return len(hits), hits


def form_query(belief):
    """Constraints from the belief peaks: per informable slot take the
    argmax value, skipping slots peaked on "none" or "dontcare"."""
    query = {}
    for slot in INFORMABLE_SLOTS:
        value = belief.top_value(slot)
        if value not in (NONE_VALUE, DONTCARE):
            query[slot] = value
    return query


def match_bins(count):
    """Six-bin one-hot encoding of a venue match count."""
    if count < 0:
        raise ValueError("match count must be non-negative, got %d" % count)
    x = np.zeros(MATCH_BINS, dtype=np.float32)
    x[min(count, MATCH_BINS - 1)] = 1.0
    return x
