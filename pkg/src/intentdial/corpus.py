"""Corpus ingestion: dialogue records, tokenisation, delexicalisation,
splits and the vocabulary.

The corpus file is a JSON list of dialogues.  Each dialogue carries a goal
(informable constraints plus requested slots), a finished flag and a list
of exchanges; each exchange has a user turn with transcript and slot
annotations and a system turn with the response sentence.  Both the
mapping style (``{"food": "indian"}``) and the pair-list style
(``[["food", "indian"]]``) of constraint/annotation encodings are
accepted, as published corpora use either.
"""

import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field

INFORMABLE_SLOTS = ("food", "pricerange", "area")
REQUESTABLE_SLOTS = ("address", "phone", "postcode", "food", "pricerange", "area")

# Slots that can appear as placeholders in delexicalised text.
PLACEHOLDER_SLOTS = ("name", "address", "phone", "postcode", "food", "pricerange", "area")
PLACEHOLDERS = tuple("[v.%s]" % s for s in PLACEHOLDER_SLOTS)

# When two surface matches have equal token length the earlier slot in this
# list wins.  Names first: restaurant names may embed cuisine words.
SLOT_PRIORITY = ("name", "address", "phone", "postcode", "food", "pricerange", "area")

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"

DONTCARE = "dontcare"
NONE_VALUE = "none"

# Hand-curated multi-word/synonym surface forms that should delexicalise to
# an ontology value they do not literally spell.
VALUE_ALIASES = {
    "moderately priced": ("pricerange", "moderate"),
    "reasonably priced": ("pricerange", "moderate"),
    "medium priced": ("pricerange", "moderate"),
    "inexpensive": ("pricerange", "cheap"),
    "low priced": ("pricerange", "cheap"),
    "expensively priced": ("pricerange", "expensive"),
    "center": ("area", "centre"),
    "centre of town": ("area", "centre"),
    "center of town": ("area", "centre"),
    "downtown": ("area", "centre"),
}

_TOKEN_RE = re.compile(r"\[v\.[a-z]+\]|[a-z0-9]+(?:'[a-z0-9]+)?|[^\sa-z0-9]")


def tokenize(text):
    """Lowercase and split into word/punctuation tokens.

    Placeholder tokens like ``[v.food]`` survive as single tokens.
    """
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens):
    return " ".join(tokens)


class CorpusError(Exception):
    """Raised when a corpus/ontology file fails to parse or validate."""


@dataclass(frozen=True)
class Ontology:
    informable: dict
    requestable: tuple

    def __post_init__(self):
        if tuple(sorted(self.informable)) != tuple(sorted(INFORMABLE_SLOTS)):
            raise CorpusError("ontology informable slots must be exactly %s, got %s"
                              % (list(INFORMABLE_SLOTS), sorted(self.informable)))
        if tuple(sorted(self.requestable)) != tuple(sorted(REQUESTABLE_SLOTS)):
            raise CorpusError("ontology requestable slots must be exactly %s, got %s"
                              % (list(REQUESTABLE_SLOTS), sorted(self.requestable)))
        for slot, values in self.informable.items():
            for v in values:
                if not v or v != v.lower().strip():
                    raise CorpusError("ontology value %r of slot %s is not a clean "
                                      "lowercase token sequence" % (v, slot))

    def values(self, slot):
        return self.informable[slot]


@dataclass
class Turn:
    user_utterance: list
    machine_response: list
    # Informable values mentioned by the user this turn (slot -> value,
    # value may be "dontcare") and slots requested this turn.
    informed: dict = field(default_factory=dict)
    requested: list = field(default_factory=list)
    delex_user: list | None = None
    delex_response: list | None = None
    lexical_map_user: dict | None = None
    lexical_map_response: dict | None = None

    # Back-compat accessor: annotations used for tracker pre-training.
    @property
    def slot_labels(self):
        return dict(self.informed)


@dataclass
class DialogueRecord:
    dialogue_id: str
    goal_constraints: dict
    goal_requests: set
    finished: bool
    turns: list


@dataclass
class Vocabulary:
    token_to_id: dict
    id_to_token: list

    @property
    def pad_id(self):
        return self.token_to_id[PAD]

    @property
    def bos_id(self):
        return self.token_to_id[BOS]

    @property
    def eos_id(self):
        return self.token_to_id[EOS]

    @property
    def unk_id(self):
        return self.token_to_id[UNK]

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, tokens, bos=False, eos=False):
        unk = self.unk_id
        ids = [self.token_to_id.get(t, unk) for t in tokens]
        if bos:
            ids = [self.bos_id] + ids
        if eos:
            ids = ids + [self.eos_id]
        return ids

    def decode(self, ids):
        return [self.id_to_token[i] for i in ids]

    def save(self, path):
        with open(path, "w") as f:
            for i, tok in enumerate(self.id_to_token):
                f.write("%s\t%d\n" % (tok, i))

    @classmethod
    def load(cls, path):
        token_to_id = {}
        with open(path) as f:
            for line in f:
                tok, idx = line.rstrip("\n").split("\t")
                token_to_id[tok] = int(idx)
        id_to_token = [None] * len(token_to_id)
        for tok, idx in token_to_id.items():
            id_to_token[idx] = tok
        return cls(token_to_id, id_to_token)

    def content_hash(self):
        import hashlib
        h = hashlib.sha256()
        for tok in self.id_to_token:
            h.update(tok.encode())
            h.update(b"\n")
        return h.hexdigest()[:16]


def load_ontology(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise CorpusError("ontology file not found: %s" % path)
    except json.JSONDecodeError as e:
        raise CorpusError("ontology file %s is not valid JSON: %s" % (path, e))
    if "informable" not in raw or "requestable" not in raw:
        raise CorpusError("ontology file %s missing 'informable'/'requestable'" % path)
    return Ontology(informable={k: list(v) for k, v in raw["informable"].items()},
                    requestable=tuple(raw["requestable"]))


def _pairs_to_dict(obj, what, did):
    if obj is None:
        return {}
    if isinstance(obj, dict):
        return dict(obj)
    if isinstance(obj, list):
        out = {}
        for item in obj:
            if not (isinstance(item, (list, tuple)) and len(item) == 2):
                raise CorpusError("dialogue %s: malformed %s entry %r" % (did, what, item))
            out[item[0]] = item[1]
        return out
    raise CorpusError("dialogue %s: field %s has unsupported type %s"
                      % (did, what, type(obj).__name__))


def _parse_slu(slu, did):
    """Accept either {'inform': {...}, 'request': [...]} or an act list."""
    informed, requested = {}, []
    if slu is None:
        return informed, requested
    if isinstance(slu, dict) and ("inform" in slu or "request" in slu):
        informed = _pairs_to_dict(slu.get("inform"), "slu.inform", did)
        requested = list(slu.get("request", []))
        return informed, requested
    if isinstance(slu, list):
        for act in slu:
            act_type = act.get("act", "inform")
            for slot, value in (s for s in act.get("slots", [])):
                if act_type == "request" or slot == "slot":
                    requested.append(value)
                else:
                    informed[slot] = value
        return informed, requested
    raise CorpusError("dialogue %s: cannot parse slu %r" % (did, slu))


def load_corpus(corpus_path, ontology_path):
    """Read the published corpus JSON and return validated dialogue records.

    Unparsable dialogues are rejected with their ids collected into the
    raised error message.
    """
    ontology = load_ontology(ontology_path)
    try:
        with open(corpus_path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise CorpusError("corpus file not found: %s" % corpus_path)
    except json.JSONDecodeError as e:
        raise CorpusError("corpus file %s is not valid JSON: %s" % (corpus_path, e))
    if not isinstance(raw, list):
        raise CorpusError("corpus file %s: expected a top-level list of dialogues" % corpus_path)

    records, bad = [], []
    for i, d in enumerate(raw):
        did = str(d.get("dialogue_id", i))
        try:
            records.append(_parse_dialogue(d, did, ontology))
        except CorpusError as e:
            bad.append((did, str(e)))
    if bad:
        raise CorpusError("rejected %d dialogue(s): %s"
                          % (len(bad), "; ".join("%s (%s)" % b for b in bad)))
    return records


def _parse_dialogue(d, did, ontology):
    if "goal" not in d:
        raise CorpusError("dialogue %s: missing field 'goal'" % did)
    goal = d["goal"]
    constraints = _pairs_to_dict(goal.get("constraints"), "goal.constraints", did)
    for slot in constraints:
        if slot not in INFORMABLE_SLOTS:
            raise CorpusError("dialogue %s: goal constraint slot %r is not informable"
                              % (did, slot))
    requests = set(goal.get("request-slots", goal.get("request_slots", [])))
    for slot in requests:
        if slot not in REQUESTABLE_SLOTS:
            raise CorpusError("dialogue %s: goal request slot %r is not requestable"
                              % (did, slot))
    turns_raw = d.get("dial")
    if turns_raw is None:
        raise CorpusError("dialogue %s: missing field 'dial'" % did)
    turns = []
    for t in turns_raw:
        usr, sys = t.get("usr"), t.get("sys")
        if usr is None or sys is None:
            raise CorpusError("dialogue %s: exchange missing usr/sys" % did)
        informed, requested = _parse_slu(usr.get("slu"), did)
        turns.append(Turn(user_utterance=tokenize(usr.get("transcript", "")),
                          machine_response=tokenize(sys.get("sent", "")),
                          informed=informed,
                          requested=requested))
    return DialogueRecord(dialogue_id=did,
                          goal_constraints=constraints,
                          goal_requests=requests,
                          finished=bool(d.get("finished", True)),
                          turns=turns)


class Delexicaliser:
    """Replaces ontology values and KB surface forms with placeholder tokens.

    Matching is longest-match-first, scanning left to right; equal-length
    candidates are resolved by SLOT_PRIORITY.  The surface table is built
    once from the ontology, the KB entity fields and the alias list.
    """

    def __init__(self, ontology, entity_values=None, aliases=VALUE_ALIASES):
        # surface token tuple -> (slot, canonical value)
        self._table = {}
        self._canonical = {}
        for slot in INFORMABLE_SLOTS:
            for value in ontology.values(slot):
                self._add(value, slot, value)
        for surface, (slot, value) in aliases.items():
            # Alias targets must exist in the ontology to be resolvable.
            if value in ontology.values(slot):
                self._add(surface, slot, value)
        for slot, values in (entity_values or {}).items():
            for value in values:
                self._add(value, slot, value)
        self._max_len = max((len(k) for k in self._table), default=1)

    def _add(self, surface, slot, canonical):
        key = tuple(tokenize(surface))
        if not key:
            return
        prev = self._table.get(key)
        if prev is not None and SLOT_PRIORITY.index(prev[0]) <= SLOT_PRIORITY.index(slot):
            return
        self._table[key] = (slot, canonical)

    def canonical(self, slot, surface):
        """Ontology value a delexicalised surface string stands for."""
        hit = self._table.get(tuple(tokenize(surface)))
        if hit is not None and hit[0] == slot:
            return hit[1]
        return surface

    def delexicalise(self, tokens):
        """Return (delexicalised tokens, placeholder -> list of surfaces)."""
        out, lexmap = [], {}
        i, n = 0, len(tokens)
        while i < n:
            hit = None
            for L in range(min(self._max_len, n - i), 0, -1):
                key = tuple(tokens[i:i + L])
                if key in self._table:
                    hit = (L, self._table[key])
                    break
            if hit is None:
                out.append(tokens[i])
                i += 1
            else:
                L, (slot, _canonical) = hit
                ph = "[v.%s]" % slot
                out.append(ph)
                lexmap.setdefault(ph, []).append(detokenize(tokens[i:i + L]))
                i += L
        return out, lexmap


class RelexicaliseError(Exception):
    """A placeholder could not be resolved from the entity or lexical map."""

    def __init__(self, placeholder):
        self.placeholder = placeholder
        super().__init__("unresolvable placeholder %s: no offered entity or recorded "
                         "surface provides a value" % placeholder)


def relexicalise(template, entity=None, lexical_map=None):
    """Substitute placeholder tokens back with surface strings.

    ``entity`` is a KB record (mapping slot -> value); it wins over the
    recorded ``lexical_map`` surfaces, which are consumed in order of
    occurrence.  Word tokens pass through untouched.
    """
    remaining = {k: list(v) for k, v in (lexical_map or {}).items()}
    out = []
    for tok in template:
        if not (tok.startswith("[v.") and tok.endswith("]")):
            out.append(tok)
            continue
        slot = tok[3:-1]
        value = None
        if entity is not None:
            value = entity.get(slot) if isinstance(entity, dict) else getattr(entity, slot, None)
        if value is None and remaining.get(tok):
            value = remaining[tok].pop(0)
        if value is None:
            raise RelexicaliseError(tok)
        out.extend(tokenize(value))
    return out


def delexicalise_corpus(records, delex):
    """Fill the delex_* fields of every turn in place and return records."""
    for rec in records:
        for turn in rec.turns:
            turn.delex_user, turn.lexical_map_user = delex.delexicalise(turn.user_utterance)
            turn.delex_response, turn.lexical_map_response = delex.delexicalise(turn.machine_response)
    return records


def split_corpus(records, seed):
    """Deterministic dialogue-level train/valid/test split in ratio 3:1:1.

    The remainder after integer division goes to train.
    """
    if not records:
        raise ValueError("cannot split an empty corpus")
    order = list(records)
    random.Random(seed).shuffle(order)
    n = len(order)
    n_valid = n // 5
    n_test = n // 5
    n_train = n - n_valid - n_test
    train = order[:n_train]
    valid = order[n_train:n_train + n_valid]
    test = order[n_train + n_valid:]
    return train, valid, test


def save_split_manifest(path, train, valid, test):
    with open(path, "w") as f:
        json.dump({"train": [r.dialogue_id for r in train],
                   "valid": [r.dialogue_id for r in valid],
                   "test": [r.dialogue_id for r in test]}, f, indent=1)


def apply_split_manifest(path, records):
    with open(path) as f:
        manifest = json.load(f)
    by_id = {r.dialogue_id: r for r in records}
    return tuple([by_id[i] for i in manifest[part]] for part in ("train", "valid", "test"))


def build_vocab(train_records, min_count=1):
    """Frequency-filtered vocabulary over delexicalised train-split text.

    Tokens seen fewer than ``min_count`` times map to the unknown token;
    placeholders and reserved tokens are always kept.
    """
    counts = Counter()
    for rec in train_records:
        for turn in rec.turns:
            if turn.delex_user is None or turn.delex_response is None:
                raise ValueError("build_vocab requires delexicalised turns; "
                                 "run delexicalise_corpus first")
            counts.update(turn.delex_user)
            counts.update(turn.delex_response)
    id_to_token = [PAD, BOS, EOS, UNK]
    id_to_token.extend(PLACEHOLDERS)
    reserved = set(id_to_token)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in reserved),
                  key=lambda t: (-counts[t], t))
    id_to_token.extend(kept)
    return Vocabulary({t: i for i, t in enumerate(id_to_token)}, id_to_token)
