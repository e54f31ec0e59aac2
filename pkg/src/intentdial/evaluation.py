"""Corpus evaluation: task success and BLEU over the held-out split.

A dialogue succeeds when some system turn offers a venue satisfying every
goal constraint and, while that venue is the current offer, every
requested slot gets supplied in some system turn.  Responses are judged
in delexicalised form: an offer is a turn mentioning the name
placeholder with a resolvable venue; a placeholder like [v.phone]
supplies the phone slot for the current offer.
"""

import json
from dataclasses import dataclass, field

from .bleu import corpus_bleu
from .corpus import REQUESTABLE_SLOTS

NAME_PLACEHOLDER = "[v.name]"


@dataclass
class ResponseEvidence:
    """What one system turn contributes to the success judgement."""
    tokens: list                      # delexicalised response tokens
    entity: object = None             # venue the turn talks about, if any


@dataclass
class EvalReport:
    success_rate: float
    bleu: float
    per_dialogue: list = field(default_factory=list)

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump({"success_rate": self.success_rate, "bleu": self.bleu,
                       "dialogues": self.per_dialogue}, f, indent=1)

    def render_table(self, model_name="model"):
        lines = ["%-28s %9s %7s" % ("Model", "Success(%)", "BLEU"),
                 "-" * 46,
                 "%-28s %9.1f %7.3f" % (model_name, 100 * self.success_rate,
                                        self.bleu)]
        return "\n".join(lines)


def ground_truth_evidence(record, kb):
    """Evidence sequence for the human responses of one dialogue."""
    evidence = []
    for turn in record.turns:
        entity = None
        names = (turn.lexical_map_response or {}).get(NAME_PLACEHOLDER, [])
        if names:
            entity = kb.by_name(names[0])
        evidence.append(ResponseEvidence(tokens=list(turn.delex_response),
                                         entity=entity))
    return evidence


def _entity_matches(entity, constraints):
    return all(entity.get(slot) == value for slot, value in constraints.items())


def dialogue_success(evidence_seq, goal_constraints, goal_requests):
    """Success boolean plus audit detail for one dialogue."""
    supplied = {}        # venue name -> slots supplied while it was current
    offered = {}         # venue name -> entity
    current = None
    for ev in evidence_seq:
        if ev.entity is not None and NAME_PLACEHOLDER in ev.tokens:
            current = ev.entity
            offered.setdefault(current.name, current)
            supplied.setdefault(current.name, set())
        if current is None:
            continue
        for slot in REQUESTABLE_SLOTS:
            if "[v.%s]" % slot in ev.tokens:
                supplied[current.name].add(slot)
    for name, entity in offered.items():
        if _entity_matches(entity, goal_constraints) \
                and set(goal_requests) <= supplied[name]:
            return True, {"matched_entity": name,
                          "supplied": sorted(supplied[name])}
    return False, {"offered": sorted(offered),
                   "supplied": {k: sorted(v) for k, v in supplied.items()}}


def evaluate_responses(dialogues, respond):
    """Run ``respond`` over every turn of every dialogue and score.

    ``dialogues`` is a list of (record, prepared) pairs where prepared
    carries per-turn model inputs; ``respond(record, prepared, i)`` must
    return a ResponseEvidence for turn i.  Success uses the generated
    turn sequence; BLEU compares generated tokens against the human
    responses.
    """
    candidates, references = [], []
    per_dialogue = []
    successes = 0
    for record, prepared in dialogues:
        evidence = []
        for i, turn in enumerate(record.turns):
            ev = respond(record, prepared, i)
            evidence.append(ev)
            candidates.append(ev.tokens)
            references.append(list(turn.delex_response))
        ok, detail = dialogue_success(evidence, record.goal_constraints,
                                      record.goal_requests)
        successes += bool(ok)
        per_dialogue.append({"dialogue_id": record.dialogue_id,
                             "success": bool(ok), **detail})
    if not candidates:
        raise ValueError("no turns to evaluate")
    return EvalReport(success_rate=successes / len(per_dialogue),
                      bleu=corpus_bleu(candidates, references),
                      per_dialogue=per_dialogue)


def echo_responder(kb):
    """Responder that plays back the human responses (gold passthrough)."""
    def respond(record, prepared, i):
        return ground_truth_evidence(record, kb)[i]
    return respond
