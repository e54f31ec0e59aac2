"""Belief tracking: per-slot value distributions maintained turn by turn.

Each informable slot has a tracker head that scores every candidate value
(plus "dontcare" and "none") from CNN features of the current user turn
and the preceding machine response, value-mention indicators recovered
from delexicalisation, and the previous belief (Jordan-style recurrence
with tied value weights, so the heads generalise across values).
Requestable slots get per-turn binary request probabilities.  Trackers
are pre-trained on the turn-level slot annotations, then frozen.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .corpus import DONTCARE, INFORMABLE_SLOTS, NONE_VALUE, REQUESTABLE_SLOTS

REQUEST_THRESHOLD = 0.5


@dataclass
class BeliefState:
    informable: dict      # slot -> np.ndarray over values + [dontcare, none]
    requested: dict       # slot -> probability the user asked this turn

    def top_value(self, slot, values=None):
        probs = self.informable[slot]
        idx = int(np.argmax(probs))
        return self._value_name(slot, idx, values)

    def _value_name(self, slot, idx, values):
        names = values if values is not None else self.value_names[slot]
        return names[idx]

    def vector(self):
        parts = [self.informable[s] for s in INFORMABLE_SLOTS]
        parts.append(np.array([self.requested[s] for s in REQUESTABLE_SLOTS],
                              dtype=np.float32))
        return np.concatenate(parts).astype(np.float32)

    def requested_slots(self):
        return {s for s, p in self.requested.items() if p >= REQUEST_THRESHOLD}


class BeliefLayout:
    """Fixed ordering of slot values; shared by tracker, states and labels."""

    def __init__(self, ontology):
        self.values = {s: list(ontology.values(s)) + [DONTCARE, NONE_VALUE]
                       for s in INFORMABLE_SLOTS}
        self.index = {s: {v: i for i, v in enumerate(vs)}
                      for s, vs in self.values.items()}

    def dim(self):
        return sum(len(v) for v in self.values.values()) + len(REQUESTABLE_SLOTS)

    def initial_belief(self):
        informable = {}
        for s, vs in self.values.items():
            p = np.zeros(len(vs), dtype=np.float32)
            p[self.index[s][NONE_VALUE]] = 1.0
            informable[s] = p
        return self.belief_state(informable, {s: 0.0 for s in REQUESTABLE_SLOTS})

    def belief_state(self, informable_arrays, requested_probs):
        state = BeliefState(informable=informable_arrays, requested=requested_probs)
        state.value_names = self.values
        return state


@dataclass
class TurnFeatures:
    user_ids: list
    resp_ids: list            # preceding machine response, [] on the first turn
    user_mentions: dict       # slot -> np.ndarray over the slot's value list
    resp_mentions: dict


def mention_vector(layout, delex, slot, lexical_map):
    """Indicator over the slot's values for surfaces recovered by
    delexicalisation."""
    vec = np.zeros(len(layout.values[slot]), dtype=np.float32)
    for surface in (lexical_map or {}).get("[v.%s]" % slot, []):
        value = delex.canonical(slot, surface)
        idx = layout.index[slot].get(value)
        if idx is not None:
            vec[idx] = 1.0
    return vec


def featurize_turns(record, vocab, layout, delex):
    """TurnFeatures for every turn of a dialogue, in order."""
    feats = []
    prev_resp, prev_map = [], {}
    for turn in record.turns:
        feats.append(TurnFeatures(
            user_ids=vocab.encode(turn.delex_user),
            resp_ids=vocab.encode(prev_resp),
            user_mentions={s: mention_vector(layout, delex, s, turn.lexical_map_user)
                           for s in INFORMABLE_SLOTS},
            resp_mentions={s: mention_vector(layout, delex, s, prev_map)
                           for s in INFORMABLE_SLOTS}))
        prev_resp, prev_map = turn.delex_response, turn.lexical_map_response
    return feats


class _TextCnn(nn.Module):
    def __init__(self, emb_dim, filters):
        super().__init__()
        self.convs = nn.ModuleList(
            [nn.Conv1d(emb_dim, filters, w) for w in (1, 2, 3)])
        self.out_dim = filters * 3

    def forward(self, emb):
        # emb: [T, E]; pad so the widest filter fits
        x = emb.t().unsqueeze(0)
        if x.size(2) < 3:
            x = nn.functional.pad(x, (0, 3 - x.size(2)))
        feats = [conv(x).amax(dim=2).squeeze(0) for conv in self.convs]
        return torch.tanh(torch.cat(feats))


class BeliefTracker(nn.Module):
    """RNN-CNN tracker over (user turn, previous response, previous belief)."""

    def __init__(self, layout, vocab_size, emb_dim=32, filters=16):
        super().__init__()
        self.layout = layout
        self.embedding = nn.Embedding(vocab_size, emb_dim)
        self.user_cnn = nn.ModuleDict({s: _TextCnn(emb_dim, filters)
                                       for s in INFORMABLE_SLOTS})
        self.resp_cnn = nn.ModuleDict({s: _TextCnn(emb_dim, filters)
                                       for s in INFORMABLE_SLOTS})
        feat_dim = filters * 3 * 2 + 5  # + mentions(2), prev belief, specials(2)
        self.value_mlp = nn.ModuleDict({
            s: nn.Sequential(nn.Linear(feat_dim, 32), nn.Tanh(), nn.Linear(32, 1))
            for s in INFORMABLE_SLOTS})
        # direct paths into the logit: fresh mention, carried-over mention,
        # previous belief; initialised so mentions win and beliefs persist
        self.skip = nn.ParameterDict({
            s: nn.Parameter(torch.tensor([4.0, 1.0, 3.0]))
            for s in INFORMABLE_SLOTS})
        self.request_cnn_user = _TextCnn(emb_dim, filters)
        self.request_cnn_resp = _TextCnn(emb_dim, filters)
        self.request_head = nn.Linear(filters * 3 * 2, len(REQUESTABLE_SLOTS))

    def _embed(self, ids):
        if not ids:
            ids = [0]
        return self.embedding(torch.tensor(ids, dtype=torch.long))

    def forward(self, feats: TurnFeatures, prev_informable):
        """Distributions for one turn.

        prev_informable: slot -> tensor over the slot's values (detached
        recurrence input).
        """
        u_emb, r_emb = self._embed(feats.user_ids), self._embed(feats.resp_ids)
        informable = {}
        for slot in INFORMABLE_SLOTS:
            values = self.layout.values[slot]
            n = len(values)
            h = torch.cat([self.user_cnn[slot](u_emb), self.resp_cnn[slot](r_emb)])
            m_u = torch.tensor(feats.user_mentions[slot])
            m_r = torch.tensor(feats.resp_mentions[slot])
            special = torch.zeros(n, 2)
            special[n - 2, 0] = 1.0  # dontcare
            special[n - 1, 1] = 1.0  # none
            prev = prev_informable[slot]
            per_value = torch.cat([h.expand(n, -1),
                                   m_u.unsqueeze(1), m_r.unsqueeze(1),
                                   prev.unsqueeze(1), special], dim=1)
            w = self.skip[slot]
            logits = (self.value_mlp[slot](per_value).squeeze(1)
                      + w[0] * m_u + w[1] * m_r + w[2] * prev)
            informable[slot] = torch.log_softmax(logits, dim=0)
        h_req = torch.cat([self.request_cnn_user(u_emb), self.request_cnn_resp(r_emb)])
        requested = torch.sigmoid(self.request_head(h_req))
        return informable, requested

    @torch.no_grad()
    def track(self, feats: TurnFeatures, prev_belief: BeliefState):
        """One belief update; returns a normalised BeliefState."""
        prev = {s: torch.tensor(prev_belief.informable[s]) for s in INFORMABLE_SLOTS}
        log_informable, requested = self.forward(feats, prev)
        informable = {s: torch.exp(log_informable[s]).numpy().astype(np.float32)
                      for s in INFORMABLE_SLOTS}
        req = {s: float(requested[i]) for i, s in enumerate(REQUESTABLE_SLOTS)}
        return self.layout.belief_state(informable, req)

    def track_dialogue(self, record, vocab, delex):
        """Belief states for every turn, starting from the initial belief."""
        states = []
        belief = self.layout.initial_belief()
        for feats in featurize_turns(record, vocab, self.layout, delex):
            belief = self.track(feats, belief)
            states.append(belief)
        return states


def cumulative_labels(record, layout):
    """Per-turn tracker targets: running informable value (with overwrite on
    goal change) and this turn's requested slots."""
    current = {s: NONE_VALUE for s in INFORMABLE_SLOTS}
    labels = []
    for turn in record.turns:
        for slot, value in turn.informed.items():
            if slot in current:
                current[slot] = value
        informable = {}
        for slot in INFORMABLE_SLOTS:
            idx = layout.index[slot].get(current[slot])
            informable[slot] = idx if idx is not None \
                else layout.index[slot][NONE_VALUE]
        requested = np.zeros(len(REQUESTABLE_SLOTS), dtype=np.float32)
        for slot in turn.requested:
            requested[REQUESTABLE_SLOTS.index(slot)] = 1.0
        labels.append((informable, requested))
    return labels


def _dialogue_loss(tracker, record, vocab, delex, layout):
    loss = torch.zeros(())
    prev = {s: torch.tensor(layout.initial_belief().informable[s])
            for s in INFORMABLE_SLOTS}
    n = 0
    for feats, (inf_labels, req_labels) in zip(
            featurize_turns(record, vocab, layout, delex),
            cumulative_labels(record, layout)):
        log_informable, requested = tracker.forward(feats, prev)
        for slot in INFORMABLE_SLOTS:
            loss = loss - log_informable[slot][inf_labels[slot]]
        loss = loss + nn.functional.binary_cross_entropy(
            requested, torch.tensor(req_labels), reduction="sum")
        prev = {s: torch.exp(log_informable[s]).detach() for s in INFORMABLE_SLOTS}
        n += 1
    return loss, n


@torch.no_grad()
def tracker_accuracy(tracker, records, vocab, delex):
    """Per-slot accuracy of the informable argmax against the annotations."""
    layout = tracker.layout
    correct = {s: 0 for s in INFORMABLE_SLOTS}
    total = 0
    req_correct = req_total = 0
    for rec in records:
        belief = layout.initial_belief()
        for feats, (inf_labels, req_labels) in zip(
                featurize_turns(rec, vocab, layout, delex),
                cumulative_labels(rec, layout)):
            belief = tracker.track(feats, belief)
            for slot in INFORMABLE_SLOTS:
                if int(np.argmax(belief.informable[slot])) == inf_labels[slot]:
                    correct[slot] += 1
            predicted = np.array([belief.requested[s] >= REQUEST_THRESHOLD
                                  for s in REQUESTABLE_SLOTS])
            req_correct += int((predicted == (req_labels > 0.5)).sum())
            req_total += len(REQUESTABLE_SLOTS)
            total += 1
    acc = {s: correct[s] / total for s in INFORMABLE_SLOTS}
    acc["requested"] = req_correct / req_total
    return acc


def pretrain_tracker(train_records, valid_records, vocab, delex, layout,
                     lr=1e-3, epochs=8, seed=0, log=print):
    """Train the tracker on annotated turns; returns (tracker, history).

    Dialogues missing annotations entirely are reported as an error.
    """
    missing = [r.dialogue_id for r in train_records
               if not any(t.informed or t.requested for t in r.turns)]
    if missing:
        raise ValueError("dialogues without slot annotations: %s" % missing[:10])
    torch.manual_seed(seed)
    tracker = BeliefTracker(layout, len(vocab))
    optimiser = torch.optim.Adam(tracker.parameters(), lr=lr)
    history = []
    for epoch in range(epochs):
        total_loss = n_turns = 0
        for rec in train_records:
            optimiser.zero_grad()
            loss, n = _dialogue_loss(tracker, rec, vocab, delex, layout)
            loss.backward()
            optimiser.step()
            total_loss += float(loss.detach())
            n_turns += n
        acc = tracker_accuracy(tracker, valid_records, vocab, delex)
        history.append({"epoch": epoch, "loss": total_loss / max(n_turns, 1),
                        "valid_accuracy": acc})
        if log:
            log("tracker epoch %d loss %.4f valid %s"
                % (epoch, total_loss / max(n_turns, 1),
                   {k: round(v, 4) for k, v in acc.items()}))
    for p in tracker.parameters():
        p.requires_grad_(False)
    tracker.eval()
    return tracker, history
