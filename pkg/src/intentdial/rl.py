"""Policy-gradient fine-tuning of the policy MLP alone.

The model revisits the training dialogues; at each turn it generates a
response in place of the human one and earns an immediate reward: a
smoothed sentence BLEU term against the human response plus +1/-1/0 for
flipping the dialogue's success up/down/neither when the generated turn
is substituted into the otherwise-human dialogue.  Only the policy MLP
parameters receive updates; on turns carrying a clustering label the
labeled action is forced instead of sampled.
"""

import csv
from dataclasses import dataclass

import numpy as np
import torch

from .bleu import sentence_bleu
from .evaluation import (ResponseEvidence, dialogue_success,
                         ground_truth_evidence)
from .kb import form_query
from .model import sample_intention
from .training import _finite_grads


@dataclass
class TurnReward:
    total: float
    sbleu: float
    delta: int


def generated_evidence(tokens, prepared_turn, kb):
    """Evidence for a generated response: the offered venue is the first
    KB record (file order) matching the current belief query."""
    count, hits = kb.search(form_query(prepared_turn.belief))
    entity = hits[0] if count else None
    return ResponseEvidence(tokens=tokens, entity=entity)


class RewardComputer:
    """Immediate per-turn rewards against the human dialogues."""

    def __init__(self, kb, eta=0.5):
        self.kb = kb
        self.eta = eta
        self._evidence = {}
        self._base_success = {}

    def _gt(self, record):
        if record.dialogue_id not in self._evidence:
            ev = ground_truth_evidence(record, self.kb)
            ok, _ = dialogue_success(ev, record.goal_constraints,
                                     record.goal_requests)
            self._evidence[record.dialogue_id] = ev
            self._base_success[record.dialogue_id] = ok
        return (self._evidence[record.dialogue_id],
                self._base_success[record.dialogue_id])

    def turn_reward(self, record, prepared_turn, turn_index, generated_tokens):
        gt_evidence, base = self._gt(record)
        gen = generated_evidence(generated_tokens, prepared_turn, self.kb)
        substituted = list(gt_evidence)
        substituted[turn_index] = gen
        after, _ = dialogue_success(substituted, record.goal_constraints,
                                    record.goal_requests)
        if after and not base:
            delta = 1
        elif base and not after:
            delta = -1
        else:
            delta = 0
        reference = gt_evidence[turn_index].tokens
        sbleu = sentence_bleu(generated_tokens, reference)
        return TurnReward(total=self.eta * sbleu + delta, sbleu=sbleu,
                          delta=delta)


def greedy_success(model, prepared, kb, vocab, max_len=40):
    """Success rate with argmax intentions and greedy decoding (used for
    per-epoch monitoring; final evaluation uses beam search)."""
    from .evaluation import evaluate_responses

    def respond(record, prep, i):
        turn = prep.turns[i]
        state = model.dialogue_state(turn.u_ids, turn.belief_vec, turn.match_vec)
        z = int(np.argmax(model.policy_distribution(state)))
        ids, _, _ = model.greedy_decode(z, state, max_len=max_len)
        return generated_evidence(vocab.decode(ids), turn, kb)

    report = evaluate_responses([(p.record, p) for p in prepared], respond)
    return report.success_rate


def policy_group_hashes(model):
    """Digest of every parameter group; fine-tuning must only move the
    policy MLP."""
    import hashlib

    def digest(params):
        h = hashlib.sha256()
        for p in params:
            h.update(p.detach().numpy().tobytes())
        return h.hexdigest()

    return {"decoder": digest(model.decoder_parameters()),
            "encoder": digest(model.encoder_parameters()),
            "inference": digest(model.inference_parameters()),
            "policy": digest(model.policy_parameters())}


def rl_epoch(model, prepared, rewards, vocab, config, rng, log=None):
    """One fine-tuning pass; returns (mean reward, per-kind counts)."""
    optimiser = torch.optim.Adam(list(model.policy_parameters()), lr=config.rl_lr)
    return _rl_epoch(model, prepared, rewards, vocab, config, rng, optimiser, log)


def _rl_epoch(model, prepared, rewards, vocab, config, rng, optimiser, log=None):
    total = 0.0
    n = skipped = 0
    for dialogue in prepared:
        for turn in dialogue.turns:
            try:
                state = model.dialogue_state(turn.u_ids, turn.belief_vec,
                                             turn.match_vec)
                log_pi = model.policy_log_probs(state.s)
                if turn.label is not None:
                    z = turn.label
                else:
                    z = sample_intention(torch.exp(log_pi).detach().numpy(), rng)
                if config.rl_sampled_decoding:
                    ids = model.sample_decode(z, state, rng,
                                              max_len=config.max_decode_len)
                else:
                    ids, _, _ = model.greedy_decode(z, state,
                                                    max_len=config.max_decode_len)
                reward = rewards.turn_reward(dialogue.record, turn, turn.index,
                                             vocab.decode(ids))
            except Exception as exc:   # reward failure: skip the turn, keep going
                skipped += 1
                if log:
                    log("rl: skipping turn %s/%d (%s)"
                        % (dialogue.record.dialogue_id, turn.index, exc))
                continue
            loss = -reward.total * log_pi[z]
            loss.backward()
            if _finite_grads(model.policy_parameters()):
                optimiser.step()
            else:
                skipped += 1
            model.zero_grad(set_to_none=True)
            total += reward.total
            n += 1
    return total / max(n, 1), {"turns": n, "skipped": skipped}


def finetune(model, prepared_train, prepared_valid, kb, vocab, config,
             log_csv=None, log=print):
    """Run the configured number of fine-tuning epochs over the training
    dialogues; everything outside the policy MLP stays bit-identical."""
    torch.set_num_threads(1)
    rng = np.random.default_rng(config.resolved_seed() + 1)
    rewards = RewardComputer(kb, eta=config.bleu_reward_weight)
    optimiser = torch.optim.Adam(list(model.policy_parameters()), lr=config.rl_lr)
    before = policy_group_hashes(model)
    history = []
    writer = csv_file = None
    if log_csv:
        csv_file = open(log_csv, "w", newline="")
        writer = csv.writer(csv_file)
        writer.writerow(["epoch", "mean_reward", "success_train", "success_valid"])
    try:
        for epoch in range(config.rl_epochs):
            mean_reward, counts = _rl_epoch(model, prepared_train, rewards,
                                            vocab, config, rng, optimiser, log)
            row = {"epoch": epoch, "mean_reward": mean_reward,
                   "success_train": greedy_success(model, prepared_train, kb,
                                                   vocab, config.max_decode_len),
                   "success_valid": greedy_success(model, prepared_valid, kb,
                                                   vocab, config.max_decode_len),
                   **counts}
            history.append(row)
            if writer:
                writer.writerow([epoch, "%.6f" % mean_reward,
                                 "%.6f" % row["success_train"],
                                 "%.6f" % row["success_valid"]])
                csv_file.flush()
            if log:
                log("rl epoch %d reward %.3f success train %.3f valid %.3f"
                    % (epoch, mean_reward, row["success_train"],
                       row["success_valid"]))
    finally:
        if csv_file:
            csv_file.close()
    after = policy_group_hashes(model)
    for group in ("decoder", "encoder", "inference"):
        if before[group] != after[group]:
            raise AssertionError("fine-tuning touched the %s parameters" % group)
    return history
