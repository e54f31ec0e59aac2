"""Semi-supervised variational training.

Unlabeled turns optimise a tempered variational bound on the response
likelihood: the decoder side learns from reconstruction under posterior
samples, the policy side minimises the (exact) KL from the posterior, and
the inference network learns from a score-function estimator whose
learning signal is centered by two trained baselines (a constant and a
state-dependent MLP).  Turns labeled by response clustering are trained
on the joint log-likelihood of response, policy and posterior at the
fixed label.  The generative and inference sides are stepped alternately
within every mini-batch (one turn).
"""

import copy
import csv
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .belief import featurize_turns
from .kb import form_query, match_bins
from .model import sample_intention


@dataclass
class PreparedTurn:
    dialogue_id: str
    index: int
    u_ids: list
    m_ids: list                # response ids ending with EOS
    belief: object             # tracked BeliefState
    belief_vec: np.ndarray
    match_vec: np.ndarray
    match_count: int
    label: int | None = None


@dataclass
class PreparedDialogue:
    record: object
    turns: list


def prepare_dialogues(records, tracker, vocab, delex, kb, labeled=None):
    """Precompute tracker beliefs, KB match vectors and token ids once;
    the trackers are frozen so these never change during training."""
    labels = labeled.labels if labeled is not None else {}
    prepared = []
    for rec in records:
        turns = []
        belief = tracker.layout.initial_belief()
        for i, feats in enumerate(featurize_turns(rec, vocab, tracker.layout, delex)):
            belief = tracker.track(feats, belief)
            count, _ = kb.search(form_query(belief))
            turn = rec.turns[i]
            turns.append(PreparedTurn(
                dialogue_id=rec.dialogue_id, index=i,
                u_ids=vocab.encode(turn.delex_user),
                m_ids=vocab.encode(turn.delex_response, eos=True),
                belief=belief, belief_vec=belief.vector(),
                match_vec=match_bins(count), match_count=count,
                label=labels.get((rec.dialogue_id, i))))
        prepared.append(PreparedDialogue(record=rec, turns=turns))
    return prepared


def flatten_turns(prepared):
    return [t for d in prepared for t in d.turns]


class Baseline(nn.Module):
    """Variance-reduction baselines: a learnable constant plus a
    state-dependent MLP; the state is treated as given data."""

    def __init__(self, state_dim, hidden=50):
        super().__init__()
        self.constant = nn.Parameter(torch.zeros(()))
        self.mlp = nn.Sequential(nn.Linear(state_dim, hidden), nn.Tanh(),
                                 nn.Linear(hidden, 1))

    def forward(self, s):
        return self.constant + self.mlp(s.detach()).squeeze()


def kl_divergence(log_q, log_pi):
    """Exact KL between two categorical distributions from log-probs."""
    q = torch.exp(log_q)
    return float(torch.sum(q * (log_q - log_pi)))


def learning_signal(log_p, log_q_z, log_pi_z, kl_weight):
    """Score-function learning signal for one posterior sample (floats)."""
    return log_p - kl_weight * (log_q_z - log_pi_z)


def variational_bound(model, m_ids, state, kl_weight, rng=None, n_samples=1,
                      exact=False, q_probs=None):
    """Tempered bound: E_q[log p(m|z,s)] - kl_weight * KL(q || pi).

    The expectation is estimated from n_samples posterior draws (or
    enumerated exactly over all intentions when exact=True); the KL term
    is always computed exactly by summing over the latent dimension.  An
    explicit distribution ``q_probs`` may stand in for the inference
    network (e.g. the exact posterior, for diagnostics).
    """
    with torch.no_grad():
        if q_probs is not None:
            q64 = torch.as_tensor(q_probs, dtype=torch.float64)
            log_q = torch.log(torch.clamp(q64, min=1e-300))
        else:
            log_q = model.posterior_log_probs(state, m_ids)
        log_pi = model.policy_log_probs(state.s).to(log_q.dtype)
        kl = kl_divergence(log_q, log_pi)
        if exact:
            q = torch.exp(log_q)
            expected = sum(float(q[z]) * float(model.response_log_prob(m_ids, z, state))
                           for z in range(model.latent_size)
                           if float(q[z]) > 0.0)
        else:
            if rng is None:
                raise ValueError("sampled bound needs an rng")
            probs = torch.exp(log_q).numpy()
            draws = [sample_intention(probs, rng) for _ in range(n_samples)]
            expected = sum(float(model.response_log_prob(m_ids, z, state))
                           for z in draws) / n_samples
    return expected - kl_weight * kl


def _finite_grads(params):
    for p in params:
        if p.grad is not None and not torch.isfinite(p.grad).all():
            return False
    return True


class Trainer:
    """Owns the four optimisers and the alternating update schedule."""

    def __init__(self, model, baseline, config):
        self.model = model
        self.baseline = baseline
        self.config = config
        self.opt_decoder = torch.optim.Adam(list(model.decoder_parameters()),
                                            lr=config.lr_generative)
        self.opt_generative = torch.optim.Adam(list(model.generative_parameters()),
                                               lr=config.lr_generative)
        self.opt_inference = torch.optim.Adam(list(model.inference_parameters()),
                                              lr=config.lr_inference)
        self.opt_baseline = torch.optim.Adam(baseline.parameters(),
                                             lr=config.lr_baseline)
        self.skipped_steps = 0

    def _zero_all(self):
        self.model.zero_grad(set_to_none=True)
        self.baseline.zero_grad(set_to_none=True)

    def _apply(self, loss, optimiser, params):
        loss.backward()
        if _finite_grads(params):
            optimiser.step()
            applied = True
        else:
            self.skipped_steps += 1
            applied = False
        self._zero_all()
        return applied

    # ---- the four update channels -----------------------------------------
    def decoder_step(self, m_ids, state, zs, weight=1.0):
        """Reconstruction ascent for the decoder side only."""
        log_ps = [self.model.response_log_prob(m_ids, z, state, state_as_const=True)
                  for z in zs]
        loss = -(weight / len(zs)) * torch.stack(log_ps).sum()
        values = [float(lp.detach()) for lp in log_ps]
        self._apply(loss, self.opt_decoder, list(self.model.decoder_parameters()))
        return values

    def generative_kl_step(self, state, q_probs, weight=1.0):
        """Move the policy toward the (fixed) posterior: exact cross-entropy
        over all intentions, scaled by the KL temper."""
        log_pi = self.model.policy_log_probs(state.s)
        q = torch.as_tensor(q_probs, dtype=log_pi.dtype)
        loss = weight * self.config.kl_weight * torch.sum(q * (-log_pi))
        self._apply(loss, self.opt_generative,
                    list(self.model.generative_parameters()))

    def inference_step(self, state, m_ids, zs, signals, weight=1.0):
        """Centered score-function step on the inference network only."""
        log_q = self.model.posterior_log_probs(state, m_ids)
        with torch.no_grad():
            centered = [sig - float(self.baseline(state.s)) for sig in signals]
        terms = [c * log_q[z] for c, z in zip(centered, zs)]
        loss = -(weight / len(zs)) * torch.stack(terms).sum()
        self._apply(loss, self.opt_inference,
                    list(self.model.inference_parameters()))

    def baseline_step(self, signals, state):
        """Regress the baselines onto the raw learning signal."""
        value = self.baseline(state.s)
        target = torch.as_tensor(signals, dtype=value.dtype)
        loss = torch.mean((target - value) ** 2)
        self._apply(loss, self.opt_baseline, list(self.baseline.parameters()))
        return float(loss.detach())

    def supervised_step(self, m_ids, state, z_hat):
        """Joint log-likelihood ascent at the clustering label."""
        log_p = self.model.response_log_prob(m_ids, z_hat, state,
                                             state_as_const=True)
        log_pi = self.model.policy_log_probs(state.s)[z_hat]
        log_q = self.model.posterior_log_probs(state, m_ids)[z_hat]
        loss = -(log_p + log_pi + log_q)
        values = (float(log_p.detach()), float(log_pi.detach()),
                  float(log_q.detach()))
        loss.backward()
        params = (list(self.model.decoder_parameters())
                  + list(self.model.generative_parameters())
                  + list(self.model.inference_parameters()))
        if _finite_grads(params):
            self.opt_decoder.step()
            self.opt_generative.step()
            self.opt_inference.step()
        else:
            self.skipped_steps += 1
        self._zero_all()
        return values

    # ---- one unlabeled turn -------------------------------------------------
    def unlabeled_turn(self, m_ids, state, rng):
        cfg = self.config
        with torch.no_grad():
            q_probs = torch.softmax(self.model.posterior_logits(state, m_ids),
                                    dim=0).numpy()
        zs = [sample_intention(q_probs, rng) for _ in range(cfg.num_samples)]
        log_ps = self.decoder_step(m_ids, state, zs, weight=cfg.unsup_weight)
        with torch.no_grad():
            log_q = self.model.posterior_log_probs(state, m_ids)
            log_pi = self.model.policy_log_probs(state.s)
            kl = kl_divergence(log_q, log_pi)
            signals = [learning_signal(lp, float(log_q[z]), float(log_pi[z]),
                                       cfg.kl_weight)
                       for lp, z in zip(log_ps, zs)]
        self.generative_kl_step(state, np.exp(log_q.numpy()),
                                weight=cfg.unsup_weight)
        self.inference_step(state, m_ids, zs, signals, weight=cfg.unsup_weight)
        self.baseline_step(signals, state)
        bound = sum(log_ps) / len(log_ps) - cfg.kl_weight * kl
        return bound, kl


def _turn_state(model, turn):
    return model.dialogue_state(turn.u_ids, turn.belief_vec, turn.match_vec)


def validation_objective(model, prepared, config):
    """Deterministic early-stopping objective on a held-out split: the
    bound with the posterior argmax standing in for the expectation on
    unlabeled turns, the joint log-likelihood on labeled ones."""
    l1 = l2 = 0.0
    with torch.no_grad():
        for turn in flatten_turns(prepared):
            state = _turn_state(model, turn)
            log_q = model.posterior_log_probs(state, turn.m_ids)
            log_pi = model.policy_log_probs(state.s)
            if turn.label is None:
                z = int(torch.argmax(log_q))
                log_p = float(model.response_log_prob(turn.m_ids, z, state))
                l1 += log_p - config.kl_weight * kl_divergence(log_q, log_pi)
            else:
                z = turn.label
                log_p = float(model.response_log_prob(turn.m_ids, z, state))
                l2 += log_p + float(log_pi[z]) + float(log_q[z])
    return config.unsup_weight * l1 + l2


def run_training_epoch(trainer, train_prepared, rng, trace=None):
    """One pass over the training turns in shuffled order; returns epoch
    statistics (objective pieces accumulated in double precision)."""
    turns = flatten_turns(train_prepared)
    order = rng.permutation(len(turns))
    l1 = l2 = kl_total = 0.0
    n_unlabeled = 0
    for idx in order:
        turn = turns[idx]
        state = _turn_state(trainer.model, turn)
        if turn.label is None:
            bound, kl = trainer.unlabeled_turn(turn.m_ids, state, rng)
            l1 += bound
            kl_total += kl
            n_unlabeled += 1
            if trace is not None:
                trace.append({"turn": (turn.dialogue_id, turn.index),
                              "kind": "unlabeled", "bound": bound, "kl": kl})
        else:
            log_p, log_pi, log_q = trainer.supervised_step(turn.m_ids, state,
                                                           turn.label)
            l2 += log_p + log_pi + log_q
            if trace is not None:
                trace.append({"turn": (turn.dialogue_id, turn.index),
                              "kind": "labeled", "log_p": log_p,
                              "log_pi": log_pi, "log_q": log_q})
    stats = {"l1": l1, "l2": l2,
             "objective": trainer.config.unsup_weight * l1 + l2,
             "mean_kl": kl_total / max(n_unlabeled, 1),
             "skipped_steps": trainer.skipped_steps}
    return stats


def train(model, baseline, train_prepared, valid_prepared, config,
          log_csv=None, log=print):
    """Full training loop with early stopping on the validation objective.

    Returns (history, best_state) where best_state holds the best model
    and baseline state dicts (already restored into the modules).
    """
    torch.set_num_threads(1)
    rng = np.random.default_rng(config.resolved_seed())
    trainer = Trainer(model, baseline, config)
    history = []
    best = {"objective": -math.inf, "epoch": -1, "model": None, "baseline": None}
    bad_epochs = 0
    writer = None
    csv_file = None
    if log_csv:
        csv_file = open(log_csv, "w", newline="")
        writer = csv.writer(csv_file)
        writer.writerow(["epoch", "l1", "l2", "objective", "valid_objective",
                         "mean_kl"])
    try:
        for epoch in range(config.epochs):
            stats = run_training_epoch(trainer, train_prepared, rng)
            stats["epoch"] = epoch
            stats["valid_objective"] = validation_objective(model, valid_prepared,
                                                            config)
            history.append(stats)
            if writer:
                writer.writerow([epoch, "%.6f" % stats["l1"], "%.6f" % stats["l2"],
                                 "%.6f" % stats["objective"],
                                 "%.6f" % stats["valid_objective"],
                                 "%.6f" % stats["mean_kl"]])
                csv_file.flush()
            if log:
                log("epoch %d objective %.2f valid %.2f kl %.3f"
                    % (epoch, stats["objective"], stats["valid_objective"],
                       stats["mean_kl"]))
            if stats["valid_objective"] > best["objective"]:
                best.update(objective=stats["valid_objective"], epoch=epoch,
                            model=copy.deepcopy(model.state_dict()),
                            baseline=copy.deepcopy(baseline.state_dict()))
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:
                    if log:
                        log("stopping: no improvement for %d epochs" % bad_epochs)
                    break
    finally:
        if csv_file:
            csv_file.close()
    if best["model"] is not None:
        model.load_state_dict(best["model"])
        baseline.load_state_dict(best["baseline"])
    return history, best
