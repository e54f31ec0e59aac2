"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them as they complete).

The expensive fixture trains the full model once (latent size 70), then
fine-tunes it; both checkpoints are evaluated with beam search on the
held-out test split.
"""

import copy
import math
import time

import numpy as np
import pytest
import torch

from conftest import make_toy, toy_state
from intentdial.config import Config
from intentdial.labels import cluster_responses
from intentdial.model import build_model
from intentdial.training import (Baseline, Trainer, prepare_dialogues,
                                 run_training_epoch, variational_bound)

torch.set_num_threads(1)


def report(name, ok, detail):
    print("\nACCEPTANCE %-24s %s  (%s)" % (name, "PASS" if ok else "FAIL", detail))
    assert ok, "%s: %s" % (name, detail)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Train, evaluate, fine-tune, evaluate again; all downstream criteria
    read from this one run."""
    from intentdial.pipeline import (evaluate_ground_truth, evaluate_model,
                                     run_finetune, run_training)
    out = tmp_path_factory.mktemp("acceptance")
    config = Config()
    t0 = time.time()
    trained = run_training(config, out / "train", log=None)
    train_seconds = time.time() - t0
    data = trained["data"]

    t0 = time.time()
    ground_truth = evaluate_ground_truth(data, data.test)
    ground_truth_seconds = time.time() - t0

    pre_rl = evaluate_model(trained["model"], trained["tracker"], data,
                            data.test, config)
    rl = run_finetune(config, trained["checkpoint"], out / "rl", log=None)
    post_rl = evaluate_model(rl["model"], rl["tracker"], rl["data"],
                             rl["data"].test, config)
    return {"config": config, "data": data, "trained": trained, "rl": rl,
            "ground_truth": ground_truth,
            "ground_truth_seconds": ground_truth_seconds,
            "train_seconds": train_seconds,
            "pre_rl": pre_rl, "post_rl": post_rl, "out": out}


def test_ground_truth_metrics(pipeline):
    gt = pipeline["ground_truth"]
    ok = (gt.bleu == pytest.approx(1.0)
          and abs(gt.success_rate - 0.916) <= 0.03
          and pipeline["ground_truth_seconds"] < 60)
    report("ground-truth-metrics", ok,
           "bleu %.3f success %.1f%% runtime %.1fs"
           % (gt.bleu, 100 * gt.success_rate, pipeline["ground_truth_seconds"]))


def test_semi_supervised_training(pipeline):
    rep = pipeline["pre_rl"]
    ok = (rep.bleu >= 0.20 and 0.50 <= rep.success_rate <= 0.75
          and pipeline["train_seconds"] <= 4 * 3600)
    report("semi-supervised-training", ok,
           "bleu %.3f success %.1f%% train %.1f min"
           % (rep.bleu, 100 * rep.success_rate, pipeline["train_seconds"] / 60))


def test_rl_finetuning(pipeline):
    pre, post = pipeline["pre_rl"], pipeline["post_rl"]
    gain = post.success_rate - pre.success_rate
    bleu_drop = pre.bleu - post.bleu
    ok = gain >= 0.10 and bleu_drop <= 0.03
    report("rl-finetuning", ok,
           "success %.1f%% -> %.1f%% (%+.1f points), bleu %.3f -> %.3f"
           % (100 * pre.success_rate, 100 * post.success_rate, 100 * gain,
              pre.bleu, post.bleu))


def test_labeler_fidelity(pipeline):
    data = pipeline["data"]
    at_50 = cluster_responses(data.train, 50)
    at_100 = cluster_responses(data.train, 100)
    top = at_50.clusters[0]
    ok = (0.30 <= at_50.labeled_fraction <= 0.40
          and 0.38 <= at_100.labeled_fraction <= 0.48
          and top.key == frozenset({"thank", "goodbye"})
          and abs(top.size - 138) <= 0.15 * 138)
    report("labeler-fidelity", ok,
           "fraction@50 %.1f%% fraction@100 %.1f%% top %s size %d"
           % (100 * at_50.labeled_fraction, 100 * at_100.labeled_fraction,
              sorted(top.key), top.size))


def test_bound_correctness():
    worst_gap, worst_eq = 0.0, 0.0
    for seed in range(100):
        model = make_toy(vocab_size=8, latent_size=5, seed=seed)
        state = toy_state(model, seed=seed)
        m = [3, 4, model.eos_id]
        marginal = model.marginal_log_likelihood(m, state)
        bound = variational_bound(model, m, state, kl_weight=1.0, exact=True)
        worst_gap = max(worst_gap, bound - marginal)
        with torch.no_grad():
            log_pi = model.policy_log_probs(state.s)
            log_ps = torch.stack([model.response_log_prob(m, z, state)
                                  for z in range(model.latent_size)])
            posterior = torch.softmax(log_pi + log_ps, dim=0).numpy()
        tight = variational_bound(model, m, state, kl_weight=1.0, exact=True,
                                  q_probs=posterior)
        worst_eq = max(worst_eq, abs(tight - marginal))
    ok = worst_gap <= 1e-10 and worst_eq <= 1e-8
    report("bound-correctness", ok,
           "max bound-marginal gap %.2e, max posterior mismatch %.2e"
           % (worst_gap, worst_eq))


def _flat_grads(params):
    return torch.cat([p.grad.reshape(-1).clone() if p.grad is not None
                      else torch.zeros(p.numel(), dtype=p.dtype)
                      for p in params])


def _finite_difference(f, params, eps=1e-5):
    out = []
    for p in params:
        flat = p.data.view(-1)
        g = torch.zeros_like(flat)
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + eps
            hi = f()
            flat[i] = orig - eps
            lo = f()
            flat[i] = orig
            g[i] = (hi - lo) / (2 * eps)
        out.append(g)
    return torch.cat(out)


def _rel(a, b):
    return float(torch.norm(a - b) / max(float(torch.norm(a)),
                                         float(torch.norm(b)), 1e-12))


def test_gradient_oracles():
    model = make_toy(vocab_size=5, latent_size=3, seed=1)
    state = toy_state(model, seed=1)
    m = [3, 4, model.eos_id]
    lam = 0.1
    q_bar = torch.tensor([0.5, 0.3, 0.2], dtype=torch.float64)
    errors = {}

    # decoder channel vs finite differences
    params = list(model.decoder_parameters())
    loss = sum(q_bar[z] * model.response_log_prob(m, z, state) for z in range(3))
    model.zero_grad()
    loss.backward()
    analytic = _flat_grads(params)

    def decoder_value():
        with torch.no_grad():
            return sum(float(q_bar[z]) * float(model.response_log_prob(m, z, state))
                       for z in range(3))

    errors["decoder"] = _rel(analytic, _finite_difference(decoder_value, params))

    # policy KL channel vs finite differences
    params = list(model.generative_parameters())
    log_q_bar = torch.log(q_bar)

    def kl_value():
        with torch.no_grad():
            fresh = model.dialogue_state(state.u_ids, state.belief_vec,
                                         state.match_vec)
            log_pi = model.policy_log_probs(fresh.s)
            return lam * float(torch.sum(q_bar * (log_q_bar - log_pi)))

    fresh = model.dialogue_state(state.u_ids, state.belief_vec, state.match_vec)
    loss = lam * torch.sum(q_bar * (log_q_bar - model.policy_log_probs(fresh.s)))
    model.zero_grad()
    loss.backward()
    errors["policy-kl"] = _rel(_flat_grads(params),
                               _finite_difference(kl_value, params))

    # inference channel: enumerated centered estimator vs exact bound gradient
    params = list(model.inference_parameters())
    with torch.no_grad():
        log_p = torch.tensor([float(model.response_log_prob(m, z, state))
                              for z in range(3)], dtype=torch.float64)
        log_pi = model.policy_log_probs(state.s).detach()
    log_q = model.posterior_log_probs(state, m)
    q = torch.exp(log_q)
    bound = torch.sum(q * (log_p - lam * (log_q - log_pi)))
    model.zero_grad()
    bound.backward()
    exact = _flat_grads(params)
    log_q = model.posterior_log_probs(state, m)
    with torch.no_grad():
        signals = log_p - lam * (log_q.detach() - log_pi)
    estimator = torch.sum(torch.exp(log_q).detach() * (signals - 0.31) * log_q)
    model.zero_grad()
    estimator.backward()
    errors["inference"] = _rel(_flat_grads(params), exact)

    ok = all(e < 1e-4 for e in errors.values())
    report("gradient-oracles", ok,
           " ".join("%s %.2e" % kv for kv in errors.items()))


def test_variance_reduction():
    model = make_toy(vocab_size=5, latent_size=3, seed=8)
    state = toy_state(model, seed=8)
    m = [3, 4, model.eos_id]
    lam = 0.1
    with torch.no_grad():
        log_q = model.posterior_log_probs(state, m)
        log_pi = model.policy_log_probs(state.s)
        q = torch.exp(log_q).numpy()
        log_p = np.array([float(model.response_log_prob(m, z, state))
                          for z in range(3)])
        signals = log_p - lam * (log_q.numpy() - log_pi.numpy())
    fitted = float(np.sum(q * signals))
    params = list(model.inference_parameters())

    def grad_sample(z, center):
        live = model.posterior_log_probs(state, m)
        loss = (signals[z] - center) * live[z]
        model.zero_grad()
        loss.backward()
        return _flat_grads(params).numpy()

    rng = np.random.default_rng(0)
    draws = rng.choice(3, size=1000, p=q / q.sum())
    var_with = np.stack([grad_sample(z, fitted) for z in draws]).var(axis=0).sum()
    var_without = np.stack([grad_sample(z, 0.0) for z in draws]).var(axis=0).sum()
    ok = var_with <= var_without
    report("variance-reduction", ok,
           "with baselines %.3e <= without %.3e" % (var_with, var_without))


def test_beam_oracle():
    import itertools
    failures = 0
    for seed in range(5):
        model = make_toy(vocab_size=4, seed=seed)
        state = toy_state(model, u_ids=(3,), seed=seed)
        max_len = 3
        ids, avg, _ = model.beam_decode(0, state, beam_width=4 ** max_len,
                                        max_len=max_len)
        best_avg, best_ids = -math.inf, None
        content = [v for v in range(model.vocab_size) if v != model.eos_id]
        with torch.no_grad():
            for length in range(0, max_len):
                for combo in itertools.product(content, repeat=length):
                    seq = list(combo) + [model.eos_id]
                    value = float(model.response_log_prob(seq, 0, state)) / len(seq)
                    if value > best_avg:
                        best_avg, best_ids = value, list(combo)
        if ids != best_ids or abs(avg - best_avg) > 1e-9:
            failures += 1
    report("beam-oracle", failures == 0, "%d/5 seeds matched" % (5 - failures))


def _digest(params):
    import hashlib
    h = hashlib.sha256()
    for p in params:
        h.update(p.detach().numpy().tobytes())
    return h.hexdigest()


def test_parameter_discipline(pipeline):
    model = make_toy(vocab_size=5, latent_size=3, seed=2, dtype=torch.float32)
    baseline = Baseline(model.state_dim, hidden=4)
    trainer = Trainer(model, baseline, Config(latent_size=3))
    state = toy_state(model)
    m = [3, 4, model.eos_id]

    def groups():
        return {"decoder": _digest(model.decoder_parameters()),
                "generative": _digest(model.generative_parameters()),
                "inference": _digest(model.inference_parameters()),
                "baseline": _digest(baseline.parameters())}

    violations = []
    before = groups()
    trainer.decoder_step(m, state, [0])
    after = groups()
    if [k for k in before if before[k] != after[k]] != ["decoder"]:
        violations.append("decoder-step")
    before = after
    trainer.generative_kl_step(state, np.array([0.2, 0.5, 0.3]))
    after = groups()
    if [k for k in before if before[k] != after[k]] != ["generative"]:
        violations.append("kl-step")
    before = after
    trainer.inference_step(state, m, [1], [0.4])
    after = groups()
    if [k for k in before if before[k] != after[k]] != ["inference"]:
        violations.append("inference-step")
    before = after
    trainer.baseline_step([0.9], state)
    after = groups()
    if [k for k in before if before[k] != after[k]] != ["baseline"]:
        violations.append("baseline-step")

    # fine-tuning already asserts internally that only the policy moved;
    # verify against the stored pre-RL checkpoint as well
    from intentdial.checkpoint import load_checkpoint
    _, pre_state, pre_tracker = load_checkpoint(pipeline["trained"]["checkpoint"])
    rl_model = pipeline["rl"]["model"]
    policy_keys = {"policy_hidden.weight", "policy_hidden.bias",
                   "policy_out.weight", "policy_out.bias"}
    for key, tensor in rl_model.state_dict().items():
        same = torch.equal(tensor, pre_state[key])
        if key in policy_keys:
            if same:
                violations.append("rl-did-not-move-%s" % key)
        elif not same:
            violations.append("rl-moved-%s" % key)
    report("parameter-discipline", not violations,
           "violations: %s" % (violations or "none"))


def test_determinism(pipeline, monkeypatch):
    monkeypatch.setenv("LIDM_SEED", "1234")
    data = pipeline["data"]
    config = Config(latent_size=20, epochs=3, tracker_epochs=1, patience=3)

    def short_training_curve():
        from intentdial.belief import pretrain_tracker
        tracker, _ = pretrain_tracker(data.train[:40], data.valid[:10],
                                      data.vocab, data.delex, data.layout,
                                      epochs=1, seed=config.resolved_seed(),
                                      log=None)
        labeled = cluster_responses(data.train[:40], config.latent_size)
        prepared = prepare_dialogues(data.train[:40], tracker, data.vocab,
                                     data.delex, data.kb, labeled)
        from intentdial.pipeline import state_dim
        model = build_model(config, data.vocab, state_dim(config, data))
        baseline = Baseline(state_dim(config, data))
        trainer = Trainer(model, baseline, config)
        rng = np.random.default_rng(config.resolved_seed())
        return [run_training_epoch(trainer, prepared, rng)["objective"]
                for _ in range(3)]

    curve_a = short_training_curve()
    curve_b = short_training_curve()
    curve_gap = max(abs(a - b) for a, b in zip(curve_a, curve_b))

    from intentdial.service import DialogueService
    transcripts = []
    for _ in range(2):
        service = DialogueService(pipeline["rl"]["model"],
                                  pipeline["rl"]["tracker"], data,
                                  pipeline["config"], sample_top_k=True)
        session = service.create_session(session_id="determinism")
        for text in ("hi , i am hungry for some indonesian",
                     "oh no . how about indian ?",
                     "east side please",
                     "yes , the address and phone number please",
                     "okay , thank you goodbye"):
            service.chat_turn(session.session_id, text)
        transcripts.append(session.view()["transcript"])
    ok = curve_gap <= 1e-6 and transcripts[0] == transcripts[1]
    report("determinism", ok,
           "max curve gap %.2e, transcripts %s" % (
               curve_gap, "identical" if transcripts[0] == transcripts[1]
               else "DIFFER"))
