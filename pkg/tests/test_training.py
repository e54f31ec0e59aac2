import hashlib
import math

import numpy as np
import pytest
import torch

from conftest import make_toy, toy_state
from intentdial.config import Config
from intentdial.labels import cluster_responses, content_words
from intentdial.model import DialogueModel
from intentdial.training import (Baseline, Trainer, kl_divergence,
                                 learning_signal, run_training_epoch,
                                 variational_bound)

EOS = 2


class StubModel:
    """Duck-typed model with pinned distributions, for formula-level tests."""

    def __init__(self, log_q, log_pi, log_p_by_z):
        self.latent_size = len(log_q)
        self._log_q = torch.tensor(log_q, dtype=torch.float64)
        self._log_pi = torch.tensor(log_pi, dtype=torch.float64)
        self._log_p = log_p_by_z

    def posterior_log_probs(self, state, m_ids):
        return self._log_q

    def policy_log_probs(self, s):
        return self._log_pi

    def response_log_prob(self, m_ids, z, state, state_as_const=True):
        return torch.tensor(self._log_p[z], dtype=torch.float64)


class StubState:
    s = torch.zeros(1, dtype=torch.float64)


def test_bound_hand_computed_case():
    # two intentions, posterior certain on the first, uniform policy
    stub = StubModel(log_q=[0.0, -745.0], log_pi=[math.log(0.5)] * 2,
                     log_p_by_z=[-1.0, -9.0])
    got = variational_bound(stub, [EOS], StubState(), kl_weight=0.1, exact=True)
    assert got == pytest.approx(-1.0 - 0.1 * math.log(2), abs=1e-6)


def test_bound_zero_kl_when_posterior_equals_policy():
    log_u = [math.log(1 / 3)] * 3
    stub = StubModel(log_q=log_u, log_pi=log_u, log_p_by_z=[-1.0, -2.0, -3.0])
    expected = sum((1 / 3) * lp for lp in (-1.0, -2.0, -3.0))
    got = variational_bound(stub, [EOS], StubState(), kl_weight=0.7, exact=True)
    assert got == pytest.approx(expected, abs=1e-9)


def test_bound_kl_weight_zero_is_pure_reconstruction():
    stub = StubModel(log_q=[0.0, -745.0], log_pi=[math.log(0.9), math.log(0.1)],
                     log_p_by_z=[-4.0, -8.0])
    got = variational_bound(stub, [EOS], StubState(), kl_weight=0.0, exact=True)
    assert got == pytest.approx(-4.0, abs=1e-9)


def test_bound_sampled_matches_exact_for_deterministic_posterior():
    stub = StubModel(log_q=[0.0, -745.0], log_pi=[math.log(0.5)] * 2,
                     log_p_by_z=[-1.0, -9.0])
    got = variational_bound(stub, [EOS], StubState(), kl_weight=0.1,
                            rng=np.random.default_rng(0), n_samples=3)
    assert got == pytest.approx(-1.0 - 0.1 * math.log(2), abs=1e-6)


def test_kl_nonnegative_and_zero_iff_equal():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.dirichlet(np.ones(5))
        b = rng.dirichlet(np.ones(5))
        log_a = torch.log(torch.tensor(a))
        log_b = torch.log(torch.tensor(b))
        assert kl_divergence(log_a, log_b) >= -1e-12
        assert kl_divergence(log_a, log_a) == pytest.approx(0.0, abs=1e-12)


def test_learning_signal_reduces_to_log_likelihood_at_zero_weight():
    assert learning_signal(-3.0, -0.1, -2.0, 0.0) == -3.0
    assert learning_signal(-3.0, -0.5, -1.5, 0.1) == pytest.approx(-3.0 - 0.1 * 1.0)


# ---- gradient oracles -------------------------------------------------------

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


def _rel_err(a, b):
    return float(torch.norm(a - b) / max(float(torch.norm(a)),
                                         float(torch.norm(b)), 1e-12))


@pytest.fixture
def oracle_setup():
    model = make_toy(vocab_size=5, latent_size=3, seed=1)
    state = toy_state(model, u_ids=(3, 4), seed=1)
    m = [3, 4, EOS]
    q_bar = torch.tensor([0.5, 0.3, 0.2], dtype=torch.float64)
    return model, state, m, q_bar


def test_decoder_gradient_matches_finite_differences(oracle_setup):
    model, state, m, q_bar = oracle_setup
    params = list(model.decoder_parameters())

    def objective():
        with torch.no_grad():
            return sum(float(q_bar[z]) * float(model.response_log_prob(m, z, state))
                       for z in range(3))

    loss = sum(q_bar[z] * model.response_log_prob(m, z, state) for z in range(3))
    model.zero_grad()
    loss.backward()
    analytic = _flat_grads(params)
    fd = _finite_difference(objective, params)
    assert _rel_err(analytic, fd) < 1e-4


def test_policy_kl_gradient_matches_finite_differences(oracle_setup):
    model, state, m, q_bar = oracle_setup
    params = list(model.generative_parameters())
    lam = 0.1
    log_q_bar = torch.log(q_bar)

    def kl_value():
        with torch.no_grad():
            fresh = model.dialogue_state(state.u_ids, state.belief_vec,
                                         state.match_vec)
            log_pi = model.policy_log_probs(fresh.s)
            return float(torch.sum(q_bar * (log_q_bar - log_pi))) * lam

    fresh = model.dialogue_state(state.u_ids, state.belief_vec, state.match_vec)
    log_pi = model.policy_log_probs(fresh.s)
    loss = lam * torch.sum(q_bar * (log_q_bar - log_pi))
    model.zero_grad()
    loss.backward()
    analytic = _flat_grads(params)
    fd = _finite_difference(kl_value, params)
    assert _rel_err(analytic, fd) < 1e-4


def test_inference_score_function_matches_exact_gradient(oracle_setup):
    """The enumerated centered estimator equals the true gradient of the
    bound's posterior-dependent terms (and both match finite differences)."""
    model, state, m, q_bar = oracle_setup
    params = list(model.inference_parameters())
    lam = 0.1
    with torch.no_grad():
        log_p = torch.tensor([float(model.response_log_prob(m, z, state))
                              for z in range(3)], dtype=torch.float64)
        log_pi = model.policy_log_probs(state.s).detach()
    baseline_value = 0.37   # any constant: the estimator must be invariant

    def bound_value():
        with torch.no_grad():
            log_q = model.posterior_log_probs(state, m)
            q = torch.exp(log_q)
            return float(torch.sum(q * (log_p - lam * (log_q - log_pi))))

    # exact gradient by autograd on the bound
    log_q = model.posterior_log_probs(state, m)
    q = torch.exp(log_q)
    bound = torch.sum(q * (log_p - lam * (log_q - log_pi)))
    model.zero_grad()
    bound.backward()
    exact = _flat_grads(params)

    # enumerated score-function estimator with a centered signal
    log_q = model.posterior_log_probs(state, m)
    with torch.no_grad():
        q_const = torch.exp(log_q).detach()
        signals = log_p - lam * (log_q.detach() - log_pi)
    estimator = torch.sum(q_const * (signals - baseline_value) * log_q)
    model.zero_grad()
    estimator.backward()
    enumerated = _flat_grads(params)

    fd = _finite_difference(bound_value, params)
    assert _rel_err(enumerated, exact) < 1e-4
    assert _rel_err(exact, fd) < 1e-4


def test_policy_gradient_estimator_matches_exact_gradient(oracle_setup):
    """Enumerated reward-weighted score function equals the gradient of the
    expected reward for the policy subset."""
    model, state, _, _ = oracle_setup
    params = list(model.policy_parameters())
    rewards = torch.tensor([0.3, -0.8, 1.4], dtype=torch.float64)

    log_pi = model.policy_log_probs(state.s_const)
    expected_reward = torch.sum(torch.exp(log_pi) * rewards)
    model.zero_grad()
    expected_reward.backward()
    exact = _flat_grads(params)

    log_pi = model.policy_log_probs(state.s_const)
    estimator = torch.sum(torch.exp(log_pi).detach() * rewards * log_pi)
    model.zero_grad()
    estimator.backward()
    enumerated = _flat_grads(params)
    assert _rel_err(enumerated, exact) < 1e-4


# ---- step discipline ---------------------------------------------------------

def _digest(params):
    h = hashlib.sha256()
    for p in params:
        h.update(p.detach().numpy().tobytes())
    return h.hexdigest()


def _all_hashes(model, baseline):
    return {"decoder": _digest(model.decoder_parameters()),
            "generative": _digest(model.generative_parameters()),
            "inference": _digest(model.inference_parameters()),
            "baseline": _digest(baseline.parameters())}


@pytest.fixture
def trainer_setup():
    model = make_toy(vocab_size=5, latent_size=3, seed=2, dtype=torch.float32)
    baseline = Baseline(model.state_dim, hidden=4)
    config = Config(latent_size=3, num_samples=1)
    return model, baseline, config, Trainer(model, baseline, config)


def test_each_step_touches_exactly_its_group(trainer_setup):
    model, baseline, config, trainer = trainer_setup
    state = toy_state(model)
    m = [3, 4, EOS]

    before = _all_hashes(model, baseline)
    trainer.decoder_step(m, state, [1])
    after = _all_hashes(model, baseline)
    assert after["decoder"] != before["decoder"]
    assert all(after[k] == before[k] for k in ("generative", "inference", "baseline"))

    before = after
    trainer.generative_kl_step(state, np.array([0.2, 0.5, 0.3]))
    after = _all_hashes(model, baseline)
    assert after["generative"] != before["generative"]
    assert all(after[k] == before[k] for k in ("decoder", "inference", "baseline"))

    before = after
    trainer.inference_step(state, m, [0], [0.5])
    after = _all_hashes(model, baseline)
    assert after["inference"] != before["inference"]
    assert all(after[k] == before[k] for k in ("decoder", "generative", "baseline"))

    before = after
    trainer.baseline_step([0.7], state)
    after = _all_hashes(model, baseline)
    assert after["baseline"] != before["baseline"]
    assert all(after[k] == before[k] for k in ("decoder", "generative", "inference"))


def test_zero_learning_rate_leaves_decoder_unchanged():
    model = make_toy(vocab_size=5, latent_size=3, seed=3, dtype=torch.float32)
    baseline = Baseline(model.state_dim, hidden=4)
    config = Config(latent_size=3, lr_generative=0.0, lr_inference=0.0,
                    lr_baseline=0.0)
    trainer = Trainer(model, baseline, config)
    state = toy_state(model)
    before = _all_hashes(model, baseline)
    trainer.decoder_step([3, EOS], state, [0])
    trainer.generative_kl_step(state, np.array([1.0, 0.0, 0.0]))
    trainer.inference_step(state, [3, EOS], [0], [1.0])
    assert _all_hashes(model, baseline) == before


def test_kl_step_with_zero_weight_is_noop():
    model = make_toy(vocab_size=5, latent_size=3, seed=4, dtype=torch.float32)
    baseline = Baseline(model.state_dim, hidden=4)
    config = Config(latent_size=3, kl_weight=0.0)
    trainer = Trainer(model, baseline, config)
    state = toy_state(model)
    before = _digest(model.generative_parameters())
    trainer.generative_kl_step(state, np.array([0.2, 0.5, 0.3]))
    assert _digest(model.generative_parameters()) == before


def test_zero_centered_signal_leaves_inference_unchanged():
    model = make_toy(vocab_size=5, latent_size=3, seed=5, dtype=torch.float32)
    baseline = Baseline(model.state_dim, hidden=4)
    with torch.no_grad():
        baseline.constant.fill_(0.0)
        for p in baseline.mlp.parameters():
            p.zero_()
    trainer = Trainer(model, baseline, Config(latent_size=3))
    state = toy_state(model)
    before = _digest(model.inference_parameters())
    trainer.inference_step(state, [3, EOS], [1], [0.0])  # signal == baseline
    assert _digest(model.inference_parameters()) == before


def test_repeated_kl_steps_shrink_kl():
    model = make_toy(vocab_size=5, latent_size=5, seed=6, dtype=torch.float32)
    baseline = Baseline(model.state_dim, hidden=4)
    config = Config(latent_size=5, kl_weight=0.5, lr_generative=5e-2)
    trainer = Trainer(model, baseline, config)
    state = toy_state(model)
    q = np.array([0.05, 0.6, 0.1, 0.2, 0.05])
    log_q = torch.log(torch.tensor(q, dtype=torch.float32))

    def current_kl():
        fresh = model.dialogue_state(state.u_ids, state.belief_vec, state.match_vec)
        with torch.no_grad():
            return kl_divergence(log_q, model.policy_log_probs(fresh.s))

    start = current_kl()
    values = [start]
    for _ in range(60):
        fresh = model.dialogue_state(state.u_ids, state.belief_vec, state.match_vec)
        trainer.generative_kl_step(fresh, q)
        values.append(current_kl())
    assert values[-1] < 0.05 * start
    assert all(b < a for a, b in zip(values[:6], values[1:7]))


def test_decoder_overfit_increases_likelihood():
    model = make_toy(vocab_size=6, latent_size=3, seed=7, dtype=torch.float32)
    baseline = Baseline(model.state_dim, hidden=4)
    trainer = Trainer(model, baseline, Config(latent_size=3, lr_generative=1e-2))
    state = toy_state(model)
    m = [3, 4, 5, EOS]
    before = float(model.response_log_prob(m, 1, state).detach())
    for _ in range(25):
        trainer.decoder_step(m, state, [1])
    after = float(model.response_log_prob(m, 1, state).detach())
    assert after > before


# ---- baselines ---------------------------------------------------------------

def _fixed_baseline(state_dim, constant, mlp_out):
    baseline = Baseline(state_dim, hidden=4)
    with torch.no_grad():
        baseline.constant.fill_(constant)
        for p in baseline.mlp.parameters():
            p.zero_()
        baseline.mlp[-1].bias.fill_(mlp_out)
    return baseline


def test_baseline_loss_value_direct_arithmetic():
    model = make_toy(dtype=torch.float32)
    baseline = _fixed_baseline(model.state_dim, 0.3, 0.2)
    trainer = Trainer(model, baseline, Config(latent_size=3, lr_baseline=0.0))
    loss = trainer.baseline_step([1.0], toy_state(model))
    assert loss == pytest.approx(0.25, abs=1e-6)


def test_baseline_perfect_fit_zero_gradient():
    model = make_toy(dtype=torch.float32)
    baseline = _fixed_baseline(model.state_dim, 0.3, 0.2)
    trainer = Trainer(model, baseline, Config(latent_size=3))
    before = _digest(baseline.parameters())
    trainer.baseline_step([0.5], toy_state(model))   # r == b + b(s)
    assert _digest(baseline.parameters()) == before


def test_baselines_converge_to_constant_signal():
    model = make_toy(dtype=torch.float32)
    baseline = Baseline(model.state_dim, hidden=4)
    trainer = Trainer(model, baseline, Config(latent_size=3, lr_baseline=5e-2))
    state = toy_state(model)
    for _ in range(300):
        trainer.baseline_step([2.0], state)
    with torch.no_grad():
        assert float(baseline(state.s)) == pytest.approx(2.0, abs=0.05)


def test_baseline_variance_reduction_over_resamples():
    model = make_toy(vocab_size=5, latent_size=3, seed=8)
    state = toy_state(model)
    m = [3, 4, EOS]
    lam = 0.1
    with torch.no_grad():
        log_q = model.posterior_log_probs(state, m)
        log_pi = model.policy_log_probs(state.s)
        q = torch.exp(log_q).numpy()
        log_p = np.array([float(model.response_log_prob(m, z, state))
                          for z in range(3)])
        signals = log_p - lam * (log_q.numpy() - log_pi.numpy())
    fitted = float(np.sum(q * signals))   # least-squares optimum for b

    def grad_sample(z, center):
        log_q_live = model.posterior_log_probs(state, m)
        loss = (signals[z] - center) * log_q_live[z]
        model.zero_grad()
        loss.backward()
        return _flat_grads(list(model.inference_parameters())).numpy()

    rng = np.random.default_rng(0)
    draws = rng.choice(3, size=1000, p=q / q.sum())
    with_baseline = np.stack([grad_sample(z, fitted) for z in draws])
    without = np.stack([grad_sample(z, 0.0) for z in draws])
    assert with_baseline.var(axis=0).sum() <= without.var(axis=0).sum()


# ---- clustering labeler -------------------------------------------------------

def test_content_words_strip_function_words():
    assert content_words("thank you , goodbye .".split()) == {"thank", "goodbye"}
    assert content_words("what area would you like ?".split()) == \
        {"area", "would", "like"}


def test_top_cluster_is_thank_goodbye(data):
    labeled = cluster_responses(data.train, 50)
    top = labeled.clusters[0]
    assert top.key == frozenset({"thank", "goodbye"})
    assert 138 * 0.85 <= top.size <= 138 * 1.15


def test_labeled_fraction_bands(data):
    at_50 = cluster_responses(data.train, 50).labeled_fraction
    at_100 = cluster_responses(data.train, 100).labeled_fraction
    assert 0.30 <= at_50 <= 0.40
    assert 0.38 <= at_100 <= 0.48


def test_zero_latent_size_gives_empty_labels(data):
    labeled = cluster_responses(data.train[:20], 0)
    assert labeled.labels == {} and labeled.clusters == []


def test_labels_are_in_range(data):
    labeled = cluster_responses(data.train, 70)
    assert all(0 <= z < 70 for z in labeled.labels.values())


# ---- the joint objective ------------------------------------------------------

class NoSampleRng:
    """Permutation-only rng: raises if the labeled path tries to sample."""

    def __init__(self, seed=0):
        self._rng = np.random.default_rng(seed)

    def permutation(self, n):
        return self._rng.permutation(n)

    def choice(self, *a, **k):
        raise AssertionError("labeled path must not sample")


def _mini_prepared(data, config, n_dialogues=2, labeled=True):
    from intentdial.belief import pretrain_tracker
    from intentdial.training import prepare_dialogues
    records = data.train[:n_dialogues]
    tracker, _ = pretrain_tracker(records, records, data.vocab, data.delex,
                                  data.layout, epochs=1, seed=0, log=None)
    labels = cluster_responses(records, config.latent_size) if labeled else None
    return prepare_dialogues(records, tracker, data.vocab, data.delex,
                             data.kb, labels)


def test_labeled_path_never_samples(data):
    config = Config(latent_size=60)
    prepared = _mini_prepared(data, config, n_dialogues=1)
    for d in prepared:
        d.turns = [t for t in d.turns if t.label is not None]
    assert any(d.turns for d in prepared)
    model = make_toy(vocab_size=len(data.vocab), state_dim=2 * 3 + data.layout.dim() + 6,
                     latent_size=60, dtype=torch.float32)
    trainer = Trainer(model, Baseline(model.state_dim, hidden=4), config)
    run_training_epoch(trainer, prepared, NoSampleRng())


def test_epoch_objective_is_weighted_sum_of_trace(data):
    config = Config(latent_size=3, unsup_weight=0.1)
    prepared = _mini_prepared(data, config, n_dialogues=2)
    model = make_toy(vocab_size=len(data.vocab), state_dim=2 * 3 + data.layout.dim() + 6,
                     latent_size=3, dtype=torch.float32)
    trainer = Trainer(model, Baseline(model.state_dim, hidden=4), config)
    trace = []
    stats = run_training_epoch(trainer, prepared, np.random.default_rng(0),
                               trace=trace)
    l1 = sum(t["bound"] for t in trace if t["kind"] == "unlabeled")
    l2 = sum(t["log_p"] + t["log_pi"] + t["log_q"]
             for t in trace if t["kind"] == "labeled")
    assert stats["l1"] == pytest.approx(l1, rel=1e-9)
    assert stats["l2"] == pytest.approx(l2, rel=1e-9)
    assert stats["objective"] == pytest.approx(0.1 * l1 + l2, rel=1e-9)
    kinds = {t["kind"] for t in trace}
    assert kinds == {"labeled", "unlabeled"}


def test_objective_reduces_to_unsupervised_without_labels(data):
    config = Config(latent_size=20)
    prepared = _mini_prepared(data, config, n_dialogues=1, labeled=False)
    model = make_toy(vocab_size=len(data.vocab), state_dim=2 * 3 + data.layout.dim() + 6,
                     latent_size=20, dtype=torch.float32)
    trainer = Trainer(model, Baseline(model.state_dim, hidden=4), config)
    stats = run_training_epoch(trainer, prepared, np.random.default_rng(0))
    assert stats["l2"] == 0.0
    assert stats["objective"] == pytest.approx(config.unsup_weight * stats["l1"])


def test_objective_reduces_to_supervised_with_full_labels(data):
    config = Config(latent_size=20)
    prepared = _mini_prepared(data, config, n_dialogues=2)
    for d in prepared:
        for t in d.turns:
            if t.label is None:
                t.label = 0
    model = make_toy(vocab_size=len(data.vocab), state_dim=2 * 3 + data.layout.dim() + 6,
                     latent_size=20, dtype=torch.float32)
    trainer = Trainer(model, Baseline(model.state_dim, hidden=4), config)
    stats = run_training_epoch(trainer, prepared, np.random.default_rng(0))
    assert stats["l1"] == 0.0
    assert stats["objective"] == pytest.approx(stats["l2"])


def test_tracker_untouched_by_training_steps(data):
    import hashlib
    from intentdial.belief import pretrain_tracker
    from intentdial.training import prepare_dialogues

    config = Config(latent_size=10)
    records = data.train[:3]
    tracker, _ = pretrain_tracker(records, records, data.vocab, data.delex,
                                  data.layout, epochs=1, seed=0, log=None)
    prepared = prepare_dialogues(records, tracker, data.vocab, data.delex,
                                 data.kb)

    def digest():
        h = hashlib.sha256()
        for p in tracker.parameters():
            h.update(p.detach().numpy().tobytes())
        return h.hexdigest()

    before = digest()
    model = make_toy(vocab_size=len(data.vocab),
                     state_dim=2 * 3 + data.layout.dim() + 6,
                     latent_size=10, dtype=torch.float32)
    trainer = Trainer(model, Baseline(model.state_dim, hidden=4), config)
    run_training_epoch(trainer, prepared, np.random.default_rng(0))
    assert digest() == before
