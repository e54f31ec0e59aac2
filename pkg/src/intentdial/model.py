"""The generative dialogue model.

A bidirectional LSTM encodes the user turn; together with the belief
vector and the KB match vector it forms the dialogue state s.  A single
hidden layer MLP maps s to a categorical distribution over discrete
response intentions; a sampled intention, one-hot encoded, is fused with
s through a sigmoid gate into a control vector that conditions an LSTM
response decoder at every step.  A separate inference network (its own
biLSTM text encoders) approximates the intention posterior given the
state and the gold response, and is used only at training time.

Parameters split into three groups: the decoder side (embeddings,
decoder cell, output projection and the control-vector maps), the
generative rest (utterance encoder and the policy MLP), and the
inference network.  Training updates them through separate channels, so
the groups are exposed explicitly.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


@dataclass
class DialogueState:
    """Everything the model conditions on at one turn."""
    u_ids: list                 # encoded user utterance (no BOS/EOS)
    belief_vec: np.ndarray
    match_vec: np.ndarray
    u: torch.Tensor             # utterance encoding, dim 2H
    s: torch.Tensor             # u ⊕ belief ⊕ match

    @property
    def s_const(self):
        """State treated as data: no gradient into the encoder."""
        return self.s.detach()


def sample_intention(probs, rng):
    """Draw an intention index from a distribution (numpy array)."""
    probs = np.asarray(probs, dtype=np.float64)
    if not np.all(np.isfinite(probs)):
        raise ValueError("degenerate intention distribution: %r" % probs[:8])
    total = probs.sum()
    if not math.isfinite(total) or total <= 0:
        raise ValueError("intention distribution does not normalise")
    return int(rng.choice(len(probs), p=probs / total))


class DialogueModel(nn.Module):
    def __init__(self, vocab_size, state_dim, bos_id, eos_id, latent_size=70,
                 hidden_size=50, embedding_size=50, control_size=50,
                 inference_hidden=100):
        super().__init__()
        self.vocab_size = vocab_size
        self.state_dim = state_dim
        self.latent_size = latent_size
        self.hidden_size = hidden_size
        self.control_size = control_size
        self.bos_id = bos_id
        self.eos_id = eos_id

        # generative rest: utterance encoder + policy MLP
        self.enc_embedding = nn.Embedding(vocab_size, embedding_size)
        self.encoder = nn.LSTM(embedding_size, hidden_size, bidirectional=True)
        self.policy_hidden = nn.Linear(state_dim, hidden_size)
        self.policy_out = nn.Linear(hidden_size, latent_size)

        # decoder side: control-vector maps + conditional LSTM
        self.gate = nn.Linear(latent_size, control_size)
        self.intent_proj = nn.Linear(latent_size, control_size, bias=False)
        self.state_proj = nn.Linear(state_dim, control_size, bias=False)
        self.dec_embedding = nn.Embedding(vocab_size, embedding_size)
        self.decoder = nn.LSTMCell(embedding_size + 2 * control_size, hidden_size)
        self.out_proj = nn.Linear(hidden_size, vocab_size)

        # inference network: own text encoders over user and response
        self.q_embedding = nn.Embedding(vocab_size, embedding_size)
        self.q_user_lstm = nn.LSTM(embedding_size, hidden_size, bidirectional=True)
        self.q_resp_lstm = nn.LSTM(embedding_size, hidden_size, bidirectional=True)
        belief_match_dim = state_dim - 2 * hidden_size
        self.q_hidden = nn.Linear(4 * hidden_size + belief_match_dim, inference_hidden)
        self.q_out = nn.Linear(inference_hidden, latent_size)

    # ---- parameter groups -------------------------------------------------
    def decoder_modules(self):
        return [self.gate, self.intent_proj, self.state_proj,
                self.dec_embedding, self.decoder, self.out_proj]

    def generative_modules(self):
        return [self.enc_embedding, self.encoder,
                self.policy_hidden, self.policy_out]

    def inference_modules(self):
        return [self.q_embedding, self.q_user_lstm, self.q_resp_lstm,
                self.q_hidden, self.q_out]

    def decoder_parameters(self):
        for m in self.decoder_modules():
            yield from m.parameters()

    def generative_parameters(self):
        for m in self.generative_modules():
            yield from m.parameters()

    def inference_parameters(self):
        for m in self.inference_modules():
            yield from m.parameters()

    def policy_parameters(self):
        yield from self.policy_hidden.parameters()
        yield from self.policy_out.parameters()

    def encoder_parameters(self):
        yield from self.enc_embedding.parameters()
        yield from self.encoder.parameters()

    @property
    def dtype(self):
        return self.out_proj.weight.dtype

    def _tensor(self, array):
        return torch.as_tensor(array, dtype=self.dtype)

    # ---- representation construction --------------------------------------
    def _bilstm(self, lstm, embedding, ids):
        if not ids:
            ids = [self.bos_id]
        emb = embedding(torch.tensor(ids, dtype=torch.long)).unsqueeze(1)
        _, (h, _) = lstm(emb)
        return torch.cat([h[0, 0], h[1, 0]])

    def encode_utterance(self, ids):
        """Forward and backward final hidden states, concatenated."""
        for i in ids:
            if not 0 <= i < self.vocab_size:
                raise ValueError("token id %d out of range" % i)
        return self._bilstm(self.encoder, self.enc_embedding, list(ids))

    def dialogue_state(self, u_ids, belief_vec, match_vec):
        u = self.encode_utterance(u_ids)
        s = torch.cat([u, self._tensor(belief_vec), self._tensor(match_vec)])
        return DialogueState(u_ids=list(u_ids), belief_vec=belief_vec,
                             match_vec=match_vec, u=u, s=s)

    # ---- policy and inference distributions --------------------------------
    def policy_logits(self, s):
        return self.policy_out(torch.tanh(self.policy_hidden(s)))

    def policy_log_probs(self, s):
        return torch.log_softmax(self.policy_logits(s), dim=0)

    def policy_distribution(self, state):
        """Intention probabilities as a numpy array (no gradients)."""
        with torch.no_grad():
            return torch.softmax(self.policy_logits(state.s), dim=0).numpy()

    def posterior_logits(self, state, m_ids):
        u = self._bilstm(self.q_user_lstm, self.q_embedding, list(state.u_ids))
        m = self._bilstm(self.q_resp_lstm, self.q_embedding, list(m_ids))
        joint = torch.cat([self._tensor(state.belief_vec),
                           self._tensor(state.match_vec), u, m])
        return self.q_out(torch.tanh(self.q_hidden(joint)))

    def posterior_log_probs(self, state, m_ids):
        return torch.log_softmax(self.posterior_logits(state, m_ids), dim=0)

    def posterior_distribution(self, state, m_ids):
        with torch.no_grad():
            return torch.softmax(self.posterior_logits(state, m_ids), dim=0).numpy()

    # ---- control vector and decoding ---------------------------------------
    def control_vector(self, z, s):
        """Gated fusion of the one-hot intention with the state."""
        if not 0 <= z < self.latent_size:
            raise ValueError("intention index %d out of range" % z)
        intent_half = self.intent_proj.weight[:, z]
        gate = torch.sigmoid(self.gate.weight[:, z] + self.gate.bias)
        state_half = gate * self.state_proj(s)
        return torch.cat([intent_half, state_half])

    def _step(self, token_id, d, hc):
        emb = self.dec_embedding(torch.tensor([token_id]))
        h, c = self.decoder(torch.cat([emb[0], d]).unsqueeze(0), hc)
        return torch.log_softmax(self.out_proj(h[0]), dim=0), (h, c)

    def response_log_prob(self, m_ids, z, state, state_as_const=True):
        """Log-likelihood of a response (ending in EOS) under intention z."""
        if not m_ids or m_ids[-1] != self.eos_id:
            raise ValueError("response must end with the end-of-sentence id")
        for i in m_ids:
            if not 0 <= i < self.vocab_size:
                raise ValueError("token id %d out of range" % i)
        s = state.s_const if state_as_const else state.s
        d = self.control_vector(z, s)
        total = None
        prev, hc = self.bos_id, None
        for target in m_ids:
            log_probs, hc = self._step(prev, d, hc)
            term = log_probs[target]
            total = term if total is None else total + term
            prev = target
        return total

    def marginal_log_likelihood(self, m_ids, state):
        """Exact log p(m|s): sum over all intentions (diagnostic use)."""
        with torch.no_grad():
            log_pi = self.policy_log_probs(state.s)
            terms = [log_pi[z] + self.response_log_prob(m_ids, z, state)
                     for z in range(self.latent_size)]
            return float(torch.logsumexp(torch.stack(terms), dim=0))

    @torch.no_grad()
    def beam_decode(self, z, state, beam_width=10, max_len=40):
        """Best response under intention z by average token log-probability.

        Returns (token ids without BOS/EOS, average log-prob, terminated).
        All live hypotheses at a step share their length, so pruning by
        average log-probability matches the final selection criterion.  If
        no hypothesis produces EOS within max_len the best unterminated one
        is returned with terminated=False.
        """
        if beam_width < 1:
            raise ValueError("beam width must be >= 1")
        d = self.control_vector(z, state.s)
        tokens = torch.tensor([self.bos_id])
        h = torch.zeros(1, self.hidden_size, dtype=self.dtype)
        c = torch.zeros(1, self.hidden_size, dtype=self.dtype)
        totals = torch.zeros(1, dtype=self.dtype)
        prefixes = [[]]
        completed = []   # (avg, ids)
        for step in range(max_len):
            emb = self.dec_embedding(tokens)
            inp = torch.cat([emb, d.unsqueeze(0).expand(len(prefixes), -1)], dim=1)
            h, c = self.decoder(inp, (h, c))
            log_probs = torch.log_softmax(self.out_proj(h), dim=1)
            cand = (totals.unsqueeze(1) + log_probs).reshape(-1)
            k = min(beam_width, cand.numel())
            top_totals, flat = torch.topk(cand, k)
            beam_idx = torch.div(flat, self.vocab_size, rounding_mode="floor")
            token_idx = flat % self.vocab_size
            keep_rows, keep_tokens, keep_prefixes = [], [], []
            for total, b, v in zip(top_totals.tolist(), beam_idx.tolist(),
                                   token_idx.tolist()):
                if v == self.eos_id:
                    completed.append((total / (step + 1), prefixes[b]))
                else:
                    keep_rows.append(b)
                    keep_tokens.append(v)
                    keep_prefixes.append(prefixes[b] + [v])
            if not keep_rows:
                break
            rows = torch.tensor(keep_rows)
            h, c = h[rows], c[rows]
            totals = top_totals[torch.tensor([i for i, v in enumerate(token_idx.tolist())
                                              if v != self.eos_id])]
            tokens = torch.tensor(keep_tokens)
            prefixes = keep_prefixes
        if completed:
            best = max(completed, key=lambda t: t[0])
            return list(best[1]), best[0], True
        live = [(float(t) / max(len(p), 1), p) for t, p in zip(totals, prefixes)]
        best = max(live, key=lambda t: t[0])
        return list(best[1]), best[0], False

    def greedy_decode(self, z, state, max_len=40):
        ids, avg, terminated = self.beam_decode(z, state, beam_width=1,
                                                max_len=max_len)
        return ids, avg, terminated

    @torch.no_grad()
    def sample_decode(self, z, state, rng, max_len=40):
        """Ancestral sampling from the conditional decoder."""
        d = self.control_vector(z, state.s)
        ids, prev, hc = [], self.bos_id, None
        for _ in range(max_len):
            log_probs, hc = self._step(prev, d, hc)
            v = int(rng.choice(self.vocab_size,
                               p=torch.exp(log_probs).numpy().astype(np.float64)
                               / float(torch.exp(log_probs).sum())))
            if v == self.eos_id:
                break
            ids.append(v)
            prev = v
        return ids


def build_model(config, vocab, state_dim, seed=None):
    torch.manual_seed(config.resolved_seed() if seed is None else seed)
    return DialogueModel(vocab_size=len(vocab), state_dim=state_dim,
                         bos_id=vocab.bos_id, eos_id=vocab.eos_id,
                         latent_size=config.latent_size,
                         hidden_size=config.hidden_size,
                         embedding_size=config.embedding_size,
                         control_size=config.control_size,
                         inference_hidden=config.inference_hidden)
