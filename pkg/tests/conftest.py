import numpy as np
import pytest
import torch

from intentdial.config import Config
from intentdial.model import DialogueModel

torch.set_num_threads(1)

DATA = dict(corpus_path="data/dialogues.json", ontology_path="data/ontology.json",
            kb_path="data/database.json")


@pytest.fixture(scope="session")
def config():
    return Config(**DATA)


@pytest.fixture(scope="session")
def data(config):
    from intentdial.pipeline import load_data
    return load_data(config)


def make_toy(vocab_size=6, state_dim=16, latent_size=3, hidden=3, emb=4,
             control=3, inference_hidden=5, seed=0, dtype=torch.float64):
    """Small double-precision model for oracle tests."""
    torch.manual_seed(seed)
    model = DialogueModel(vocab_size=vocab_size, state_dim=state_dim,
                          bos_id=1, eos_id=2, latent_size=latent_size,
                          hidden_size=hidden, embedding_size=emb,
                          control_size=control, inference_hidden=inference_hidden)
    if dtype == torch.float64:
        model.double()
    return model


def toy_state(model, u_ids=(3, 4), seed=0):
    rng = np.random.default_rng(seed)
    belief_match = model.state_dim - 2 * model.hidden_size
    belief = rng.random(belief_match - 6).astype(np.float64)
    match = np.zeros(6)
    match[rng.integers(0, 6)] = 1.0
    return model.dialogue_state(list(u_ids), belief, match)


@pytest.fixture
def toy_model():
    return make_toy()
