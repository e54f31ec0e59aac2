"""Run configuration: hyperparameters, paths and seed handling.

The LIDM_SEED environment variable, when set, overrides the configured
seed everywhere (model init, data shuffling, intention sampling) so demos
and tests are exactly reproducible.
"""

import dataclasses
import json
import os
from dataclasses import dataclass

SEED_ENV_VAR = "LIDM_SEED"


@dataclass
class Config:
    # data
    corpus_path: str = "data/dialogues.json"
    ontology_path: str = "data/ontology.json"
    kb_path: str = "data/database.json"
    min_count: int = 1
    split_seed: int = 0

    # model sizes
    latent_size: int = 70
    hidden_size: int = 50
    embedding_size: int = 50
    control_size: int = 50        # each half of the decoder control vector
    inference_hidden: int = 100
    baseline_hidden: int = 50
    max_decode_len: int = 40
    beam_width: int = 10

    # objective
    kl_weight: float = 0.1        # tempering factor on the KL term
    unsup_weight: float = 0.1     # weight of the unlabeled objective
    num_samples: int = 1          # posterior samples per stochastic estimate

    # optimisation
    lr_generative: float = 1e-3
    lr_inference: float = 1e-3
    lr_baseline: float = 1e-2
    epochs: int = 40
    patience: int = 5
    tracker_lr: float = 1e-3
    tracker_epochs: int = 8

    # fine-tuning
    rl_lr: float = 7e-4
    rl_epochs: int = 3
    bleu_reward_weight: float = 0.5
    rl_sampled_decoding: bool = False   # greedy generation unless flagged

    seed: int = 7

    def resolved_seed(self):
        env = os.environ.get(SEED_ENV_VAR)
        return int(env) if env else self.seed

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(dataclasses.asdict(self), f, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            raw = json.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError("unknown config keys: %s" % sorted(unknown))
        return cls(**raw)

    def asdict(self):
        return dataclasses.asdict(self)
