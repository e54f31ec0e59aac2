"""Checkpoint archive: one compressed npz holding a JSON manifest plus all
named parameter arrays, the belief tracker stored under its own
namespace so it can be loaded and frozen independently."""

import json

import numpy as np
import torch

FORMAT_VERSION = 1
MANIFEST_KEY = "__manifest__"


def save_checkpoint(path, model, tracker, config, vocab, tag="", extra=None):
    manifest = {
        "version": FORMAT_VERSION,
        "tag": tag,
        "vocab_hash": vocab.content_hash(),
        "state_dim": model.state_dim,
        "config": config.asdict(),
    }
    if extra:
        manifest.update(extra)
    arrays = {MANIFEST_KEY: np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8)}
    for name, tensor in model.state_dict().items():
        arrays["model/" + name] = tensor.numpy()
    for name, tensor in tracker.state_dict().items():
        arrays["tracker/" + name] = tensor.numpy()
    with open(path, "wb") as f:
        np.savez_compressed(f, **arrays)


class CheckpointError(Exception):
    pass


def load_checkpoint(path):
    """Returns (manifest, model_state, tracker_state) with torch tensors."""
    with np.load(path) as data:
        if MANIFEST_KEY not in data:
            raise CheckpointError("%s is not a checkpoint archive" % path)
        manifest = json.loads(bytes(data[MANIFEST_KEY]).decode())
        if manifest.get("version") != FORMAT_VERSION:
            raise CheckpointError("unsupported checkpoint version %r"
                                  % manifest.get("version"))
        model_state, tracker_state = {}, {}
        for key in data.files:
            if key.startswith("model/"):
                model_state[key[len("model/"):]] = torch.tensor(data[key])
            elif key.startswith("tracker/"):
                tracker_state[key[len("tracker/"):]] = torch.tensor(data[key])
    return manifest, model_state, tracker_state
