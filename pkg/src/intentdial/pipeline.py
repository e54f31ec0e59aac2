"""End-to-end assembly: data preparation, training runs, evaluation and
checkpoint round-trips, shared by the command line and the test suite."""

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .belief import BeliefLayout, BeliefTracker, pretrain_tracker
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import Config
from .evaluation import echo_responder, evaluate_responses
from .kb import KnowledgeBase
from .labels import cluster_responses
from .model import build_model
from .rl import finetune, generated_evidence
from .training import Baseline, prepare_dialogues, train


@dataclass
class DataBundle:
    ontology: object
    kb: KnowledgeBase
    delex: corpus_mod.Delexicaliser
    layout: BeliefLayout
    records: list
    train: list
    valid: list
    test: list
    vocab: corpus_mod.Vocabulary


def load_data(config: Config) -> DataBundle:
    ontology = corpus_mod.load_ontology(config.ontology_path)
    kb = KnowledgeBase.load(config.kb_path)
    records = corpus_mod.load_corpus(config.corpus_path, config.ontology_path)
    delex = corpus_mod.Delexicaliser(ontology, kb.entity_values())
    corpus_mod.delexicalise_corpus(records, delex)
    train_split, valid_split, test_split = corpus_mod.split_corpus(
        records, config.split_seed)
    vocab = corpus_mod.build_vocab(train_split, min_count=config.min_count)
    return DataBundle(ontology=ontology, kb=kb, delex=delex,
                      layout=BeliefLayout(ontology), records=records,
                      train=train_split, valid=valid_split, test=test_split,
                      vocab=vocab)


def state_dim(config: Config, data: DataBundle) -> int:
    return 2 * config.hidden_size + data.layout.dim() + 6


def model_responder(model, kb, vocab, beam_width=10, max_len=40):
    """Greedy top intention plus beam-search decoding for each turn."""
    def respond(record, prepared, i):
        turn = prepared.turns[i]
        state = model.dialogue_state(turn.u_ids, turn.belief_vec, turn.match_vec)
        z = int(np.argmax(model.policy_distribution(state)))
        ids, _, _ = model.beam_decode(z, state, beam_width=beam_width,
                                      max_len=max_len)
        return generated_evidence(vocab.decode(ids), turn, kb)
    return respond


def evaluate_model(model, tracker, data, split, config):
    prepared = prepare_dialogues(split, tracker, data.vocab, data.delex, data.kb)
    respond = model_responder(model, data.kb, data.vocab,
                              beam_width=config.beam_width,
                              max_len=config.max_decode_len)
    return evaluate_responses([(p.record, p) for p in prepared], respond)


def evaluate_ground_truth(data, split):
    """Metrics on the human responses (the gold passthrough)."""
    pairs = [(rec, None) for rec in split]
    return evaluate_responses(pairs, echo_responder(data.kb))


def run_training(config: Config, outdir, log=print):
    """Tracker pre-training, response clustering, semi-supervised training;
    writes vocab, split manifest, metrics CSV and the checkpoint."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    data = load_data(config)
    data.vocab.save(outdir / "vocab.tsv")
    corpus_mod.save_split_manifest(outdir / "splits.json",
                                   data.train, data.valid, data.test)
    config.to_json(outdir / "config.json")

    tracker, _ = pretrain_tracker(data.train, data.valid, data.vocab, data.delex,
                                  data.layout, lr=config.tracker_lr,
                                  epochs=config.tracker_epochs,
                                  seed=config.resolved_seed(), log=log)
    labeled = cluster_responses(data.train, config.latent_size)
    if log:
        log("labeled fraction %.3f over %d turns"
            % (labeled.labeled_fraction, labeled.total_turns))
    train_prepared = prepare_dialogues(data.train, tracker, data.vocab,
                                       data.delex, data.kb, labeled)
    valid_prepared = prepare_dialogues(data.valid, tracker, data.vocab,
                                       data.delex, data.kb)
    model = build_model(config, data.vocab, state_dim(config, data))
    baseline = Baseline(state_dim(config, data), hidden=config.baseline_hidden)
    history, best = train(model, baseline, train_prepared, valid_prepared,
                          config, log_csv=outdir / "training_metrics.csv",
                          log=log)
    ckpt = outdir / "model.ckpt.npz"
    save_checkpoint(ckpt, model, tracker, config, data.vocab,
                    extra={"best_epoch": best["epoch"],
                           "training_seconds": round(time.time() - started, 1)})
    return {"checkpoint": str(ckpt), "history": history, "data": data,
            "model": model, "tracker": tracker, "baseline": baseline,
            "train_prepared": train_prepared, "valid_prepared": valid_prepared}


def load_model_from_checkpoint(path, config=None, data=None):
    """Rebuild model and tracker from an archive; the vocabulary is
    reconstructed from the data files and must hash-match the manifest."""
    manifest, model_state, tracker_state = load_checkpoint(path)
    if config is None:
        config = Config(**manifest["config"])
    if data is None:
        data = load_data(config)
    if data.vocab.content_hash() != manifest["vocab_hash"]:
        raise CheckpointError(
            "vocabulary mismatch: checkpoint was trained with vocab %s but the "
            "corpus yields %s" % (manifest["vocab_hash"],
                                  data.vocab.content_hash()))
    model = build_model(config, data.vocab, manifest["state_dim"])
    model.load_state_dict(model_state)
    model.eval()
    tracker = BeliefTracker(data.layout, len(data.vocab))
    tracker.load_state_dict(tracker_state)
    for p in tracker.parameters():
        p.requires_grad_(False)
    tracker.eval()
    return model, tracker, config, data, manifest


def run_finetune(config: Config, checkpoint_path, outdir, log=print):
    """Policy-gradient fine-tuning from a converged checkpoint."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model, tracker, config, data, manifest = load_model_from_checkpoint(
        checkpoint_path, config=config)
    labeled = cluster_responses(data.train, config.latent_size)
    train_prepared = prepare_dialogues(data.train, tracker, data.vocab,
                                       data.delex, data.kb, labeled)
    valid_prepared = prepare_dialogues(data.valid, tracker, data.vocab,
                                       data.delex, data.kb)
    for p in model.parameters():
        p.requires_grad_(True)
    history = finetune(model, train_prepared, valid_prepared, data.kb,
                       data.vocab, config, log_csv=outdir / "rl_metrics.csv",
                       log=log)
    ckpt = outdir / "model+rl.ckpt.npz"
    save_checkpoint(ckpt, model, tracker, config, data.vocab, tag="+RL",
                    extra={"rl_epochs": config.rl_epochs})
    return {"checkpoint": str(ckpt), "history": history, "data": data,
            "model": model, "tracker": tracker,
            "train_prepared": train_prepared, "valid_prepared": valid_prepared}
