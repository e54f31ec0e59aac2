"""Command-line entry points: make-data, train, label, finetune-rl,
evaluate, serve and chat."""

import argparse
import json
import sys
from pathlib import Path

from .config import Config
from .labels import cluster_responses


def _load_config(args):
    config = Config.from_json(args.config) if args.config else Config()
    for name in ("corpus_path", "ontology_path", "kb_path"):
        value = getattr(args, name.replace("_path", ""), None)
        if value:
            setattr(config, name, value)
    return config


def _add_data_args(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--corpus", help="dialogue corpus JSON")
    p.add_argument("--ontology", help="ontology JSON")
    p.add_argument("--kb", help="restaurant database JSON")


def cmd_make_data(args):
    from .datagen import write_dataset
    info = write_dataset(args.out, seed=args.seed)
    print("wrote %(dialogues)d dialogues / %(turns)d turns / "
          "%(restaurants)d restaurants" % info)


def cmd_train(args):
    from .pipeline import run_training
    config = _load_config(args)
    if args.latent_size:
        config.latent_size = args.latent_size
    if args.epochs:
        config.epochs = args.epochs
    result = run_training(config, args.out)
    print("checkpoint written to %s" % result["checkpoint"])


def cmd_label(args):
    from .pipeline import load_data
    config = _load_config(args)
    if args.latent_size:
        config.latent_size = args.latent_size
    data = load_data(config)
    labeled = cluster_responses(data.train, config.latent_size)
    print("%d of %d train turns labeled (%.1f%%)"
          % (len(labeled.labels), labeled.total_turns,
             100 * labeled.labeled_fraction))
    print("%-4s %-6s %s" % ("ID", "#", "content words"))
    for c in labeled.clusters[:args.show]:
        print("%-4d %-6d %s" % (c.label, c.size, ", ".join(sorted(c.key))))


def cmd_finetune(args):
    from .pipeline import run_finetune
    config = _load_config(args)
    if args.epochs:
        config.rl_epochs = args.epochs
    result = run_finetune(config, args.checkpoint, args.out)
    print("checkpoint written to %s" % result["checkpoint"])


def cmd_evaluate(args):
    from .pipeline import (evaluate_ground_truth, evaluate_model, load_data,
                           load_model_from_checkpoint)
    config = _load_config(args)
    if args.ground_truth:
        data = load_data(config)
        split = {"train": data.train, "valid": data.valid, "test": data.test}[args.split]
        report = evaluate_ground_truth(data, split)
        name = "ground truth"
    else:
        if not args.checkpoint:
            sys.exit("evaluate needs --checkpoint (or --ground-truth)")
        model, tracker, config, data, manifest = load_model_from_checkpoint(
            args.checkpoint, config=config if args.config else None)
        split = {"train": data.train, "valid": data.valid, "test": data.test}[args.split]
        report = evaluate_model(model, tracker, data, split, config)
        name = "model%s" % manifest.get("tag", "")
    print(report.render_table(name))
    if args.report:
        report.to_json(args.report)
        print("report written to %s" % args.report)


def cmd_serve(args):
    from .pipeline import load_model_from_checkpoint
    from .service import DialogueService, serve
    model, tracker, config, data, _ = load_model_from_checkpoint(args.checkpoint)
    service = DialogueService(model, tracker, data, config,
                              sample_top_k=not args.deterministic,
                              transcript_log=args.transcript_log)
    ui_dir = args.ui if args.ui and Path(args.ui).is_dir() else None
    server = serve(service, host=args.host, port=args.port, ui_dir=ui_dir)
    print("listening on http://%s:%d/ (ui: %s)" % (args.host, args.port,
                                                   ui_dir or "disabled"))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


def cmd_chat(args):
    from .pipeline import load_model_from_checkpoint
    from .service import DialogueService
    model, tracker, config, data, _ = load_model_from_checkpoint(args.checkpoint)
    service = DialogueService(model, tracker, data, config,
                              sample_top_k=not args.deterministic)
    session = service.create_session()
    print("session %s — type a message, 'force N' to steer the next reply, "
          "or 'quit'" % session.session_id)
    forced = None
    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            break
        if not line:
            continue
        if line in ("quit", "exit"):
            break
        if line.startswith("force "):
            forced = int(line.split()[1])
            print("(next reply forced to intention %d)" % forced)
            continue
        result = service.chat_turn(session.session_id, line, forced)
        forced = None
        for row in result["diagnostics"]["intentions"]:
            marker = "*" if row["intention"] == \
                result["diagnostics"]["chosen_intention"] else " "
            print("  %s(%3d %.2f) %s" % (marker, row["intention"], row["prob"],
                                         row["decoded"]))
        print("bot> %s" % result["response"])


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="intentdial",
        description="goal-oriented dialogue agent with latent response intentions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="write the synthetic dataset")
    p.add_argument("--out", default="data")
    p.add_argument("--seed", type=int, default=20200)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("train", help="semi-supervised training run")
    _add_data_args(p)
    p.add_argument("--out", default="runs/train")
    p.add_argument("--latent-size", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("label", help="show the response clustering seed set")
    _add_data_args(p)
    p.add_argument("--latent-size", type=int)
    p.add_argument("--show", type=int, default=20)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("finetune-rl", help="policy-gradient fine-tuning")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", default="runs/rl")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="success rate and BLEU on a split")
    _add_data_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--ground-truth", action="store_true",
                   help="score the human responses instead of a model")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP chat service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--ui", help="directory with the built web client")
    p.add_argument("--deterministic", action="store_true",
                   help="argmax intentions instead of top-5 sampling")
    p.add_argument("--transcript-log", help="append-only JSON-lines transcript")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("chat", help="terminal chat REPL")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_chat)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
