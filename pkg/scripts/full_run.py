"""Full-scale training + fine-tuning + evaluation in one go, printing the
headline metrics. Handy for end-to-end runs outside the test suite."""

import sys
import time

import torch

from intentdial.config import Config
from intentdial.pipeline import (evaluate_ground_truth, evaluate_model,
                                 run_finetune, run_training)


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "/tmp/fullrun"
    torch.set_num_threads(1)
    config = Config(epochs=40, patience=5, rl_lr=3e-4)
    t0 = time.time()
    result = run_training(config, out)
    print("TRAIN done in %.1f min" % ((time.time() - t0) / 60))
    data = result["data"]

    gt = evaluate_ground_truth(data, data.test)
    print("GROUND TRUTH: success %.4f bleu %.4f" % (gt.success_rate, gt.bleu))

    t0 = time.time()
    rep = evaluate_model(result["model"], result["tracker"], data, data.test, config)
    print("PRE-RL: success %.4f bleu %.4f (eval %.1fs)"
          % (rep.success_rate, rep.bleu, time.time() - t0))

    t0 = time.time()
    rl = run_finetune(config, result["checkpoint"], out)
    print("RL done in %.1f min" % ((time.time() - t0) / 60))
    rep2 = evaluate_model(rl["model"], rl["tracker"], rl["data"], rl["data"].test,
                          config)
    print("POST-RL: success %.4f bleu %.4f" % (rep2.success_rate, rep2.bleu))
    print("DELTA success %.1f points, bleu %.4f"
          % (100 * (rep2.success_rate - rep.success_rate), rep2.bleu - rep.bleu))


if __name__ == "__main__":
    main()
