"""BLEU-4: corpus-level score for evaluation and a smoothed sentence-level
score used inside the fine-tuning reward."""

import math
from collections import Counter

MAX_ORDER = 4


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(candidates, references):
    """Corpus BLEU-4 with pooled clipped n-gram counts and the standard
    brevity penalty.

    N-gram orders for which the candidate corpus contributes no n-grams at
    all are left out of the geometric mean (only relevant for very short
    corpora); if no order contributes, the score is 0.
    """
    if not candidates or len(candidates) != len(references):
        raise ValueError("need equal, non-empty candidate and reference lists")
    matched = [0] * MAX_ORDER
    total = [0] * MAX_ORDER
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            cand_counts = _ngrams(cand, n)
            if not cand_counts:
                continue
            ref_counts = _ngrams(ref, n)
            total[n - 1] += sum(cand_counts.values())
            matched[n - 1] += sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    log_precisions = []
    for n in range(MAX_ORDER):
        if total[n] == 0:
            continue
        if matched[n] == 0:
            return 0.0
        log_precisions.append(math.log(matched[n] / total[n]))
    if not log_precisions or cand_len == 0:
        return 0.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(sum(log_precisions) / len(log_precisions))


def sentence_bleu(candidate, reference):
    """Sentence BLEU-4 with add-one smoothing of every n-gram precision.

    Identical sentences score exactly 1; an empty candidate scores 0.
    """
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, MAX_ORDER + 1):
        cand_counts = _ngrams(candidate, n)
        ref_counts = _ngrams(reference, n)
        total = sum(cand_counts.values())
        matched = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        log_sum += math.log((matched + 1.0) / (total + 1.0))
    brevity = 1.0 if len(candidate) > len(reference) \
        else math.exp(1.0 - len(reference) / len(candidate))
    return brevity * math.exp(log_sum / MAX_ORDER)
