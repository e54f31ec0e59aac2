"""Self-labelling of response intentions by clustering.

Responses are grouped by their set of content words (function words and
punctuation stripped, placeholders kept); the i-th most frequent cluster
seeds the i-th latent dimension, giving a labeled subset for
semi-supervised training.
"""

from collections import Counter
from dataclasses import dataclass

# Words treated as non-content when clustering responses.  Kept small on
# purpose: auxiliaries, pronouns, determiners and prepositions only, so
# that e.g. "would", "like", "help" still count as content.
FUNCTION_WORDS = frozenset("""
a an the this that these those there here
i you he she it we they me him her us them my your its our their
is are am was were be been being do does did have has had
will shall may might must
and or but so if then because as of at by for with about into from to in on
no not nor okay ok oh yes yeah um uh hi hello please
what which who whom where when how
can could
's 'm 're 've 'll 'd n't
""".split())

_PUNCT = frozenset(".,!?;:'\"()[]-")


def content_words(tokens):
    """Content-word set used as the cluster key."""
    return frozenset(t for t in tokens
                     if t not in FUNCTION_WORDS and t not in _PUNCT)


@dataclass
class ResponseCluster:
    label: int
    key: frozenset
    size: int


@dataclass
class LabeledSet:
    clusters: list            # top clusters, rank order
    labels: dict              # (dialogue_id, turn_index) -> intention label
    total_turns: int

    @property
    def labeled_fraction(self):
        return len(self.labels) / self.total_turns if self.total_turns else 0.0


def cluster_responses(records, latent_size):
    """Cluster train-split responses by content-word set and label the
    members of the ``latent_size`` most frequent clusters.

    Returns a LabeledSet; turns outside the top clusters stay unlabeled.
    Ties in cluster size break lexicographically for determinism.
    """
    keys = {}
    counts = Counter()
    for rec in records:
        for i, turn in enumerate(rec.turns):
            if turn.delex_response is None:
                raise ValueError("cluster_responses requires delexicalised turns")
            key = content_words(turn.delex_response)
            keys[(rec.dialogue_id, i)] = key
            counts[key] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], sorted(kv[0])))
    clusters = [ResponseCluster(label=i, key=key, size=size)
                for i, (key, size) in enumerate(ranked[:latent_size])]
    key_to_label = {c.key: c.label for c in clusters}
    labels = {ref: key_to_label[key] for ref, key in keys.items()
              if key in key_to_label}
    return LabeledSet(clusters=clusters, labels=labels, total_turns=len(keys))
