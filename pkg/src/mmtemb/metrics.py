"""Corpus BLEU and per-word F-score broken down by training frequency."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

DEFAULT_BUCKETS = (0, 1, 2, 5, 10, 100, 1000)


def _tokens(sentence):
    return sentence.split() if isinstance(sentence, str) else list(sentence)


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(outputs, references, max_n=4):
    """Corpus BLEU in [0, 100] with one reference per sentence and no smoothing.

    Clipped n-gram matches and candidate n-gram totals are summed over the
    corpus before the geometric mean; any order with zero matches gives 0.
    """
    outputs = [_tokens(s) for s in outputs]
    references = [_tokens(s) for s in references]
    if len(outputs) != len(references):
        raise ValueError(f"{len(outputs)} outputs but {len(references)} references")
    if not outputs:
        raise ValueError("empty corpus")
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(outputs, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p)


@dataclass
class WordScore:
    word: str
    precision: float
    recall: float
    f1: float
    train_freq: int


@dataclass
class FScoreReport:
    words: dict
    bucket_edges: tuple
    bucket_f1: list = field(default_factory=list)
    bucket_sizes: list = field(default_factory=list)

    def bucket_labels(self):
        edges = list(self.bucket_edges)
        labels = [f"[{lo},{hi})" for lo, hi in zip(edges, edges[1:])]
        return labels + [f"[{edges[-1]},inf)"]

    def to_json(self):
        words = sorted(self.words.values(), key=lambda w: w.word)
        doc = {
            "bucket_edges": list(self.bucket_edges),
            "bucket_labels": self.bucket_labels(),
            "bucket_f1": self.bucket_f1,
            "bucket_sizes": self.bucket_sizes,
            "words": [w.word for w in words],
            "precision": [w.precision for w in words],
            "recall": [w.recall for w in words],
            "f1": [w.f1 for w in words],
            "train_freq": [w.train_freq for w in words],
        }
        return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def _bucket_index(freq, edges):
    idx = -1
    for i, e in enumerate(edges):
        if freq >= e:
            idx = i
    return idx


def word_fscore_breakdown(outputs, references, bucket_edges=DEFAULT_BUCKETS, train_freq=None):
    """Sentence-level precision/recall/F1 for every word seen in either side.

    precision(w) = #sentences with w in both output and reference / #outputs with w
    recall(w)    = same numerator / #references with w
    Undefined ratios count as 0. Words are bucketed by their count in
    ``train_freq`` (missing words count 0); bucket i covers
    [edges[i], edges[i+1]) and the last one is open. A bucket's score is the
    unweighted mean F1 of its words (None when empty). Words below
    edges[0] fall in no bucket.
    """
    outputs = [set(_tokens(s)) for s in outputs]
    references = [set(_tokens(s)) for s in references]
    if len(outputs) != len(references):
        raise ValueError(f"{len(outputs)} outputs but {len(references)} references")
    edges = tuple(bucket_edges)
    if not edges or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bucket edges must be non-empty and strictly increasing, got {edges}")
    train_freq = train_freq or {}

    in_out, in_ref, both = Counter(), Counter(), Counter()
    for o, r in zip(outputs, references):
        in_out.update(o)
        in_ref.update(r)
        both.update(o & r)

    words = {}
    for w in set(in_out) | set(in_ref):
        p = both[w] / in_out[w] if in_out[w] else 0.0
        r = both[w] / in_ref[w] if in_ref[w] else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        words[w] = WordScore(w, p, r, f1, int(train_freq.get(w, 0)))

    members = [[] for _ in edges]
    for w in sorted(words):
        i = _bucket_index(words[w].train_freq, edges)
        if i >= 0:
            members[i].append(words[w].f1)
    bucket_f1 = [sum(m) / len(m) if m else None for m in members]
    return FScoreReport(words, edges, bucket_f1, [len(m) for m in members])
