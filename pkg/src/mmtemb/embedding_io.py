"""Embedding text files, vocabularies and model-ready embedding tables."""
from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InitializationError, ParseError

logger = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
SPECIALS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3


@dataclass
class PretrainedEmbeddings:
    """Word vectors in file order."""

    words: list
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            vectors = vectors.reshape(len(self.words), -1)
        if vectors.shape[0] != len(self.words):
            raise ValueError(f"{len(self.words)} words but {vectors.shape[0]} vectors")
        self.vectors = vectors
        self._index = {w: i for i, w in enumerate(self.words)}

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def entries(self):
        return {w: self.vectors[i] for i, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index

    def __getitem__(self, word):
        return self.vectors[self._index[word]]

    def replace_vectors(self, vectors):
        return PretrainedEmbeddings(list(self.words), vectors)


@dataclass
class Vocabulary:
    tokens: list
    frequency: dict = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIALS:
            raise ValueError(f"vocabulary must start with {SPECIALS}")
        self._index = {t: i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    specials = {"pad": PAD_ID, "unk": UNK_ID, "bos": BOS_ID, "eos": EOS_ID}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def id(self, token):
        return self._index.get(token, UNK_ID)

    def encode(self, tokens):
        return [self.id(t) for t in tokens]

    def decode(self, ids):
        return [self.tokens[i] for i in ids]

    def fingerprint(self):
        """SHA-256 over the token list; identifies a vocabulary in checkpoints."""
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path):
        lines = [f"{t}\t{self.frequency.get(t, 0)}" for t in self.tokens]
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        tokens, freq = [], {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    token, count = line.rsplit("\t", 1)
                    count = int(count)
                except ValueError:
                    raise ParseError("expected 'token<TAB>count'", path, lineno) from None
                tokens.append(token)
                if token not in SPECIALS:
                    freq[token] = count
        return cls(tokens, freq)


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    matrix: np.ndarray
    oov_ids: frozenset = frozenset()

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.vocab):
            raise ValueError(
                f"table has {self.matrix.shape[0]} rows for a vocabulary of {len(self.vocab)}"
            )

    @property
    def dim(self):
        return self.matrix.shape[1]

    def replace_matrix(self, matrix):
        return EmbeddingTable(self.vocab, matrix, self.oov_ids)


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path, data):
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _looks_like_header(line):
    parts = line.split()
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def parse_embedding_text(path, format="auto"):
    """Read a word2vec-style (``header``) or GloVe-style (``headerless``) file.

    ``auto`` treats a first line of exactly two integers as a header.
    Malformed lines raise :class:`ParseError` with the line number; repeated
    words keep their first vector.
    """
    if format not in ("auto", "header", "headerless"):
        raise ValueError(f"unknown embedding format {format!r}")
    words, rows, seen = [], [], set()
    dim = None
    declared = None
    data_lines = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if lineno == 1 and (format == "header" or (format == "auto" and _looks_like_header(line))):
                parts = line.split()
                if len(parts) != 2:
                    raise ParseError("header must be 'count dim'", path, lineno)
                try:
                    declared, dim = int(parts[0]), int(parts[1])
                except ValueError:
                    raise ParseError("header must be 'count dim'", path, lineno) from None
                continue
            if not line.strip():
                continue
            data_lines += 1
            parts = line.rstrip().split(" ")
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise ParseError("line has no vector values", path, lineno)
            if len(values) != dim:
                raise ParseError(f"expected {dim} values, found {len(values)}", path, lineno)
            try:
                vec = [float(v) for v in values]
            except ValueError:
                raise ParseError("non-numeric vector value", path, lineno) from None
            if word in seen:
                logger.warning("%s:%d: duplicate word %r ignored", path, lineno, word)
                continue
            seen.add(word)
            words.append(word)
            rows.append(vec)
    if declared is not None and declared != data_lines:
        raise ParseError(f"header declares {declared} rows, file has {data_lines}", path)
    if dim is None:
        raise ParseError("empty embedding file without header", path)
    return PretrainedEmbeddings(words, np.array(rows, dtype=np.float64).reshape(len(words), dim))


def _format_row(word, vec):
    return word + " " + " ".join(format(float(x), ".17g") for x in vec)


def write_embedding_text(emb, path, format="header"):
    """Write vectors with 17 significant digits so values survive a round trip."""
    if format not in ("header", "headerless"):
        raise ValueError(f"unknown embedding format {format!r}")
    if isinstance(emb, EmbeddingTable):
        words, matrix = emb.vocab.tokens, emb.matrix
    else:
        words, matrix = emb.words, emb.vectors
    lines = []
    if format == "header":
        lines.append(f"{len(words)} {matrix.shape[1]}")
    lines.extend(_format_row(w, v) for w, v in zip(words, matrix))
    try:
        atomic_write_text(path, "".join(line + "\n" for line in lines))
    except OSError as exc:
        raise OSError(f"cannot write embeddings to {path}: {exc}") from exc


def read_corpus(path):
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def build_vocabulary(corpus, min_freq=1, max_size=None):
    """Specials first, then tokens by descending count, ties by first occurrence."""
    counts = Counter()
    first_seen = {}
    for sentence in corpus:
        for tok in sentence:
            counts[tok] += 1
            first_seen.setdefault(tok, len(first_seen))
    kept = [t for t in counts if counts[t] >= min_freq and t not in SPECIALS]
    kept.sort(key=lambda t: (-counts[t], first_seen[t]))
    if max_size is not None:
        kept = kept[:max_size]
    return Vocabulary(list(SPECIALS) + kept, {t: counts[t] for t in kept})


def init_embedding_table(pre, vocab, seed=0, dim=None):
    """Initial embedding rows for ``vocab``.

    Words found in ``pre`` copy their vector. Every other row except PAD
    (missing words and the UNK/BOS/EOS specials) gets the mean of the
    pretrained vectors whose words are *not* in the vocabulary. PAD is zero.
    With ``pre=None`` rows are drawn uniformly from +-sqrt(3/dim) using ``seed``.
    """
    if pre is None:
        if dim is None:
            raise ValueError("dim is required for random initialisation")
        rng = np.random.default_rng(seed)
        bound = np.sqrt(3.0 / dim)
        matrix = rng.uniform(-bound, bound, size=(len(vocab), dim))
        matrix[PAD_ID] = 0.0
        return EmbeddingTable(vocab, matrix, frozenset())
    if dim is not None and dim != pre.dim:
        raise InitializationError(f"pretrained dim {pre.dim} != configured dim {dim}")

    found = np.array([i >= 4 and t in pre for i, t in enumerate(vocab.tokens)])
    outside = [i for i, w in enumerate(pre.words) if w not in vocab]
    oov = [i for i in range(1, len(vocab)) if not found[i]]
    matrix = np.zeros((len(vocab), pre.dim))
    for i in np.flatnonzero(found):
        matrix[i] = pre[vocab.tokens[i]]
    if oov:
        if not outside:
            raise InitializationError(
                "no pretrained words outside the vocabulary: OOV mean is undefined"
            )
        matrix[oov] = pre.vectors[outside].mean(axis=0)
    return EmbeddingTable(vocab, matrix, frozenset(oov))
