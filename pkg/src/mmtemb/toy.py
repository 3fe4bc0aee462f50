"""Synthetic desk-scale data: the copy task and anisotropic embedding clouds."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .embedding_io import PretrainedEmbeddings
from .mnmt.model import greedy_decode
from .mnmt.params import ModelConfig, ModelParams
from .train import Example, TrainConfig, train_model

N_SPECIAL = 4


@dataclass
class CopyTaskConfig:
    sentences: int = 80
    vocab: int = 20
    min_len: int = 3
    max_len: int = 6
    feat_dim: int = 16
    locations: int = 4
    emb_dim: int = 32
    hidden: int = 64
    batch_size: int = 8
    epochs: int = 150
    seed: int = 0


def make_copy_task(cfg=CopyTaskConfig()):
    """Sentence pairs whose target equals the source, with random image features."""
    rng = np.random.default_rng(cfg.seed)
    data = []
    for _ in range(cfg.sentences):
        n = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        ids = [int(i) for i in rng.integers(N_SPECIAL, N_SPECIAL + cfg.vocab, size=n)]
        data.append(Example(ids, list(ids), rng.normal(size=cfg.feat_dim),
                            rng.normal(size=(cfg.locations, cfg.feat_dim))))
    return data


@dataclass
class CopyTaskResult:
    kind: str
    first_nll: float
    final_nll: float
    exact_match: float
    seconds: float
    epochs: int

    @property
    def nll_ratio(self):
        return self.final_nll / self.first_nll


def exact_match(params, data, max_len=None):
    max_len = max_len or max(len(ex.target) for ex in data) + 2
    out = greedy_decode(
        params,
        [ex.source for ex in data],
        np.stack([ex.global_feature for ex in data]),
        np.stack([ex.spatial_features for ex in data]),
        max_len=max_len,
    )
    return float(np.mean([o == list(ex.target) for o, ex in zip(out, data)]))


def run_copy_task(kind, cfg=CopyTaskConfig(), train_cfg=None, on_epoch=None):
    data = make_copy_task(cfg)
    model_cfg = ModelConfig(
        kind, N_SPECIAL + cfg.vocab, N_SPECIAL + cfg.vocab, emb_dim=cfg.emb_dim,
        hidden=cfg.hidden, spatial_dim=cfg.feat_dim, global_dim=cfg.feat_dim,
        shared_dim=cfg.feat_dim,
    )
    train_cfg = train_cfg or TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed)
    params = ModelParams.initialize(model_cfg, seed=cfg.seed)
    start = time.perf_counter()
    params, log = train_model(params, data, train_cfg, on_epoch)
    seconds = time.perf_counter() - start
    acc = exact_match(params, data)
    return CopyTaskResult(kind, log[0].loss_task, log[-1].loss_task, acc, seconds, len(log)), params


def anisotropic_embeddings(n=1000, dim=50, common=3, scale=4.0, seed=0, prefix="w"):
    """Random vectors sharing a few strong common directions plus an offset,
    the typical shape of trained word embeddings."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, dim))
    basis = np.linalg.qr(rng.normal(size=(dim, common)))[0].T
    x += (rng.normal(size=(n, common)) * scale) @ basis
    x += rng.normal(size=dim) * scale
    return PretrainedEmbeddings([f"{prefix}{i}" for i in range(n)], x)
