"""Adam, gradient clipping and the mini-batch training loop."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .embedding_io import PAD_ID
from .errors import ConfigError, NumericalError
from .mnmt.model import as_tensors, forward_loss, make_batch
from .mnmt.params import VISUAL_KINDS
from .numerics.autodiff import DiffGraph, backward

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 4e-4
    clip_norm: float = 1.0
    dropout: float = 0.3
    lam: float = 0.5
    alpha: float = 0.1
    gamma: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ValueError("lr and clip_norm must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


@dataclass
class Example:
    source: list
    target: list
    global_feature: np.ndarray = None
    spatial_features: np.ndarray = None


@dataclass
class AdamState:
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """Bias-corrected Adam update of ``params`` (name -> array) in place.

    Parameters without an entry in ``grads`` are left alone. Raises
    NumericalError before touching anything if a gradient is not finite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name!r} at step {state.t + 1}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads, max_norm=1.0):
    """Scale all gradients by max_norm / norm when the global L2 norm exceeds
    ``max_norm``. Returns (grads, norm before clipping)."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class EpochLog:
    epoch: int
    loss_total: float
    loss_task: float
    loss_latent: float


def loss_log_csv(log):
    out = io.StringIO()
    out.write("epoch,loss_total,loss_task,loss_latent\n")
    for row in log:
        out.write(f"{row.epoch},{row.loss_total:.10g},{row.loss_task:.10g},{row.loss_latent:.10g}\n")
    return out.getvalue()


def check_features(kind, dataset):
    need = VISUAL_KINDS.get(kind)
    if need == "spatial" and any(ex.spatial_features is None for ex in dataset):
        raise ConfigError("the doubly-attentive model needs spatial features for every example")
    if need == "global" and any(ex.global_feature is None for ex in dataset):
        raise ConfigError(f"the {kind} model needs a global image feature for every example")


def batch_from_examples(examples, kind):
    need = VISUAL_KINDS.get(kind)
    gf = np.stack([ex.global_feature for ex in examples]) if need == "global" else None
    sf = np.stack([ex.spatial_features for ex in examples]) if need == "spatial" else None
    return make_batch([ex.source for ex in examples], [ex.target for ex in examples], gf, sf)


def train_step(params, batch, config, state, rng):
    """Forward, backward, clip and one Adam update. Returns the three loss values."""
    with DiffGraph() as graph:
        tensors = as_tensors(params.arrays, requires_grad=True)
        total, task, latent = forward_loss(
            tensors, params.config, batch, config.lam, config.alpha, config.gamma, config.dropout, rng
        )
    backward(graph, total)
    grads = {}
    for name in params.names():
        g = tensors[name].grad
        grads[name] = np.zeros_like(params.arrays[name]) if g is None else g
    # PAD rows are fixed at zero
    for name in ("src_emb", "tgt_emb"):
        grads[name] = grads[name].copy()
        grads[name][PAD_ID] = 0.0
    grads, _ = clip_grad_norm(grads, config.clip_norm)
    adam_step(state, params.arrays, grads)
    return total.item(), task.item(), latent.item()


def train_model(params, dataset, config, on_epoch=None):
    """Train ``params`` (a ModelParams, updated in place) on ``dataset``.

    Each epoch visits a seeded permutation of the examples in mini-batches,
    using teacher forcing. Returns (params, list of EpochLog) where losses
    are averaged per sentence.
    """
    kind = params.config.kind
    check_features(kind, dataset)
    if not dataset:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    state = AdamState(config.lr, config.beta1, config.beta2, config.eps)
    log = []
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = batch_from_examples([dataset[i] for i in idx], kind)
            losses = train_step(params, batch, config, state, rng)
            sums += np.array(losses) * len(idx)
        row = EpochLog(epoch, *(sums / n))
        log.append(row)
        logger.info("epoch %d total %.4f task %.4f latent %.4f", epoch, *(sums / n))
        if on_epoch is not None and on_epoch(row, params) is False:
            break
    return params, log
