"""Forward passes and losses for the attentive encoder-decoder family.

Shapes: B batch, N source length, M target length, H hidden size, E
embedding size, L spatial locations, P spatial feature size, G global
feature size. Everything is batched; single sentences use B = 1.

GRU cell used by the encoder and the decoder proposal::

    z  = sigmoid(W_z x + U_z h)
    r  = sigmoid(W_r x + U_r h)
    h~ = tanh(W x + U (r * h))
    h' = (1 - z) * h~ + z * h
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..embedding_io import BOS_ID, EOS_ID, PAD_ID
from ..errors import NumericalError
from ..numerics import autodiff as ad
from ..numerics.autodiff import Tensor, linear, sigmoid, tanh


@dataclass
class EncoderOutput:
    states: Tensor  # (B, N, 2H)
    mean_state: Tensor  # (B, 2H)
    mask: np.ndarray  # (B, N) bool


@dataclass
class Batch:
    src: np.ndarray  # (B, N) int
    src_mask: np.ndarray
    tgt_in: np.ndarray  # (B, M) BOS + y
    tgt_out: np.ndarray  # (B, M) y + EOS
    tgt_mask: np.ndarray
    global_feats: np.ndarray = None  # (B, G)
    spatial_feats: np.ndarray = None  # (B, L, P)

    def __len__(self):
        return self.src.shape[0]


def pad_ids(seqs, pad=PAD_ID):
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out, out != pad


def make_batch(sources, targets, global_feats=None, spatial_feats=None):
    if any(len(s) == 0 for s in sources):
        raise ValueError("empty source sentence")
    src, src_mask = pad_ids(sources)
    tgt_in, _ = pad_ids([[BOS_ID] + list(t) for t in targets])
    tgt_out, tgt_mask = pad_ids([list(t) + [EOS_ID] for t in targets])
    gf = None if global_feats is None else np.asarray(global_feats, dtype=np.float64)
    sf = None if spatial_feats is None else np.asarray(spatial_feats, dtype=np.float64)
    return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask, gf, sf)


def as_tensors(arrays, requires_grad=False):
    return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in arrays.items()}


# building blocks

def gru_step(xz, xr, xh, h, Uz, Ur, U):
    """Fused GRU update from precomputed input projections, recorded as a
    single graph node."""
    hd = h.data
    z = expit(xz.data + hd @ Uz.data.T)
    r = expit(xr.data + hd @ Ur.data.T)
    rh = r * hd
    ht = np.tanh(xh.data + rh @ U.data.T)
    out = (1.0 - z) * ht + z * hd

    def bw(g):
        dah = g * (1.0 - z) * (1.0 - ht * ht)
        drh = dah @ U.data
        dar = drh * hd * r * (1.0 - r)
        daz = g * (hd - ht) * z * (1.0 - z)
        ad.accumulate(xh, dah)
        ad.accumulate(xr, dar)
        ad.accumulate(xz, daz)
        if h.requires_grad:
            ad.accumulate(h, g * z + drh * r + dar @ Ur.data + daz @ Uz.data)
        ad.accumulate(U, dah.T @ rh)
        ad.accumulate(Ur, dar.T @ hd)
        ad.accumulate(Uz, daz.T @ hd)

    return ad.record(out, (xz, xr, xh, h, Uz, Ur, U), bw)


def gru_cell(p, prefix, x, h, xproj=None):
    """One GRU step; ``xproj`` optionally carries the precomputed input
    projections (W_z x, W_r x, W x)."""
    if xproj is None:
        xproj = (linear(x, p[f"{prefix}_Wz"]), linear(x, p[f"{prefix}_Wr"]), linear(x, p[f"{prefix}_W"]))
    xz, xr, xh = xproj
    return gru_step(xz, xr, xh, ad.as_tensor(h), p[f"{prefix}_Uz"], p[f"{prefix}_Ur"], p[f"{prefix}_U"])


def attend(query, keys, v, values, mask=None):
    """Additive attention: softmax_i(v . tanh(query + keys_i)).

    ``query`` (B, A) is the projected decoder state, ``keys`` (B, N, A) the
    projected memory. Returns (weights (B, N), context (B, D)).
    """
    B, N, A = keys.shape
    scores = ad.matmul(tanh(keys + query.reshape(B, 1, A)), v)
    weights = ad.softmax(scores, axis=-1, mask=mask)
    context = ad.matmul(weights.reshape(B, 1, N), values).reshape(B, values.shape[-1])
    return weights, context


def _run_direction(p, prefix, x, mask, reverse):
    B, N, _ = x.shape
    xz, xr, xh = (linear(x, p[f"{prefix}_{w}"]) for w in ("Wz", "Wr", "W"))
    h = Tensor(np.zeros((B, p[f"{prefix}_Uz"].shape[0])))
    out = [None] * N
    steps = range(N - 1, -1, -1) if reverse else range(N)
    for i in steps:
        h_new = gru_cell(p, prefix, None, h, (xz[:, i], xr[:, i], xh[:, i]))
        m = mask[:, i:i + 1]
        h = h_new if m.all() else h_new * m + h * (~m)
        out[i] = h
    return ad.stack(out, axis=1)


def encode_bigru(p, src_ids, src_mask=None, dropout=0.0, rng=None):
    """Bidirectional GRU encoder; zero initial states, per-position
    concatenation [forward; backward]."""
    src_ids = np.atleast_2d(np.asarray(src_ids, dtype=np.int64))
    if src_ids.shape[1] == 0:
        raise ValueError("cannot encode an empty sentence")
    if src_mask is None:
        src_mask = np.ones(src_ids.shape, dtype=bool)
    if not src_mask.any(axis=1).all():
        raise ValueError("cannot encode an empty sentence")
    x = ad.dropout(ad.embedding(p["src_emb"], src_ids), dropout, rng)
    fwd = _run_direction(p, "enc_fwd", x, src_mask, reverse=False)
    bwd = _run_direction(p, "enc_bwd", x, src_mask, reverse=True)
    states = ad.concat([fwd, bwd], axis=-1)
    m = src_mask[:, :, None].astype(np.float64)
    lengths = src_mask.sum(axis=1, keepdims=True).astype(np.float64)
    mean = (states * m).sum(axis=1) / lengths
    return EncoderOutput(states, mean, src_mask)


def attend_text(p, s_j, enc, names=("txt_U", "txt_W", "txt_v"), keys=None):
    """Textual attention over encoder states -> (weights, context)."""
    q_name, k_name, v_name = names
    if keys is None:
        keys = linear(enc.states, p[k_name])
    return attend(linear(s_j, p[q_name]), keys, p[v_name], enc.states, enc.mask)


def gating_scalar(p, s_hat_prev):
    return sigmoid(linear(s_hat_prev, p["gate_W"], p["gate_b"]))


def attend_visual_gated(p, s_hat_prev, s_j, features, keys=None):
    """Visual context over the L spatial locations scaled by the gate
    beta = sigmoid(W_s s_hat_{j-1} + b_s). Returns (weights, beta, context)."""
    features = ad.as_tensor(features)
    if keys is None:
        keys = linear(features, p["vis_W"])
    weights, ctx = attend(linear(s_j, p["vis_U"]), keys, p["vis_v"], features)
    beta = gating_scalar(p, s_hat_prev)
    return weights, beta, beta * ctx


def decoder_init(p, enc, cfg, t=None):
    if cfg.kind == "vag":
        return vag_decoder_init(p, t, enc, cfg.rho)
    return tanh(linear(enc.mean_state, p["dec_init"]))


@dataclass
class StepCache:
    """Per-batch projections that do not change across decoder steps."""
    text_keys: Tensor = None
    vis_keys: Tensor = None
    features: Tensor = None


def make_cache(p, cfg, enc, spatial=None):
    if cfg.kind == "da":
        feats = ad.as_tensor(spatial)
        return StepCache(linear(enc.states, p["txt_W"]), linear(feats, p["vis_W"]), feats)
    return StepCache(linear(enc.states, p["att_U"]))


def da_decoder_step(p, s_hat_prev, y_prev, enc, cache, dropout=0.0, rng=None):
    """One doubly-attentive step -> (distribution (B, V), new hidden, info)."""
    e = ad.embedding(p["tgt_emb"], y_prev)
    s = gru_cell(p, "dec", e, s_hat_prev)
    alpha_t, c_t = attend_text(p, s, enc, keys=cache.text_keys)
    alpha_v, beta, c_v = attend_visual_gated(p, s_hat_prev, s, cache.features, keys=cache.vis_keys)
    z = sigmoid(linear(c_t, p["comb_Wzt"]) + linear(c_v, p["comb_Wzv"]) + linear(s, p["comb_Wz"]))
    r = sigmoid(linear(c_t, p["comb_Wrt"]) + linear(c_v, p["comb_Wrv"]) + linear(s, p["comb_Wr"]))
    s_prime = tanh(linear(c_t, p["comb_Wht"]) + linear(c_v, p["comb_Whv"]) + r * linear(s, p["comb_U"]))
    s_hat = (1.0 - z) * s_prime + z * s
    pre = tanh(
        linear(s_hat, p["L_s"]) + linear(e, p["L_w"]) + linear(c_t, p["L_t"]) + linear(c_v, p["L_i"])
    )
    pre = ad.dropout(pre, dropout, rng)
    dist = ad.softmax(linear(pre, p["out_W"], p["out_b"]))
    return dist, s_hat, {"proposal": s, "z": z, "beta": beta, "alpha_t": alpha_t, "alpha_v": alpha_v}


def bahdanau_decoder_step(p, s_hat_prev, y_prev, enc, cache, dropout=0.0, rng=None):
    """Conditional-GRU attentive step -> (distribution (B, V), new hidden, info).

    The output layer projects proposal, previous embedding and context to a
    common pre-output size before the tanh, then to the vocabulary.
    """
    e = ad.embedding(p["tgt_emb"], y_prev)
    s = gru_cell(p, "dec", e, s_hat_prev)
    alpha, c = attend_text(p, s, enc, names=("att_W", "att_U", "att_v"), keys=cache.text_keys)
    s_hat = gru_cell(p, "ctx", c, s)
    pre = tanh(linear(s, p["pre_s"]) + linear(e, p["pre_e"]) + linear(c, p["pre_c"]))
    pre = ad.dropout(pre, dropout, rng)
    dist = ad.softmax(linear(pre, p["out_W"], p["out_b"]))
    return dist, s_hat, {"proposal": s, "alpha": alpha}


def decoder_step(kind):
    return da_decoder_step if kind == "da" else bahdanau_decoder_step


# auxiliary latent-space tasks

def imagination_latent(p, enc):
    """tanh(W_v . mean_i h_i)"""
    return tanh(linear(enc.mean_state, p["img_W"]))


def _cosine_matrix(a, b):
    """cos(a_i, b_j) for rows of (B, D) tensors."""
    return ad.matmul(ad.l2_normalize(a), ad.transpose(ad.l2_normalize(b)))


def _check_nonzero(*arrays):
    for arr in arrays:
        data = arr.data if isinstance(arr, Tensor) else np.asarray(arr)
        if np.any(np.linalg.norm(data.reshape(-1, data.shape[-1]), axis=-1) == 0):
            raise NumericalError("cosine distance with a zero-norm vector")


def imagination_margin_loss(v_hat, positive, negatives, margin=0.1):
    """sum over negatives v' of max(0, margin - cos(v_hat, v) + cos(v_hat, v'))
    for a single example; ``v_hat`` and ``positive`` are (G,), negatives (K, G)."""
    negatives = np.atleast_2d(negatives if not isinstance(negatives, Tensor) else negatives.data)
    _check_nonzero(v_hat, positive, negatives)
    v_hat = ad.as_tensor(v_hat).reshape(1, -1)
    pos = _cosine_matrix(v_hat, ad.as_tensor(positive).reshape(1, -1)).reshape(())
    neg = _cosine_matrix(v_hat, ad.as_tensor(negatives)).reshape(-1)
    return ad.relu(margin - pos + neg).sum()


def imagination_batch_margin_loss(v_hat, feats, margin=0.1):
    """Summed margin loss over a batch; the negatives of item b are the
    global features of every other item in the batch."""
    _check_nonzero(v_hat, feats)
    B = v_hat.shape[0]
    sims = _cosine_matrix(v_hat, ad.as_tensor(feats))  # sims[b, b'] = d(v_hat_b, v_b')
    diag = (sims * np.eye(B)).sum(axis=1, keepdims=True)
    hinge = ad.relu(margin - diag + sims) * (1.0 - np.eye(B))
    return hinge.sum()


def vag_sentence_representation(p, enc, v):
    """Visually guided attention over encoder states -> (weights (B, N), t (B, 2H))."""
    B, N, C = enc.states.shape
    img = tanh(linear(ad.as_tensor(v), p["vag_Wv"]))  # (B, A)
    hs = tanh(linear(enc.states, p["vag_Wh"]))  # (B, N, A)
    scores = ad.matmul(hs, img.reshape(B, -1, 1)).reshape(B, N)
    weights = ad.softmax(scores, axis=-1, mask=enc.mask)
    t = ad.matmul(weights.reshape(B, 1, N), enc.states).reshape(B, C)
    return weights, t


def vag_decoder_init(p, t, enc, rho=0.5):
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    return tanh(linear(rho * t + (1.0 - rho) * enc.mean_state, p["dec_init"]))


def vag_projections(p, t, v):
    t_emb = tanh(linear(t, p["vag_Wt"], p["vag_bt"]))
    v_emb = tanh(linear(ad.as_tensor(v), p["vag_Wimg"], p["vag_bimg"]))
    return t_emb, v_emb


def bidirectional_hinge(t_emb, v_emb, margin=0.1):
    """Image-anchored plus sentence-anchored hinge sums over in-batch negatives.

    sims[p, k] = cos(v_p, t_k)
    image side:    sum_p sum_{k != p} max(0, margin - sims[p, p] + sims[p, k])
    sentence side: sum_k sum_{p != k} max(0, margin - sims[k, k] + sims[p, k])
    """
    B = t_emb.shape[0]
    if B < 2:
        warnings.warn("margin loss needs at least two items per batch; returning 0", RuntimeWarning)
        return Tensor(0.0)
    _check_nonzero(t_emb, v_emb)
    sims = _cosine_matrix(v_emb, t_emb)
    eye = np.eye(B)
    off = 1.0 - eye
    diag = (sims * eye).sum(axis=1, keepdims=True)  # (B, 1)
    image_side = ad.relu(margin - diag + sims) * off
    sentence_side = ad.relu(margin - ad.transpose(diag) + sims) * off
    return image_side.sum() + sentence_side.sum()


def vag_pair_margin_loss(p, t, v, margin=0.1):
    t_emb, v_emb = vag_projections(p, t, v)
    return bidirectional_hinge(t_emb, v_emb, margin)


# losses

def sequence_nll(distributions, reference_ids, mask=None, floor=1e-30):
    """Per-sentence -sum_j log p(y_j); padded positions are skipped.

    ``distributions`` is a list of (B, V) tensors, one per target position.
    Probabilities below ``floor`` are clamped and a RuntimeWarning is issued.
    """
    reference_ids = np.atleast_2d(reference_ids)
    if mask is None:
        mask = reference_ids != PAD_ID
    if len(distributions) != reference_ids.shape[1]:
        raise ValueError("one distribution per reference position is required")
    total = None
    clamped = False
    for j, dist in enumerate(distributions):
        picked = ad.pick(dist, reference_ids[:, j])
        logp, _ = ad.log_clamped(picked, floor)
        clamped |= bool(((picked.data < floor) & mask[:, j]).any())
        term = logp * mask[:, j].astype(np.float64)
        total = term if total is None else total + term
    if clamped:
        warnings.warn(f"probability below {floor} clamped in NLL", RuntimeWarning)
    return -1.0 * total


def multitask_loss(task, latent, lam=0.5):
    """lam * task + (1 - lam) * latent"""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return lam * task + (1.0 - lam) * latent


def forward_loss(p, cfg, batch, lam=0.5, alpha=0.1, gamma=0.1, dropout=0.0, rng=None):
    """Batch-averaged training objective.

    Returns (total, task, latent) scalar tensors where task is the mean
    sentence NLL and latent the batch latent loss divided by the batch size.
    """
    B = len(batch)
    enc = encode_bigru(p, batch.src, batch.src_mask, dropout, rng)
    t = None
    latent = None
    if cfg.kind == "imagination":
        latent = imagination_batch_margin_loss(imagination_latent(p, enc), batch.global_feats, alpha)
    elif cfg.kind == "vag":
        _, t = vag_sentence_representation(p, enc, batch.global_feats)
        latent = vag_pair_margin_loss(p, t, batch.global_feats, gamma)
    s_hat = decoder_init(p, enc, cfg, t)
    cache = make_cache(p, cfg, enc, batch.spatial_feats)
    step = decoder_step(cfg.kind)
    dists = []
    for j in range(batch.tgt_in.shape[1]):
        dist, s_hat, _ = step(p, s_hat, batch.tgt_in[:, j], enc, cache, dropout, rng)
        dists.append(dist)
    nll = sequence_nll(dists, batch.tgt_out, batch.tgt_mask).sum() * (1.0 / B)
    if latent is None:
        return nll, nll, Tensor(0.0)
    latent = latent * (1.0 / B)
    return multitask_loss(nll, latent, lam), nll, latent


def greedy_decode(params, sources, global_feats=None, spatial_feats=None, max_len=50):
    """Argmax decoding from BOS until EOS or ``max_len`` tokens.

    ``params`` is a :class:`ModelParams`; ``sources`` a list of id lists.
    Returns one id list per source, without BOS/EOS. Ties go to the lower id.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    cfg = params.config
    p = as_tensors(params.arrays)
    src, src_mask = pad_ids([list(s) for s in sources])
    enc = encode_bigru(p, src, src_mask)
    t = None
    if cfg.kind == "vag":
        _, t = vag_sentence_representation(p, enc, np.asarray(global_feats, dtype=np.float64))
    s_hat = decoder_init(p, enc, cfg, t)
    cache = make_cache(p, cfg, enc, spatial_feats)
    step = decoder_step(cfg.kind)
    B = src.shape[0]
    prev = np.full(B, BOS_ID, dtype=np.int64)
    outputs = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    for _ in range(max_len):
        dist, s_hat, _ = step(p, s_hat, prev, enc, cache)
        prev = np.argmax(dist.data, axis=1)
        for b in np.flatnonzero(~done):
            if prev[b] == EOS_ID:
                done[b] = True
            else:
                outputs[b].append(int(prev[b]))
        if done.all():
            break
    return outputs
