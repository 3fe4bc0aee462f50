"""Plain numpy primitives: softmax, cosine similarity and a deterministic PCA."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, NumericalError
from . import autodiff as ad


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cosine_similarity(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"cosine: incompatible shapes {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise NumericalError("cosine similarity of a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def dense_ops(a, b=None, kind="affine", bias=None):
    """Dispatch one of the primitive dense operations by name.

    ``affine`` computes ``a @ b.T + bias`` (``b`` stored as (out, in)),
    ``concat`` joins along the last axis, ``mean`` averages the rows of ``a``,
    ``tanh``/``sigmoid`` are unary, ``hadamard`` is the elementwise product.
    Inputs may be arrays or :class:`~mmtemb.numerics.autodiff.Tensor`; the
    result is a Tensor and is recorded when a DiffGraph is active.
    """
    if kind == "affine":
        return ad.linear(a, b, bias)
    if kind == "concat":
        return ad.concat([a, b], axis=-1)
    if kind == "mean":
        return ad.tmean(a, axis=0)
    if kind == "tanh":
        return ad.tanh(a)
    if kind == "sigmoid":
        return ad.sigmoid(a)
    if kind == "hadamard":
        a, b = ad.as_tensor(a), ad.as_tensor(b)
        if a.shape != b.shape:
            raise DimensionError(f"hadamard: incompatible shapes {a.shape} and {b.shape}")
        return ad.mul(a, b)
    raise ValueError(f"unknown dense op {kind!r}")


@dataclass(frozen=True)
class PcaBasis:
    components: np.ndarray  # (n, dim), one unit vector per row
    eigenvalues: np.ndarray  # (n,), non-increasing

    def __len__(self):
        return len(self.eigenvalues)


def _round_robin(n):
    """Pairings of 0..n-1 (n even) such that every pair meets exactly once
    over n-1 rounds and each round's pairs are disjoint."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        rounds.append((np.array(players[:half]), np.array(players[half:][::-1])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(a, max_sweeps=100, tol=1e-12):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once in round-robin order; the
    pairs of one round are disjoint, so their rotations commute and are
    applied together. Returns ``(eigenvalues, eigenvectors)`` with
    eigenvectors in the columns, unsorted. Converged when the off-diagonal
    Frobenius norm is at most ``tol`` times the Frobenius norm of ``a``.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape != (n, n):
        raise DimensionError(f"jacobi_eigh needs a square matrix, got {a.shape}")
    scale = np.linalg.norm(a)
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(scale, 1.0)):
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    if n == 1 or scale == 0:
        return np.diag(a).copy(), np.eye(n)
    size = n + (n % 2)
    if size != n:
        # dummy row/column, decoupled from the rest
        a = np.pad(a, ((0, 1), (0, 1)))
    v = np.eye(size)
    threshold = tol * scale
    rounds = _round_robin(size)

    def off_norm(m):
        off = m - np.diag(np.diag(m))
        return np.sqrt(np.sum(off * off))

    for _ in range(max_sweeps):
        if off_norm(a) <= threshold:
            break
        for p, q in rounds:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            active = apq != 0.0
            safe = np.where(active, apq, 1.0)
            with np.errstate(over="ignore"):
                # huge theta means a negligible rotation; t underflows to 0
                theta = (aqq - app) / (2.0 * safe)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            ap = a[:, p]
            aq = a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            rp = a[p, :]
            rq = a[q, :]
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    else:
        if off_norm(a) > threshold:
            raise NumericalError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    return np.diag(a)[:n].copy(), v[:n, :n]


def _fix_sign(vec, eps=1e-12):
    nonzero = np.flatnonzero(np.abs(vec) > eps)
    if nonzero.size and vec[nonzero[0]] < 0:
        return -vec
    return vec


def pca_top_components(rows, n):
    """Top-``n`` principal axes of already-centered ``rows``.

    Eigenvectors of the sample covariance (denominator ``len(rows) - 1``),
    ordered by descending eigenvalue, each with its first nonzero
    coordinate positive.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"PCA needs a 2-D matrix, got shape {x.shape}")
    if n < 0 or n > min(x.shape):
        raise ValueError(f"cannot take {n} components from a {x.shape} matrix")
    dim = x.shape[1]
    if n == 0:
        return PcaBasis(np.zeros((0, dim)), np.zeros(0))
    cov = x.T @ x / max(x.shape[0] - 1, 1)
    vals, vecs = jacobi_eigh(cov)
    # stable sort keeps equal eigenvalues in index order
    order = np.argsort(-vals, kind="stable")[:n]
    comps = np.array([_fix_sign(vecs[:, i]) for i in order])
    comps /= np.linalg.norm(comps, axis=1, keepdims=True)
    return PcaBasis(comps, np.maximum(vals[order], 0.0))
