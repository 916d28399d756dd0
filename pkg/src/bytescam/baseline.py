"""L2-regularized logistic regression over L1-normalized n-gram counts."""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import numcore as nc
from .errors import MissingClass
from .model import PROB_EPS


@dataclass
class LinearModel:
    weights: np.ndarray   # dense over vocabulary ids
    bias: float
    lam: float


def counts_matrix(count_maps, vocab_size):
    """Stack ``{id: count}`` maps into a CSR matrix with rows scaled to sum 1."""
    rows, cols, vals = [], [], []
    for i, counts in enumerate(count_maps):
        total = sum(counts.values())
        for j in sorted(counts):
            rows.append(i)
            cols.append(j)
            vals.append(counts[j] / total)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(count_maps), vocab_size), dtype=np.float64)


def _as_matrix(counts, vocab_size):
    if sparse.issparse(counts) or isinstance(counts, np.ndarray):
        return counts
    if isinstance(counts, dict):
        return counts_matrix([counts], vocab_size)
    return counts_matrix(list(counts), vocab_size)


def baseline_loss_and_grad(w, b, X, y, lam):
    """Mean cross-entropy + ``lam/2 * ||w||^2`` and its gradient wrt (w, b)."""
    p = nc.sigmoid(X @ w + b)
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    loss = float(np.mean(-(y * np.log(pc) + (1 - y) * np.log1p(-pc)))) + 0.5 * lam * float(w @ w)
    r = (p - y) / len(y)
    return loss, X.T @ r + lam * w, float(r.sum())


def baseline_train(X, y, lam=1e-4, epochs=2000, lr=None, seed=0):
    """Full-batch Nesterov gradient descent from a small seeded start.

    With L1-normalized rows the loss is (0.25 + lam)-smooth, which sets the
    default step size.
    """
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0 or not (y == 0).any() or not (y == 1).any():
        raise MissingClass("baseline needs both classes")
    X = X if sparse.issparse(X) else sparse.csr_matrix(np.asarray(X, dtype=np.float64))
    lr = 1.0 / (0.25 + lam) if lr is None else lr
    rng = nc.make_rng(seed)
    w = rng.normal(0.0, 0.01, X.shape[1])
    b = 0.0
    w_prev, b_prev = w.copy(), b
    for k in range(1, epochs + 1):
        mom = (k - 1) / (k + 2)
        vw, vb = w + mom * (w - w_prev), b + mom * (b - b_prev)
        _, gw, gb = baseline_loss_and_grad(vw, vb, X, y, lam)
        w_prev, b_prev = w, b
        w, b = vw - lr * gw, vb - lr * gb
    return LinearModel(w, float(b), lam)


def baseline_predict(model, counts):
    """Probability of scam for one ``{id: count}`` map or a row matrix."""
    X = _as_matrix(counts, len(model.weights))
    p = nc.sigmoid(X @ model.weights + model.bias)
    return float(p[0]) if isinstance(counts, dict) else p
