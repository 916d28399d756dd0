"""Recurrent n-gram classifier with context-vector attention pooling.

Architecture: embedding lookup -> recurrent encoder (RNN, LSTM or GRU) ->
either attention pooling ``c = sum_i alpha_i h_i`` with
``alpha = softmax(h_i . V / sqrt(d))`` or the hidden state at the last real
position -> ``sigmoid(w . c + b)``.

Everything is batched over a leading axis. Sequences are right-padded; padded
steps carry the previous state forward unchanged and get zero attention, so
padding never influences the output.
"""

import hashlib
import json
import struct
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from . import numcore as nc
from .errors import (
    CorruptFile,
    EmptySequence,
    FormatVersionMismatch,
    ShapeMismatch,
    VocabHashMismatch,
)

CELLS = {"rnn": 1, "gru": 3, "lstm": 4}
EMBEDDINGS = ("learned", "onehot")
PROB_EPS = 1e-12
# Weights covered by the L2 term. Biases and the embedding table are exempt.
REGULARIZED = ("W", "U", "context", "w_out")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 2
    n: int = 2
    embed_dim: int = 32
    hidden_dim: int = 64
    cell: str = "gru"
    attention: bool = True
    lam: float = 1e-5
    max_len: int = 2048
    embedding: str = "learned"

    def __post_init__(self):
        if self.cell not in CELLS:
            raise ValueError(f"cell must be one of {sorted(CELLS)}, got {self.cell!r}")
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f"embedding must be one of {EMBEDDINGS}, got {self.embedding!r}")
        if self.vocab_size < 2 or self.embed_dim < 1 or self.hidden_dim < 1 or self.max_len < 1:
            raise ValueError(f"invalid dimensions in {self}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def input_dim(self):
        return self.vocab_size if self.embedding == "onehot" else self.embed_dim

    @property
    def name(self):
        label = {"rnn": "RNN", "gru": "GRU", "lstm": "LSTM"}[self.cell]
        return label + "+Attention" if self.attention else label


def param_shapes(cfg):
    """Ordered ``name -> shape`` for every trainable tensor."""
    E, d, k = cfg.input_dim, cfg.hidden_dim, CELLS[cfg.cell]
    shapes = {}
    if cfg.embedding == "learned":
        shapes["embedding"] = (cfg.vocab_size, E)
    shapes["W"] = (E, k * d)
    shapes["U"] = (d, k * d)
    shapes["b"] = (k * d,)
    if cfg.attention:
        shapes["context"] = (d,)
    shapes["w_out"] = (d,)
    shapes["b_out"] = ()
    return shapes


def param_count(cfg):
    """Closed form: ``V*E + k*(E*d + d*d + d) + [d] + d + 1``."""
    E, d, k = cfg.input_dim, cfg.hidden_dim, CELLS[cfg.cell]
    emb = cfg.vocab_size * E if cfg.embedding == "learned" else 0
    return emb + k * (E * d + d * d + d) + (d if cfg.attention else 0) + d + 1


class ModelParams(dict):
    """Ordered mapping of tensor name -> float64 array."""

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.items()})


def init_params(cfg, rng):
    params = ModelParams()
    for name, shape in param_shapes(cfg).items():
        if name in ("b", "b_out"):
            params[name] = np.zeros(shape)
        else:
            params[name] = nc.init_uniform(shape, rng)
    return params


def _embed(params, cfg, ids):
    if cfg.embedding == "onehot":
        return np.eye(cfg.vocab_size)[ids]
    return params["embedding"][ids]


# -- recurrent cells ------------------------------------------------------------
# ``a`` is the precomputed input projection x @ W + b for one time step,
# shape (B, k*d). State is (h, c); c is None except for LSTM.


def _cell_forward(cell, U, a, h, c):
    d = h.shape[-1]
    if cell == "rnn":
        h_new = nc.tanh(a + h @ U)
        return h_new, None, (h, h_new)
    if cell == "gru":
        zr = nc.sigmoid(a[:, :2 * d] + h @ U[:, :2 * d])
        z, r = zr[:, :d], zr[:, d:]
        rh = r * h
        cand = nc.tanh(a[:, 2 * d:] + rh @ U[:, 2 * d:])
        h_new = (1.0 - z) * cand + z * h
        return h_new, None, (h, z, r, rh, cand)
    pre = a + h @ U
    i, f, o = (nc.sigmoid(pre[:, j * d:(j + 1) * d]) for j in (0, 1, 3))
    g = nc.tanh(pre[:, 2 * d:3 * d])
    c_new = f * c + i * g
    tc = nc.tanh(c_new)
    return o * tc, c_new, (h, c, i, f, g, o, tc)


def _cell_backward(cell, U, cache, dh, dc, dU):
    """Returns (da, dh_prev, dc_prev) and accumulates into ``dU`` in place."""
    if cell == "rnn":
        h, h_new = cache
        dpre = nc.tanh_backward(h_new, dh)
        dU += h.T @ dpre
        return dpre, dpre @ U.T, None
    if cell == "gru":
        h, z, r, rh, cand = cache
        d = h.shape[-1]
        dz = dh * (h - cand)
        dcand = dh * (1.0 - z)
        dh_prev = dh * z
        dpre_n = nc.tanh_backward(cand, dcand)
        dU[:, 2 * d:] += rh.T @ dpre_n
        drh = dpre_n @ U[:, 2 * d:].T
        dr = drh * h
        dh_prev += drh * r
        dpre_zr = np.concatenate([nc.sigmoid_backward(z, dz), nc.sigmoid_backward(r, dr)], axis=1)
        dU[:, :2 * d] += h.T @ dpre_zr
        dh_prev += dpre_zr @ U[:, :2 * d].T
        return np.concatenate([dpre_zr, dpre_n], axis=1), dh_prev, None
    h, c, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + nc.tanh_backward(tc, dh * o)
    dpre = np.concatenate([
        nc.sigmoid_backward(i, dc * g),
        nc.sigmoid_backward(f, dc * c),
        nc.tanh_backward(g, dc * i),
        nc.sigmoid_backward(o, do),
    ], axis=1)
    dU += h.T @ dpre
    return dpre, dpre @ U.T, dc * f


def cell_step(cell, params, x, state):
    """One recurrence step for a single input vector or a batch of them.

    ``state`` is ``h`` for RNN/GRU and ``(h, c)`` for LSTM; the same shape
    comes back.
    """
    x = np.atleast_2d(x)
    if cell == "lstm":
        h, c = (np.atleast_2d(s) for s in state)
    else:
        h, c = np.atleast_2d(state), None
    if x.shape[1] != params["W"].shape[0] or h.shape[1] != params["U"].shape[0]:
        raise ShapeMismatch(f"x {x.shape} / state {h.shape} vs W {params['W'].shape}")
    a = x @ params["W"] + params["b"]
    h_new, c_new, _ = _cell_forward(cell, params["U"], a, h, c)
    squeeze = np.ndim(state[0] if cell == "lstm" else state) == 1
    if squeeze:
        h_new = h_new[0]
        c_new = None if c_new is None else c_new[0]
    return (h_new, c_new) if cell == "lstm" else h_new


# -- attention ------------------------------------------------------------------


def attention_pool(hidden, context, mask=None):
    """Scaled dot-product pooling against a learned context vector.

    ``hidden`` is (..., m, d). Returns ``(scores, weights, pooled)`` where
    masked positions get weight exactly 0.
    """
    hidden = np.asarray(hidden, dtype=np.float64)
    d = hidden.shape[-1]
    if np.shape(context) != (d,):
        raise ShapeMismatch(f"context {np.shape(context)} vs hidden dim {d}")
    scores = hidden @ context / np.sqrt(d)
    weights = nc.softmax(scores, mask)
    pooled = np.einsum("...t,...td->...d", weights, hidden)
    return scores, weights, pooled


# -- forward / loss / backward ----------------------------------------------------


@dataclass
class BatchTrace:
    prob: np.ndarray        # (B,)
    hidden: np.ndarray      # (B, T, d) state after each step (carried through padding)
    weights: np.ndarray     # (B, T) attention, or None
    pooled: np.ndarray      # (B, d)
    mask: np.ndarray        # (B, T)
    x: np.ndarray           # (B, T, E)
    caches: list


def _check_batch(cfg, ids, lengths):
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.minimum(np.asarray(lengths, dtype=np.int64), ids.shape[1])
    if ids.ndim != 2 or lengths.shape != (ids.shape[0],):
        raise ShapeMismatch(f"ids {ids.shape} / lengths {lengths.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ShapeMismatch(f"id out of range for vocab_size {cfg.vocab_size}")
    if (lengths < 1).any():
        raise EmptySequence("sequence has no n-grams")
    return ids, lengths


def forward_batch(params, cfg, ids, lengths):
    """Run the network over a right-padded batch ``ids`` (B, T)."""
    ids, lengths = _check_batch(cfg, ids, lengths)
    B, T = ids.shape
    d = cfg.hidden_dim
    mask = np.arange(T)[None, :] < lengths[:, None]
    x = _embed(params, cfg, ids)
    proj = x @ params["W"] + params["b"]
    U = params["U"]
    h = np.zeros((B, d))
    c = np.zeros((B, d)) if cfg.cell == "lstm" else None
    hidden = np.empty((B, T, d))
    caches = []
    for t in range(T):
        h_new, c_new, cache = _cell_forward(cfg.cell, U, proj[:, t], h, c)
        m = mask[:, t, None]
        h = np.where(m, h_new, h)
        if c is not None:
            c = np.where(m, c_new, c)
        hidden[:, t] = h
        caches.append(cache)
    if cfg.attention:
        _, weights, pooled = attention_pool(hidden, params["context"], mask)
    else:
        weights, pooled = None, h
    prob = nc.sigmoid(pooled @ params["w_out"] + params["b_out"])
    return BatchTrace(prob, hidden, weights, pooled, mask, x, caches)


def predict_proba(params, cfg, ids, lengths, batch_size=256):
    """Probabilities for many sequences; each chunk is trimmed to its longest member."""
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.minimum(np.asarray(lengths, dtype=np.int64), ids.shape[1])
    out = np.empty(len(ids))
    for s in range(0, len(ids), batch_size):
        L = lengths[s:s + batch_size]
        out[s:s + batch_size] = forward_batch(params, cfg, ids[s:s + batch_size, :L.max()], L).prob
    return out


@dataclass
class ForwardResult:
    prob: float
    hidden_states: np.ndarray       # (m, d) for the real positions
    attention_weights: np.ndarray   # (m,) or None


def forward(params, cfg, encoded):
    ids = np.asarray(encoded.ids, dtype=np.int64)
    if ids.shape != (cfg.max_len,):
        raise ShapeMismatch(f"expected {cfg.max_len} ids, got {ids.shape}")
    m = encoded.effective_length
    trace = forward_batch(params, cfg, ids[None, :], [m])
    weights = None if trace.weights is None else trace.weights[0, :m]
    return ForwardResult(float(trace.prob[0]), trace.hidden[0, :m], weights)


def reg_term(params, lam):
    return 0.5 * lam * sum(float(np.sum(params[k] ** 2)) for k in REGULARIZED if k in params)


def loss(prob, y, params, lam):
    """Mean binary cross-entropy plus ``lam/2 * ||omega||^2``.

    Returns ``(total, data_term, reg_term)``.
    """
    p = np.clip(np.asarray(prob, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(y, dtype=np.float64)
    data = float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))
    reg = reg_term(params, lam) if params is not None else 0.0
    return data + reg, data, reg


def backward(params, cfg, ids, lengths, labels):
    """Loss and gradients of the regularized objective over one batch.

    Returns ``(grads, (total, data_term, reg_term), trace)``; ``grads`` has the
    same keys and shapes as ``params``.
    """
    trace = forward_batch(params, cfg, ids, lengths)
    ids = np.asarray(ids, dtype=np.int64)
    y = np.asarray(labels, dtype=np.float64)
    B, T = ids.shape
    d = cfg.hidden_dim
    prob, mask = trace.prob, trace.mask
    losses = loss(prob, y, params, cfg.lam)

    # clamped probabilities have zero derivative through the clip
    live = (prob > PROB_EPS) & (prob < 1.0 - PROB_EPS)
    dlogit = np.where(live, prob - y, 0.0) / B
    grads = ModelParams({k: np.zeros_like(v) for k, v in params.items()})
    grads["w_out"] = trace.pooled.T @ dlogit
    grads["b_out"] = np.asarray(dlogit.sum())
    dpooled = dlogit[:, None] * params["w_out"][None, :]

    dhidden = np.zeros((B, T, d))
    if cfg.attention:
        alpha, hidden, V = trace.weights, trace.hidden, params["context"]
        dalpha = np.einsum("btd,bd->bt", hidden, dpooled)
        dhidden += alpha[:, :, None] * dpooled[:, None, :]
        dscores = nc.softmax_backward(alpha, dalpha) / np.sqrt(d)
        grads["context"] = np.einsum("bt,btd->d", dscores, hidden)
        dhidden += dscores[:, :, None] * V[None, None, :]
        dh = np.zeros((B, d))
    else:
        dh = dpooled
    dc = np.zeros((B, d)) if cfg.cell == "lstm" else None

    dproj = np.zeros((B, T, params["b"].shape[0]))
    U = params["U"]
    for t in range(T - 1, -1, -1):
        m = mask[:, t, None]
        dh = dh + dhidden[:, t]
        dh_new = np.where(m, dh, 0.0)
        dc_new = None if dc is None else np.where(m, dc, 0.0)
        da, dh_prev, dc_prev = _cell_backward(cfg.cell, U, trace.caches[t], dh_new, dc_new, grads["U"])
        dproj[:, t] = da
        dh = np.where(m, 0.0, dh) + dh_prev
        if dc is not None:
            dc = np.where(m, 0.0, dc) + dc_prev

    E = trace.x.shape[-1]
    flat = dproj.reshape(-1, dproj.shape[-1])
    grads["W"] = trace.x.reshape(-1, E).T @ flat
    grads["b"] = flat.sum(axis=0)
    if cfg.embedding == "learned":
        dx = dproj[mask] @ params["W"].T
        np.add.at(grads["embedding"], ids[mask], dx)
    for k in REGULARIZED:
        if k in params:
            grads[k] += cfg.lam * params[k]
    return grads, losses, trace


def predict_label(prob):
    """0 (safe) below 0.5, else 1 (scam); exactly 0.5 counts as scam."""
    if np.ndim(prob):
        return (np.asarray(prob) >= 0.5).astype(np.int64)
    return 0 if prob < 0.5 else 1


# -- checkpoints ------------------------------------------------------------------
# Layout (little-endian):
#   magic "BSCMCKPT" | u32 version | u32 len + config JSON | 32-byte vocab sha256
#   | u32 tensor count | per tensor: u16 len + name, u8 ndim, u32 dims, f64 data
#   | u32 crc32 of everything before it

CKPT_MAGIC = b"BSCMCKPT"
CKPT_VERSION = 1


def save_checkpoint(params, cfg, vocab_hash, path):
    parts = [CKPT_MAGIC, struct.pack("<I", CKPT_VERSION)]
    cfg_blob = json.dumps(asdict(cfg), sort_keys=True).encode("utf-8")
    parts += [struct.pack("<I", len(cfg_blob)), cfg_blob, bytes.fromhex(vocab_hash)]
    names = list(param_shapes(cfg))
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.array(params[name], dtype="<f8", order="C")
        raw = name.encode("ascii")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim)]
        parts += [struct.pack("<I", s) for s in arr.shape]
        parts.append(arr.tobytes())
    body = b"".join(parts)
    with open(path, "wb") as f:
        f.write(body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CorruptFile("checkpoint truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def load_checkpoint(path, expected_vocab_hash=None):
    """Returns ``(params, cfg, vocab_hash)``."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < len(CKPT_MAGIC) + 8 or buf[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CorruptFile("not a checkpoint file")
    r = _Reader(buf[:-4])
    r.take(len(CKPT_MAGIC))
    version = r.unpack("<I")
    if version != CKPT_VERSION:
        raise FormatVersionMismatch(f"checkpoint version {version}, expected {CKPT_VERSION}")
    if struct.unpack("<I", buf[-4:])[0] != zlib.crc32(buf[:-4]):
        raise CorruptFile("checksum mismatch (truncated or corrupted)")
    try:
        cfg = ModelConfig(**json.loads(r.take(r.unpack("<I")).decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise CorruptFile(f"bad config block: {exc}") from exc
    vocab_hash = r.take(32).hex()
    if expected_vocab_hash is not None and expected_vocab_hash != vocab_hash:
        raise VocabHashMismatch(f"checkpoint built for vocabulary {vocab_hash[:12]}, got {expected_vocab_hash[:12]}")
    expected = param_shapes(cfg)
    params = ModelParams()
    for _ in range(r.unpack("<I")):
        name = r.take(r.unpack("<H")).decode("ascii")
        shape = tuple(r.unpack("<I") for _ in range(r.unpack("<B")))
        if expected.get(name) != shape:
            raise CorruptFile(f"tensor {name} has shape {shape}, config expects {expected.get(name)}")
        count = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
    if list(params) != list(expected) or r.pos != len(r.buf):
        raise CorruptFile("tensor table does not match config")
    return params, cfg, vocab_hash


def file_digest(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
