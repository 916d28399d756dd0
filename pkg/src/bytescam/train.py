"""Splitting, rebalancing, the training loop, metrics and the ablation harness."""

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import baseline as bl
from . import model as M
from .errors import DivergenceDetected, MissingClass, UnlabeledRecord
from .features import build_vocab, count_vector, encode
from .numcore import make_rng
from .tokenizer import tokenize

log = logging.getLogger(__name__)

# child stream ids for make_rng(seed, stream)
_SPLIT, _REBALANCE, _INIT, _SHUFFLE, _BASELINE = range(5)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float | None = None      # global gradient-norm cap, off by default
    undersample_benign_to: int = 1000
    split: tuple = (0.6, 0.2, 0.2)
    min_count: int = 1
    max_size: int | None = None
    model: M.ModelConfig = field(default_factory=M.ModelConfig)

    def __post_init__(self):
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split fractions must be three non-negatives summing to 1: {self.split}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")


# -- data preparation --------------------------------------------------------------


def split_dataset(ds, seed, fractions=(0.6, 0.2, 0.2)):
    """Stratified, seeded split into (train, val, test) record lists.

    Sizes are floor(f0*N), floor(f1*N) and the remainder. Each class is
    shuffled on its own and the classes are interleaved by relative rank, so
    any prefix of the merged order holds both classes in proportion.
    """
    records = list(ds)
    if any(r.label is None for r in records):
        raise UnlabeledRecord("every record needs a label to be split")
    if len(records) < 5:
        raise ValueError(f"need at least 5 records to split, got {len(records)}")
    rng = make_rng(seed, _SPLIT)
    keyed = []
    for label in (0, 1):
        group = [r for r in records if r.label == label]
        for rank, j in enumerate(rng.permutation(len(group))):
            keyed.append(((rank + 0.5) / len(group), label, group[j]))
    keyed.sort(key=lambda t: (t[0], t[1]))
    ordered = [r for _, _, r in keyed]
    n = len(ordered)
    n_train = math.floor(fractions[0] * n)
    n_val = math.floor(fractions[1] * n)
    return ordered[:n_train], ordered[n_train:n_train + n_val], ordered[n_train + n_val:]


def rebalance(records, seed, undersample_benign_to=1000):
    """Undersample benign without replacement, then oversample scams to match.

    Every scam record is kept at least once when scams are the minority;
    duplicates are drawn uniformly with replacement.
    """
    benign = [r for r in records if r.label == 0]
    scam = [r for r in records if r.label == 1]
    if not benign or not scam:
        raise MissingClass(f"need both classes, got {len(benign)} benign / {len(scam)} scam")
    rng = make_rng(seed, _REBALANCE)
    k = min(len(benign), undersample_benign_to)
    benign = [benign[i] for i in sorted(rng.choice(len(benign), size=k, replace=False))]
    if len(scam) >= k:
        scam = [scam[i] for i in sorted(rng.choice(len(scam), size=k, replace=False))]
    else:
        scam = scam + [scam[i] for i in rng.integers(0, len(scam), size=k - len(scam))]
    out = benign + scam
    return [out[i] for i in rng.permutation(len(out))]


@dataclass
class EncodedSplit:
    ids: np.ndarray       # (N, max_len) int64
    lengths: np.ndarray   # (N,) n-gram counts, uncapped
    labels: np.ndarray    # (N,) int64

    def __len__(self):
        return len(self.labels)


def encode_records(records, vocab, max_len, token_cache=None):
    token_cache = {} if token_cache is None else token_cache
    ids, lengths = [], []
    for r in records:
        toks = token_cache.get(r.bytecode_hex)
        if toks is None:
            toks = token_cache[r.bytecode_hex] = tokenize(r.bytecode_hex)
        enc = encode(toks, vocab, max_len)
        ids.append(enc.ids)
        lengths.append(enc.true_length)
    labels = [r.label if r.label is not None else -1 for r in records]
    return EncodedSplit(
        np.array(ids, dtype=np.int64).reshape(len(records), max_len),
        np.array(lengths, dtype=np.int64),
        np.array(labels, dtype=np.int64),
    )


# -- metrics ---------------------------------------------------------------------


def _ratio(num, den):
    return num / den if den else 0.0


@dataclass(frozen=True)
class EvalMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, y_true, y_pred):
        y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
        return cls(
            int(np.sum((y_true == 1) & (y_pred == 1))),
            int(np.sum((y_true == 0) & (y_pred == 1))),
            int(np.sum((y_true == 0) & (y_pred == 0))),
            int(np.sum((y_true == 1) & (y_pred == 0))),
        )

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self):
        return _ratio(self.tp + self.tn, self.total)

    @property
    def precision(self):
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self):
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return _ratio(2 * p * r, p + r)

    def to_dict(self):
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
        }


def evaluate(params, cfg, split):
    probs = M.predict_proba(params, cfg, split.ids, split.lengths)
    return EvalMetrics.from_predictions(split.labels, M.predict_label(probs))


# -- optimization -------------------------------------------------------------------


def clip_global_norm(grads, max_norm):
    """Scale every gradient in place so their joint L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        for k in grads:
            grads[k] = grads[k] * (max_norm / norm)
    return norm


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    val_f1: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0

    HEADER = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.train_acc), repr(e.val_loss), repr(e.val_acc)])
        return buf.getvalue()

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())


def train_loop(train, val, cfg, on_epoch=None):
    """Minibatch Adam over ``cfg.epochs`` epochs.

    ``train`` and ``val`` are ``EncodedSplit``s built with a vocabulary whose
    size matches ``cfg.model.vocab_size``. Returns the parameters from the
    epoch with the best validation F1 (earliest on ties) and the history.
    """
    mcfg = cfg.model
    if len(train) == 0:
        raise ValueError("empty training set")
    params = M.init_params(mcfg, make_rng(cfg.seed, _INIT))
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    shuffler = make_rng(cfg.seed, _SHUFFLE)
    lengths = np.minimum(train.lengths, mcfg.max_len)
    history = TrainHistory()
    best_f1, best_params = -1.0, None

    for epoch in range(1, cfg.epochs + 1):
        order = shuffler.permutation(len(train))
        loss_sum = 0.0
        correct = 0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            L = lengths[idx]
            grads, (total, _, _), trace = M.backward(params, mcfg, train.ids[idx, :L.max()], L, train.labels[idx])
            if not np.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergenceDetected(f"non-finite loss/gradient at epoch {epoch}, batch {s // cfg.batch_size}: loss={total}")
            if cfg.clip_norm is not None:
                clip_global_norm(grads, cfg.clip_norm)
            opt.step(params, grads)
            loss_sum += total * len(idx)
            correct += int(np.sum(M.predict_label(trace.prob) == train.labels[idx]))

        if len(val):
            probs = M.predict_proba(params, mcfg, val.ids, val.lengths)
            val_loss = M.loss(probs, val.labels, params, mcfg.lam)[0]
            vm = EvalMetrics.from_predictions(val.labels, M.predict_label(probs))
            val_acc, val_f1 = vm.accuracy, vm.f1
        else:
            val_loss, val_acc, val_f1 = float("nan"), float("nan"), 0.0
        stats = EpochStats(epoch, loss_sum / len(train), correct / len(train), val_loss, val_acc, val_f1)
        history.epochs.append(stats)
        if val_f1 > best_f1:
            best_f1, best_params, history.best_epoch = val_f1, params.copy(), epoch
        log.info("epoch %d train_loss %.5f train_acc %.4f val_loss %.5f val_acc %.4f val_f1 %.4f",
                 epoch, stats.train_loss, stats.train_acc, val_loss, val_acc, val_f1)
        if on_epoch is not None:
            on_epoch(stats)
    return best_params, history


# -- end-to-end ----------------------------------------------------------------------


@dataclass
class Experiment:
    vocab: object
    model_cfg: M.ModelConfig
    params: M.ModelParams
    history: TrainHistory
    test_metrics: EvalMetrics
    splits: tuple           # (train, val, test) record lists, natural distribution
    balanced_train: list


def prepare(ds, cfg, token_cache=None):
    """Split, build the vocabulary on the training split only, rebalance."""
    token_cache = {} if token_cache is None else token_cache
    train, val, test = split_dataset(ds, cfg.seed, cfg.split)
    corpus = []
    for r in train:
        if r.bytecode_hex not in token_cache:
            token_cache[r.bytecode_hex] = tokenize(r.bytecode_hex)
        corpus.append(token_cache[r.bytecode_hex])
    vocab = build_vocab(corpus, cfg.model.n, cfg.min_count, cfg.max_size)
    balanced = rebalance(train, cfg.seed, cfg.undersample_benign_to)
    return (train, val, test), vocab, balanced


def run_experiment(ds, cfg, token_cache=None, on_epoch=None):
    token_cache = {} if token_cache is None else token_cache
    splits, vocab, balanced = prepare(ds, cfg, token_cache)
    mcfg = replace(cfg.model, vocab_size=vocab.size)
    cfg = replace(cfg, model=mcfg)
    enc = lambda recs: encode_records(recs, vocab, mcfg.max_len, token_cache)  # noqa: E731
    params, history = train_loop(enc(balanced), enc(splits[1]), cfg, on_epoch)
    test_metrics = evaluate(params, mcfg, enc(splits[2]))
    return Experiment(vocab, mcfg, params, history, test_metrics, splits, balanced)


def metrics_json(metrics, extra=None):
    """Canonical, byte-stable JSON for a metrics file."""
    out = metrics.to_dict()
    out["evaluated_on"] = "natural-distribution test split"
    out.update(extra or {})
    return json.dumps(out, sort_keys=True, indent=2) + "\n"


# -- ablations ----------------------------------------------------------------------

EMBEDDING_ROWS = (
    ("Feature-Direct", dict(n=1, embedding="onehot")),
    ("1-gram", dict(n=1)),
    ("2-gram", dict(n=2)),
    ("3-gram", dict(n=3)),
)
ARCHITECTURE_ROWS = tuple(
    (f"{name}+Attention" if att else name, dict(cell=cell, attention=att))
    for name, cell in (("RNN", "rnn"), ("LSTM", "lstm"), ("GRU", "gru"))
    for att in (False, True)
)
BASELINE_ROW = "LogReg-baseline"
ORDERING_NOTE = ("row ordering is corpus-specific and not asserted; rankings measured "
                 "on other corpora need not reproduce on this data")


@dataclass
class AblationRow:
    table: str
    method: str
    n: int
    n_params: int
    metrics: EvalMetrics


def ablation_plan(base_cfg, only=None):
    """The (table, method, TrainConfig) rows in canonical order, optionally filtered."""
    base_model = base_cfg.model
    plan = []
    for name, over in EMBEDDING_ROWS:
        over = {"cell": "gru", "attention": True, "embedding": "learned", **over}
        plan.append(("embedding", name, replace(base_cfg, model=replace(base_model, **over))))
    for name, over in ARCHITECTURE_ROWS:
        plan.append(("architecture", name, replace(base_cfg, model=replace(base_model, embedding="learned", **over))))
    plan.append(("baseline", BASELINE_ROW, base_cfg))
    if only:
        wanted = {o.strip().lower() for o in only}
        plan = [p for p in plan if p[1].lower() in wanted]
    return plan


def run_ablation(ds, base_cfg, only=None, baseline_lam=1e-4, baseline_epochs=2000):
    """Train and test every ablation row on identical seeded splits.

    Rows with identical model settings (the 2-gram row and GRU+Attention at
    n=2) are trained once and reported twice.
    """
    token_cache, done, rows = {}, {}, []
    for table, method, cfg in ablation_plan(base_cfg, only):
        if table == "baseline":
            metrics, n_params = run_baseline(ds, base_cfg, token_cache, baseline_lam, baseline_epochs)
            rows.append(AblationRow(table, method, base_cfg.model.n, n_params, metrics))
            continue
        key = replace(cfg.model, vocab_size=2)
        if key not in done:
            log.info("ablation: training %s / %s", table, method)
            exp = run_experiment(ds, cfg, token_cache)
            done[key] = (exp.test_metrics, M.param_count(exp.model_cfg))
        metrics, n_params = done[key]
        rows.append(AblationRow(table, method, cfg.model.n, n_params, metrics))
    return rows


def run_baseline(ds, cfg, token_cache=None, lam=1e-4, epochs=2000):
    """Logistic regression on count vectors, same splits and rebalancing."""
    (_, _, test), vocab, balanced = prepare(ds, cfg, token_cache)
    cache = token_cache if token_cache is not None else {}

    def counts(recs):
        return [count_vector(cache.get(r.bytecode_hex) or tokenize(r.bytecode_hex), vocab) for r in recs]

    X_train = bl.counts_matrix(counts(balanced), vocab.size)
    y_train = np.array([r.label for r in balanced])
    lin = bl.baseline_train(X_train, y_train, lam=lam, epochs=epochs, seed=cfg.seed)
    probs = bl.baseline_predict(lin, bl.counts_matrix(counts(test), vocab.size))
    metrics = EvalMetrics.from_predictions([r.label for r in test], M.predict_label(probs))
    return metrics, vocab.size + 1


ABLATION_COLUMNS = ("table", "method", "n", "params", "accuracy", "precision", "recall", "f1", "tp", "fp", "tn", "fn")


def ablation_tsv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(ABLATION_COLUMNS)
    for r in rows:
        m = r.metrics
        w.writerow([r.table, r.method, r.n, r.n_params, f"{m.accuracy:.6f}", f"{m.precision:.6f}",
                    f"{m.recall:.6f}", f"{m.f1:.6f}", m.tp, m.fp, m.tn, m.fn])
    return buf.getvalue()


def ablation_pretty(rows):
    lines = []
    for table in ("embedding", "architecture", "baseline"):
        sub = [r for r in rows if r.table == table]
        if not sub:
            continue
        width = max(len(r.method) for r in sub)
        lines.append(f"[{table}]")
        lines.append(f"{'method':<{width}}  {'acc':>6}  {'prec':>6}  {'recall':>6}  {'f1':>6}")
        for r in sub:
            m = r.metrics
            lines.append(f"{r.method:<{width}}  {m.accuracy:6.3f}  {m.precision:6.3f}  {m.recall:6.3f}  {m.f1:6.3f}")
        lines.append("")
    lines.append(f"note: {ORDERING_NOTE}")
    return "\n".join(lines) + "\n"


def config_dict(cfg):
    out = asdict(cfg)
    out["split"] = list(cfg.split)
    return out
