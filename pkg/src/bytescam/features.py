"""Byte n-gram extraction, vocabularies and sequence encoding."""

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from types import MappingProxyType

from .errors import CorruptFile, FormatVersionMismatch

PAD = 0
UNK = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
VOCAB_FORMAT_VERSION = 1
_VOCAB_MAGIC = "#ngram-vocab"


def extract_ngrams(tokens, n):
    """Sliding window of ``n`` tokens with stride 1, each window concatenated."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return ["".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


@dataclass(frozen=True)
class NgramVocabulary:
    n: int
    entries: MappingProxyType  # n-gram -> id, ids >= 2
    _by_id: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = MappingProxyType(dict(self.entries))
        object.__setattr__(self, "entries", entries)
        by_id = [PAD_TOKEN, UNK_TOKEN] + [None] * len(entries)
        for gram, idx in entries.items():
            if len(gram) != 2 * self.n:
                raise ValueError(f"n-gram {gram!r} is not {self.n} bytes")
            if not 2 <= idx < len(by_id) or by_id[idx] is not None:
                raise ValueError(f"ids are not dense: {gram!r} -> {idx}")
            by_id[idx] = gram
        object.__setattr__(self, "_by_id", tuple(by_id))

    @property
    def size(self):
        return len(self._by_id)

    def id_of(self, gram):
        return self.entries.get(gram, UNK)

    def ngram_of(self, idx):
        return self._by_id[idx]

    def to_text(self):
        lines = [f"{_VOCAB_MAGIC}\tversion={VOCAB_FORMAT_VERSION}\tn={self.n}\tsize={self.size}"]
        lines += [f"{gram}\t{i}" for i, gram in enumerate(self._by_id)]
        return "\n".join(lines) + "\n"

    def sha256(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_text())

    @classmethod
    def from_text(cls, text):
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or not lines[0].startswith(_VOCAB_MAGIC):
            raise CorruptFile("missing vocabulary header")
        try:
            header = dict(kv.split("=", 1) for kv in lines[0].split("\t")[1:])
            version, n, size = int(header["version"]), int(header["n"]), int(header["size"])
        except (KeyError, ValueError) as exc:
            raise CorruptFile(f"bad vocabulary header: {lines[0]!r}") from exc
        if version != VOCAB_FORMAT_VERSION:
            raise FormatVersionMismatch(f"vocabulary format {version}, expected {VOCAB_FORMAT_VERSION}")
        if len(lines) - 1 != size:
            raise CorruptFile(f"header says {size} entries, found {len(lines) - 1}")
        entries = {}
        for lineno, line in enumerate(lines[1:], start=2):
            try:
                gram, idx = line.split("\t")
                idx = int(idx)
            except ValueError as exc:
                raise CorruptFile(f"line {lineno}: malformed row {line!r}") from exc
            if idx != lineno - 2:
                raise CorruptFile(f"line {lineno}: id {idx} out of order")
            if idx >= 2:
                entries[gram] = idx
            elif gram != (PAD_TOKEN, UNK_TOKEN)[idx]:
                raise CorruptFile(f"line {lineno}: reserved id {idx} mislabeled")
        try:
            return cls(n, entries)
        except ValueError as exc:
            raise CorruptFile(str(exc)) from exc

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8", newline="") as f:
            return cls.from_text(f.read())


def build_vocab(corpus, n, min_count=1, max_size=None):
    """Count n-grams over ``corpus`` and assign ids by (frequency desc, n-gram asc).

    ``max_size`` caps the number of n-gram entries, not counting PAD/UNK.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    counts = Counter()
    for tokens in corpus:
        counts.update(extract_ngrams(tokens, n))
    ranked = sorted((g for g, c in counts.items() if c >= min_count), key=lambda g: (-counts[g], g))
    if max_size is not None:
        ranked = ranked[:max_size]
    return NgramVocabulary(n, {g: i + 2 for i, g in enumerate(ranked)})


@dataclass(frozen=True)
class EncodedSequence:
    ids: tuple
    true_length: int

    @property
    def effective_length(self):
        return min(self.true_length, len(self.ids))


def encode(tokens, vocab, max_len):
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    grams = extract_ngrams(tokens, vocab.n)
    ids = [vocab.id_of(g) for g in grams[:max_len]]
    ids += [PAD] * (max_len - len(ids))
    return EncodedSequence(tuple(ids), len(grams))


def count_vector(tokens, vocab):
    """Sparse id -> count map; out-of-vocabulary n-grams pile up on UNK."""
    return dict(Counter(vocab.id_of(g) for g in extract_ngrams(tokens, vocab.n)))
