import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bytescam.errors import CorruptFile, FormatVersionMismatch
from bytescam.features import (
    PAD,
    UNK,
    NgramVocabulary,
    build_vocab,
    count_vector,
    encode,
    extract_ngrams,
)
from bytescam.tokenizer import tokenize


def slice_oracle(h, n):
    """n-grams straight from the hex string, no tokens involved."""
    m = len(h) // 2
    return [h[2 * i:2 * (i + n)] for i in range(m - n + 1)] if m >= n else []


def count_oracle(h, vocab):
    counts = {}
    for g in slice_oracle(h, vocab.n):
        i = vocab.entries[g] if g in vocab.entries else 1
        counts[i] = counts.get(i, 0) + 1
    return counts


def test_extract_examples():
    assert extract_ngrams(["60", "80", "60"], 2) == ["6080", "8060"]
    toks = ["aa", "bb", "cc"]
    assert extract_ngrams(toks, 1) == toks
    assert extract_ngrams(toks, 4) == []


@given(st.binary(min_size=1, max_size=40), st.integers(1, 4))
def test_extract_matches_oracle(raw, n):
    h = raw.hex()
    grams = extract_ngrams(tokenize(h), n)
    assert grams == slice_oracle(h, n)
    assert len(grams) == max(0, len(raw) - n + 1)


def test_build_vocab_example():
    v = build_vocab([["60", "80", "60"]], 2, min_count=1)
    assert v.size == 4
    assert dict(v.entries) == {"6080": 2, "8060": 3}
    assert v.ngram_of(PAD) == "<pad>" and v.ngram_of(UNK) == "<unk>"


def test_build_vocab_order_and_filters():
    corpus = [tokenize("aabbaabb"), tokenize("ccaabb")]
    v = build_vocab(corpus, 2)
    # aabb x3, bbaa x1, ccaa x1 -> frequency first, then lexicographic
    assert [v.ngram_of(i) for i in range(2, v.size)] == ["aabb", "bbaa", "ccaa"]
    assert dict(build_vocab(corpus, 2, min_count=2).entries) == {"aabb": 2}
    assert build_vocab(corpus, 2, max_size=2).size == 4


@given(st.lists(st.binary(min_size=1, max_size=30), min_size=1, max_size=8))
def test_unigram_vocab_bounded_by_alphabet(raws):
    v = build_vocab([tokenize(r.hex()) for r in raws], 1)
    assert v.size <= 258


@given(st.lists(st.binary(min_size=1, max_size=30), min_size=1, max_size=8), st.integers(1, 3), st.randoms())
def test_build_vocab_deterministic_under_permutation(raws, n, rnd):
    corpus = [tokenize(r.hex()) for r in raws]
    a = build_vocab(corpus, n)
    shuffled = corpus[:]
    rnd.shuffle(shuffled)
    b = build_vocab(shuffled, n)
    assert a == b and a.to_text() == b.to_text()


def test_encode_examples():
    v = build_vocab([["60", "80", "60"]], 2)
    e = encode(["60", "80", "60"], v, 4)
    assert e.ids == (2, 3, 0, 0) and e.true_length == 2
    assert encode(["60", "80", "ff"], v, 4).ids == (2, UNK, 0, 0)
    long = ["60", "80"] * 5 + ["60"]
    e = encode(long, v, 4)
    assert e.ids == (2, 3, 2, 3) and e.true_length == 10


@given(st.binary(min_size=1, max_size=30), st.integers(1, 3), st.integers(1, 20))
def test_encode_ids_in_range(raw, n, max_len):
    corpus = [tokenize(raw[: len(raw) // 2 + 1].hex())]
    v = build_vocab(corpus, n)
    e = encode(tokenize(raw.hex()), v, max_len)
    assert len(e.ids) == max_len
    assert all(0 <= i < v.size for i in e.ids)
    assert e.true_length == max(0, len(raw) - n + 1)
    for i in e.ids:
        if i >= 2:
            assert v.id_of(v.ngram_of(i)) == i


def test_count_vector_examples():
    v = build_vocab([["60", "80", "60"]], 2)
    c = count_vector(["60", "80", "60", "80"], v)
    assert c == {v.id_of("6080"): 2, v.id_of("8060"): 1}
    assert count_vector(["60"], v) == {}
    assert count_vector(["ff", "ee", "60", "80"], v) == {UNK: 2, 2: 1}


def test_ngram_oracle_equivalence_bulk():
    rnd = random.Random(7)
    for _ in range(1000):
        h = bytes(rnd.randrange(256) for _ in range(rnd.randint(1, 24))).hex()
        n = rnd.randint(1, 4)
        toks = tokenize(h)
        assert extract_ngrams(toks, n) == slice_oracle(h, n)
        v = build_vocab([tokenize(h[: rnd.randint(1, len(h) // 2) * 2])], n)
        cv = count_vector(toks, v)
        assert cv == count_oracle(h, v)
        assert PAD not in cv
        assert sum(cv.values()) == max(0, len(toks) - n + 1)


def test_vocab_file_roundtrip(tmp_path):
    v = build_vocab([tokenize("6080604052" * 3), tokenize("11575b")], 2)
    p = tmp_path / "v.tsv"
    v.save(p)
    w = NgramVocabulary.load(p)
    assert w == v
    q = tmp_path / "w.tsv"
    w.save(q)
    assert p.read_bytes() == q.read_bytes()
    assert p.read_text().splitlines()[0] == f"#ngram-vocab\tversion=1\tn=2\tsize={v.size}"
    assert w.sha256() == v.sha256()


def test_vocab_file_errors(tmp_path):
    v = build_vocab([tokenize("60806040")], 2)
    text = v.to_text()
    with pytest.raises(FormatVersionMismatch):
        NgramVocabulary.from_text(text.replace("version=1", "version=9"))
    with pytest.raises(CorruptFile):
        NgramVocabulary.from_text(text.rsplit("\n", 2)[0] + "\n")
    with pytest.raises(CorruptFile):
        NgramVocabulary.from_text("garbage\n")


def test_vocab_is_frozen():
    v = build_vocab([tokenize("60806040")], 2)
    before = v.to_text()
    encode(tokenize("ffffffff"), v, 8)
    count_vector(tokenize("eeeeee"), v)
    assert v.to_text() == before
    with pytest.raises(TypeError):
        v.entries["ffff"] = 9
