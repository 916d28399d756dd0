import numpy as np
import pytest
from scipy import sparse

from bytescam.baseline import (LinearModel, baseline_loss_and_grad, baseline_predict, baseline_train,
                               counts_matrix)
from bytescam.errors import MissingClass
from bytescam.features import UNK, build_vocab, count_vector
from bytescam.numcore import make_rng


def separable(n, seed):
    """Feature 2 present iff label 1; features 3..9 are noise."""
    rng = make_rng(seed)
    y = rng.integers(0, 2, n)
    maps = []
    for label in y:
        m = {int(j): int(rng.integers(1, 4)) for j in rng.choice(np.arange(3, 10), 3, replace=False)}
        if label:
            m[2] = 2
        maps.append(m)
    return counts_matrix(maps, 10), y


def test_counts_matrix_rows_sum_to_one():
    X = counts_matrix([{2: 3, 5: 1}, {1: 2}], 6)
    assert sparse.issparse(X)
    assert np.allclose(X.toarray(), [[0, 0, 0.75, 0, 0, 0.25], [0, 1, 0, 0, 0, 0]])


def test_separable_generalizes():
    X, y = separable(200, 0)
    model = baseline_train(X, y, lam=1e-4, epochs=500)
    Xt, yt = separable(100, 1)
    assert np.array_equal(baseline_predict(model, Xt) >= 0.5, yt == 1)


def test_strong_regularization_shrinks_to_half():
    X, y = separable(100, 2)
    model = baseline_train(X, y, lam=1e6, epochs=300)
    assert np.abs(model.weights).max() < 1e-5
    assert np.allclose(baseline_predict(model, X), 1 / (1 + np.exp(-model.bias)), atol=1e-5)
    assert abs(model.bias) < 0.2


def test_deterministic():
    X, y = separable(80, 3)
    a = baseline_train(X, y, epochs=100, seed=5)
    b = baseline_train(X, y, epochs=100, seed=5)
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias == b.bias


def test_seeds_reach_same_optimum():
    X, y = separable(80, 4)
    y[:8] = 1 - y[:8]  # noise keeps the optimum finite
    losses = [baseline_loss_and_grad(m.weights, m.bias, X, y, 1e-2)[0]
              for m in (baseline_train(X, y, lam=1e-2, epochs=3000, seed=s) for s in (0, 1, 2))]
    assert max(losses) - min(losses) < 1e-3


def test_gradient_matches_finite_differences():
    X, y = separable(30, 5)
    rng = make_rng(6)
    w, b, lam = rng.normal(size=10), 0.3, 0.05
    _, gw, gb = baseline_loss_and_grad(w, b, X, y, lam)
    h = 1e-6
    for j in range(10):
        e = np.zeros(10)
        e[j] = h
        num = (baseline_loss_and_grad(w + e, b, X, y, lam)[0] - baseline_loss_and_grad(w - e, b, X, y, lam)[0]) / (2 * h)
        assert abs(num - gw[j]) <= 1e-6 * max(1.0, abs(num))
    num = (baseline_loss_and_grad(w, b + h, X, y, lam)[0] - baseline_loss_and_grad(w, b - h, X, y, lam)[0]) / (2 * h)
    assert abs(num - gb) <= 1e-6


def test_zero_model_predicts_half():
    assert baseline_predict(LinearModel(np.zeros(4), 0.0, 0.0), {2: 1, 3: 5}) == 0.5


def test_unseen_ngrams_use_unk_weight():
    vocab = build_vocab([["60", "80", "60"]], 2)
    counts = count_vector(["ff", "ee"], vocab)
    assert counts == {UNK: 1}
    w = np.zeros(vocab.size)
    w[UNK] = 2.0
    assert baseline_predict(LinearModel(w, 0.0, 0.0), counts) == pytest.approx(1 / (1 + np.exp(-2.0)))


def test_missing_class():
    X, _ = separable(10, 7)
    with pytest.raises(MissingClass):
        baseline_train(X, np.zeros(10))
