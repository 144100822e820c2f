import numpy as np
import pytest

from embalign.defense import DefenseSpec, apply_defense
from embalign.errors import DataError
from embalign.linalg import l2_normalize_rows
from embalign.utility import (
    LabeledEmbeddings,
    MlpClassifier,
    classification_scores,
    evaluate_classifier,
    init_mlp,
    mlp_loss,
    train_classifier,
)

from .oracles.finite_diff import central_difference, max_relative_error


def blobs(n, dim, seed, sep=4.0, classes=2):
    gen = np.random.default_rng(seed)
    centers = gen.normal(size=(classes, dim))
    centers *= sep / np.linalg.norm(centers, axis=1, keepdims=True)
    y = np.arange(n) % classes
    x = centers[y] + 0.5 * gen.normal(size=(n, dim))
    return LabeledEmbeddings(x, y, classes)


def test_separable_blobs():
    model = train_classifier(blobs(400, 2, 0), blobs(100, 2, 0), hidden=32, lr=1e-2)
    assert evaluate_classifier(model, blobs(200, 2, 0))["acc"] >= 99.0


def test_random_labels_at_chance():
    accs = []
    for seed in range(10):
        gen = np.random.default_rng(100 + seed)
        make = lambda n: LabeledEmbeddings(gen.normal(size=(n, 8)), gen.integers(0, 2, n), 2)
        model = train_classifier(make(200), make(100), hidden=32, seed=seed)
        accs.append(evaluate_classifier(model, make(300))["acc"])
    assert all(35.0 <= a <= 65.0 for a in accs), accs


def test_single_example_per_class_memorized():
    data = LabeledEmbeddings(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1], 2)
    model = train_classifier(data, data, hidden=8, lr=0.05, epochs=6, batch=2)
    assert evaluate_classifier(model, data)["acc"] == 100.0


def test_checkpoint_selection():
    model = train_classifier(blobs(100, 4, 1), blobs(40, 4, 2), epochs=6)
    assert len(model.checkpoints) == 6
    accs = [a for _, a in model.checkpoints]
    assert model.best_epoch == int(np.argmax(accs))


def test_deterministic_per_seed():
    a = train_classifier(blobs(80, 3, 1), blobs(20, 3, 1), seed=4)
    b = train_classifier(blobs(80, 3, 1), blobs(20, 3, 1), seed=4)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_missing_class_rejected():
    train = LabeledEmbeddings(np.ones((3, 2)), [0, 0, 0], 2)
    with pytest.raises(DataError, match="absent"):
        train_classifier(train, train)


def test_label_range_validated():
    with pytest.raises(DataError):
        LabeledEmbeddings(np.ones((2, 2)), [0, 2], 2)


def test_evaluate_scores():
    assert classification_scores([0, 1, 1, 0], [0, 1, 1, 0])["acc"] == 100.0
    assert classification_scores([0, 1, 1, 0], [0, 1, 1, 0])["f1_macro"] == 100.0
    s = classification_scores([0, 1, 0, 1], [0, 0, 0, 0])
    assert s["acc"] == 50.0
    # class 0: P=1/2 R=1 F=2/3; class 1: F=0
    assert s["f1_macro"] == pytest.approx(100 / 3)


def test_evaluate_empty_test_set():
    model = MlpClassifier(init_mlp(2, 4, 2, 0))
    with pytest.raises(DataError):
        evaluate_classifier(model, LabeledEmbeddings(np.zeros((0, 2)), [], 2))


def test_gradient_check():
    gen = np.random.default_rng(3)
    params = init_mlp(3, 5, 3, seed=2)
    x = gen.normal(size=(7, 3))
    y = gen.integers(0, 3, 7)
    _, analytic = mlp_loss(params, x, y)
    numeric = central_difference(lambda p: mlp_loss(p, x, y)[0], params)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_softmax_rows_sum_to_one():
    model = MlpClassifier(init_mlp(4, 6, 3, 1))
    p = model.predict_proba(np.random.default_rng(0).normal(size=(10, 4)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def _median_acc(transform, seeds=range(5)):
    accs = []
    for s in seeds:
        tr, dv, te = (blobs(n, 16, 10 + s, sep=1.5, classes=3) for n in (300, 100, 200))
        tr, dv, te = (LabeledEmbeddings(transform(d.embeddings), d.labels, 3) for d in (tr, dv, te))
        model = train_classifier(tr, dv, hidden=64, seed=s)
        accs.append(evaluate_classifier(model, te)["acc"])
    return float(np.median(accs))


def test_defense_utility_ordering():
    base = _median_acc(l2_normalize_rows)
    g01 = _median_acc(lambda e: apply_defense(e, DefenseSpec("Gaussian", lam=0.1, seed=1)))
    g1 = _median_acc(lambda e: apply_defense(e, DefenseSpec("Gaussian", lam=1.0, seed=1)))
    assert base >= g01 >= g1 - 2.0


def test_shuffle_keeps_accuracy():
    base = _median_acc(lambda e: e)
    shuffled = _median_acc(lambda e: apply_defense(e, DefenseSpec("Shuffle", seed=3)))
    assert abs(base - shuffled) <= 1.0
