"""Downstream utility of (defended) embeddings: a one-hidden-layer tanh MLP
classifier trained with Adam, plus accuracy / macro-F1 evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import ConfigError, DataError
from .generator import AdamW, _softmax
from .linalg import as_matrix


@dataclass
class LabeledEmbeddings:
    embeddings: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.embeddings = as_matrix(self.embeddings, "embeddings")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.embeddings.shape[0],):
            raise DataError("need exactly one label per embedding row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]


@dataclass
class ClassifierConfig:
    hidden: int = 256
    lr: float = 1e-3
    epochs: int = 6
    batch: int = 32
    seed: int = 0


@dataclass
class MlpClassifier:
    params: dict
    seed: int = 0
    best_epoch: int = -1
    checkpoints: list = field(default_factory=list)  # (epoch, dev_acc) per epoch

    def logits(self, x):
        return _mlp_forward(self.params, as_matrix(x))[-1]

    def predict_proba(self, x):
        return _softmax(self.logits(x))

    def predict(self, x):
        return np.argmax(self.logits(x), axis=1)


def init_mlp(n_in, hidden, n_classes, seed):
    gen = _rng.stream(seed)

    def glorot(rows, cols):
        lim = np.sqrt(6.0 / (rows + cols))
        return lim * (2.0 * gen.random((rows, cols)) - 1.0)

    return {
        "w1": glorot(hidden, n_in),
        "b1": np.zeros(hidden),
        "w2": glorot(n_classes, hidden),
        "b2": np.zeros(n_classes),
    }


def _mlp_forward(params, x):
    hid = np.tanh(x @ params["w1"].T + params["b1"])
    return hid, hid @ params["w2"].T + params["b2"]


def mlp_loss(params, x, y):
    """Mean cross-entropy and gradients."""
    hid, logits = _mlp_forward(params, x)
    p = _softmax(logits)
    n = x.shape[0]
    rows = np.arange(n)
    loss = -np.mean(np.log(p[rows, y]))
    d = p
    d[rows, y] -= 1.0
    d /= n
    d_hid = (d @ params["w2"]) * (1.0 - hid * hid)
    grads = {
        "w2": d.T @ hid,
        "b2": d.sum(axis=0),
        "w1": d_hid.T @ x,
        "b1": d_hid.sum(axis=0),
    }
    return float(loss), grads


def _accuracy(params, data):
    return float(np.mean(np.argmax(_mlp_forward(params, data.embeddings)[-1], axis=1) == data.labels))


def train_classifier(train, dev, config=None, **overrides):
    """Train for ``epochs`` epochs and keep the checkpoint with the best dev accuracy."""
    cfg = config or ClassifierConfig()
    if overrides:
        cfg = ClassifierConfig(**{**cfg.__dict__, **overrides})
    if train.embeddings.shape[1] != dev.embeddings.shape[1]:
        raise DataError("train and dev embedding dims differ")
    if len(dev) == 0:
        raise DataError("dev set is empty")
    missing = sorted(set(range(train.num_classes)) - set(train.labels.tolist()))
    if missing:
        raise DataError(f"classes absent from training set: {missing}")
    if cfg.epochs < 1 or cfg.batch < 1:
        raise ConfigError("epochs and batch must be >= 1")

    params = init_mlp(train.embeddings.shape[1], cfg.hidden, train.num_classes, cfg.seed)
    opt = AdamW(params, cfg.lr, 0.0)
    gen = _rng.stream(cfg.seed ^ 0xC1A55)
    best, best_acc, checkpoints = None, -1.0, []
    for epoch in range(cfg.epochs):
        perm = gen.permutation(len(train))
        for start in range(0, len(train), cfg.batch):
            idx = perm[start : start + cfg.batch]
            _, grads = mlp_loss(params, train.embeddings[idx], train.labels[idx])
            opt.step(params, grads)
        acc = _accuracy(params, dev)
        checkpoints.append((epoch, acc))
        if acc > best_acc:
            best_acc = acc
            best = ({k: v.copy() for k, v in params.items()}, epoch)
    return MlpClassifier(best[0], cfg.seed, best[1], checkpoints)


def evaluate_classifier(model, test):
    """Accuracy and macro F1, both x100, plus per-class precision/recall/F1."""
    if len(test) == 0:
        raise DataError("empty test set")
    pred = model.predict(test.embeddings)
    return classification_scores(test.labels, pred)


def classification_scores(labels, pred):
    labels = np.asarray(labels)
    pred = np.asarray(pred)
    if labels.size == 0:
        raise DataError("empty test set")
    classes = sorted(set(labels.tolist()) | set(pred.tolist()))
    per_class = []
    for c in classes:
        tp = int(np.sum((pred == c) & (labels == c)))
        n_pred = int(np.sum(pred == c))
        n_true = int(np.sum(labels == c))
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true if n_true else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        per_class.append({"label": c, "precision": 100 * p, "recall": 100 * r, "f1": 100 * f, "support": n_true})
    return {
        "acc": 100.0 * float(np.mean(pred == labels)),
        "f1_macro": float(np.mean([pc["f1"] for pc in per_class])),
        "per_class": per_class,
    }
