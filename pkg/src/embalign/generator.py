"""Embedding-to-text decoders.

Two built-ins sit behind the same ``decode(embedding, max_tokens)`` call:

``NearestNeighborDecoder``
    returns the corpus sentence whose attack-space embedding has the highest
    cosine with the query (ties go to the lowest id).
``ToyDecoder``
    a one-hidden-layer autoregressive model
    ``P(x_i | x_{i-1}, e) = softmax(W_out tanh(W_h [emb(x_{i-1}); e] + b_h) + b_out)``
    trained by cross-entropy with AdamW and decoded greedily.
"""

from __future__ import annotations

import io as _stdio
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as _rng
from ._accel import njit, pick
from .errors import ConfigError, DataError, TrainingError
from .io import Corpus, decode_emb1, encode_emb1
from .linalg import as_matrix, as_vector
from .metrics import tokenize

BOS, EOS, UNK = "<bos>", "<eos>", "<unk>"
PARAM_NAMES = ("emb", "w_h", "b_h", "w_out", "b_out")


@dataclass(frozen=True)
class DecodeRequest:
    embedding: np.ndarray
    max_tokens: int = 32
    strategy: str = "greedy"  # or "nearest-neighbor"

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if self.strategy not in ("greedy", "nearest-neighbor"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")


# -- nearest neighbour ----------------------------------------------------------


@njit
def _cosine_scan_numba(index, q):
    k, n = index.shape
    qn = 0.0
    for j in range(n):
        qn += q[j] * q[j]
    qn = np.sqrt(qn)
    out = np.empty(k)
    for i in range(k):
        dot = 0.0
        rn = 0.0
        for j in range(n):
            dot += index[i, j] * q[j]
            rn += index[i, j] * index[i, j]
        out[i] = dot / (np.sqrt(rn) * qn) if rn > 0.0 else -np.inf
    return out


def _cosine_scan_numpy(index, q):
    rn = np.linalg.norm(index, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (index @ q) / (rn * np.linalg.norm(q))
    out[rn == 0.0] = -np.inf
    return out


cosine_scan = pick(_cosine_scan_numba, _cosine_scan_numpy)


class NearestNeighborDecoder:
    """Decode by retrieval over ``corpus`` with precomputed attack embeddings."""

    def __init__(self, corpus, embeddings):
        emb = as_matrix(embeddings, "embeddings")
        if len(corpus) == 0:
            raise DataError("nearest-neighbour index needs a non-empty corpus")
        if emb.shape[0] != len(corpus):
            raise DataError(f"{emb.shape[0]} embeddings for {len(corpus)} corpus records")
        self.corpus = corpus
        self.embeddings = np.ascontiguousarray(emb)

    def scores(self, query):
        q = as_vector(query, "query")
        if q.shape[0] != self.embeddings.shape[1]:
            raise DataError(f"query dim {q.shape[0]} != index dim {self.embeddings.shape[1]}")
        if not np.any(q):
            raise DataError("zero-norm query")
        return cosine_scan(self.embeddings, np.ascontiguousarray(q))

    def nearest(self, query):
        s = self.scores(query)
        ties = np.flatnonzero(s == s.max())
        if ties.size == 1:
            return int(ties[0])
        return int(min(ties, key=lambda i: self.corpus[i].id))

    def decode(self, embedding, max_tokens=None):
        return self.corpus[self.nearest(embedding)].text


def nn_decode(e_aligned, corpus, embeddings):
    return NearestNeighborDecoder(corpus, embeddings).decode(e_aligned)


# -- toy autoregressive decoder -------------------------------------------------


@dataclass
class DecoderConfig:
    hidden: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch: int = 128
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float = 0.1
    max_len: int = 32


@dataclass
class ToyDecoder:
    vocab: list
    params: dict
    embed_dim: int
    config: DecoderConfig = field(default_factory=DecoderConfig)
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.vocab)}

    @property
    def hidden_dim(self):
        return self.params["b_h"].shape[0]

    def encode_tokens(self, tokens):
        unk = self.index[UNK]
        return [self.index.get(t, unk) for t in tokens]

    def step_distribution(self, prev, e):
        """Next-token probabilities given the previous token id(s) and embedding(s)."""
        prev = np.atleast_1d(np.asarray(prev, dtype=np.int64))
        e = np.atleast_2d(np.asarray(e, dtype=np.float64))
        if e.shape[0] == 1 and prev.shape[0] > 1:
            e = np.repeat(e, prev.shape[0], axis=0)
        return _forward(self.params, prev, e)[-1]

    def decode(self, embedding, max_tokens=None):
        return greedy_decode(self, embedding, max_tokens or self.config.max_len)

    # serialization: u32 header length | JSON header | one EMB1 block per parameter
    def to_bytes(self):
        header = json.dumps(
            {
                "vocab": self.vocab,
                "embed_dim": self.embed_dim,
                "hidden_dim": self.hidden_dim,
                "config": asdict(self.config),
                "loss_history": self.loss_history,
                "params": list(PARAM_NAMES),
            }
        ).encode("utf-8")
        out = [struct.pack("<I", len(header)), header]
        for name in PARAM_NAMES:
            out.append(encode_emb1(np.atleast_2d(self.params[name]), dtype=np.float64))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, buf):
        (hlen,) = struct.unpack_from("<I", buf)
        header = json.loads(buf[4 : 4 + hlen].decode("utf-8"))
        pos = 4 + hlen
        params = {}
        for name in header["params"]:
            rows, cols = struct.unpack_from("<II", buf, pos + 4)
            size = 20 + rows * cols * 8
            arr = decode_emb1(buf[pos : pos + size])
            params[name] = arr[0] if name.startswith("b_") else arr
            pos += size
        if pos != len(buf):
            raise DataError("trailing bytes after decoder parameters")
        return cls(
            vocab=header["vocab"],
            params=params,
            embed_dim=header["embed_dim"],
            config=DecoderConfig(**header["config"]),
            loss_history=header["loss_history"],
        )

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        try:
            with open(path, "rb") as fh:
                return cls.from_bytes(fh.read())
        except FileNotFoundError as exc:
            raise DataError(f"missing file: {path}") from exc


def build_vocab(texts):
    toks = sorted({t for text in texts for t in tokenize(text)})
    return [BOS, EOS, UNK] + toks


def init_params(vocab_size, embed_dim, hidden, seed, scale=0.1):
    gen = _rng.stream(seed)

    def normal(*shape):
        return scale * _rng.standard_normal(gen, int(np.prod(shape))).reshape(shape)

    return {
        "emb": normal(vocab_size, hidden),
        "w_h": normal(hidden, hidden + embed_dim),
        "b_h": np.zeros(hidden),
        "w_out": normal(vocab_size, hidden),
        "b_out": np.zeros(vocab_size),
    }


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _forward(params, prev, cond):
    x = np.concatenate([params["emb"][prev], cond], axis=1)
    hid = np.tanh(x @ params["w_h"].T + params["b_h"])
    probs = _softmax(hid @ params["w_out"].T + params["b_out"])
    return x, hid, probs


def sequence_loss(params, prev, cond, target):
    """Mean token cross-entropy and its gradient with respect to every parameter."""
    x, hid, probs = _forward(params, prev, cond)
    n = prev.shape[0]
    rows = np.arange(n)
    loss = -np.mean(np.log(probs[rows, target]))

    d_logits = probs
    d_logits[rows, target] -= 1.0
    d_logits /= n
    grads = {
        "w_out": d_logits.T @ hid,
        "b_out": d_logits.sum(axis=0),
    }
    d_pre = (d_logits @ params["w_out"]) * (1.0 - hid * hid)
    grads["w_h"] = d_pre.T @ x
    grads["b_h"] = d_pre.sum(axis=0)
    d_x = d_pre @ params["w_h"]
    d_emb = np.zeros_like(params["emb"])
    np.add.at(d_emb, prev, d_x[:, : params["emb"].shape[1]])
    grads["emb"] = d_emb
    return float(loss), grads


def teacher_forcing_steps(decoder_index, corpus, embeddings):
    """Flatten sentences into (prev token, condition row, target token) steps."""
    bos, eos, unk = decoder_index[BOS], decoder_index[EOS], decoder_index[UNK]
    prev, target, owner = [], [], []
    for i, rec in enumerate(corpus):
        ids = [decoder_index.get(t, unk) for t in tokenize(rec.text)]
        prev.extend([bos] + ids)
        target.extend(ids + [eos])
        owner.extend([i] * (len(ids) + 1))
    return np.array(prev, dtype=np.int64), np.array(target, dtype=np.int64), np.array(owner, dtype=np.int64)


class AdamW:
    """Adam with decoupled weight decay (decay scaled by the learning rate)."""

    def __init__(self, params, lr, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.wd = lr, weight_decay
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p *= 1.0 - self.lr * self.wd
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train_toy_decoder(corpus, embeddings, config=None, **overrides):
    """Fit a ``ToyDecoder`` on (sentence, embedding) pairs.

    ``loss_history`` holds the full-data mean token loss after each epoch.
    """
    cfg = config or DecoderConfig()
    if overrides:
        cfg = DecoderConfig(**{**asdict(cfg), **overrides})
    if len(corpus) == 0:
        raise DataError("cannot train on an empty corpus")
    emb = as_matrix(embeddings, "embeddings")
    if emb.shape[0] != len(corpus):
        raise DataError(f"{emb.shape[0]} embeddings for {len(corpus)} corpus records")
    if cfg.batch < 1 or cfg.epochs < 0 or cfg.hidden < 1:
        raise ConfigError("batch, hidden must be >= 1 and epochs >= 0")

    vocab = build_vocab(corpus.texts)
    params = init_params(len(vocab), emb.shape[1], cfg.hidden, cfg.seed, cfg.init_scale)
    dec = ToyDecoder(vocab, params, emb.shape[1], cfg)
    prev, target, owner = teacher_forcing_steps(dec.index, corpus, emb)
    cond = emb[owner]

    opt = AdamW(params, cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps)
    order_gen = _rng.stream(cfg.seed ^ 0x5EED)
    n_sent = len(corpus)
    history = []
    for epoch in range(cfg.epochs):
        perm = order_gen.permutation(n_sent)
        for start in range(0, n_sent, cfg.batch):
            chosen = np.zeros(n_sent, dtype=bool)
            chosen[perm[start : start + cfg.batch]] = True
            sel = chosen[owner]
            loss, grads = sequence_loss(params, prev[sel], cond[sel], target[sel])
            if not np.isfinite(loss):
                raise TrainingError("non-finite training loss", epoch)
            opt.step(params, grads)
        full, _ = sequence_loss(params, prev, cond, target)
        if not np.isfinite(full):
            raise TrainingError("non-finite training loss", epoch)
        history.append(full)
    dec.loss_history = history
    return dec


def greedy_decode(dec, e, max_tokens=32):
    """Argmax decoding from BOS until EOS or ``max_tokens`` tokens."""
    e = as_vector(e, "embedding")
    if e.shape[0] != dec.embed_dim:
        raise DataError(f"embedding dim {e.shape[0]} != decoder dim {dec.embed_dim}")
    if max_tokens < 1:
        raise ConfigError("max_tokens must be >= 1")
    bos, eos = dec.index[BOS], dec.index[EOS]
    cond = e[None, :]
    prev = bos
    out = []
    for _ in range(max_tokens):
        p = _forward(dec.params, np.array([prev]), cond)[-1][0]
        p[bos] = -1.0
        tok = int(np.argmax(p))
        if tok == eos:
            break
        out.append(dec.vocab[tok])
        prev = tok
    return " ".join(out)
