"""Sentence-level text overlap metrics (ROUGE-L, ROUGE-1, BLEU-1/2), cosine
similarity and entity-overlap F1.  Text scores are on a 0-100 scale.

Strings are tokenized by lowercasing, splitting on Unicode whitespace and
stripping leading/trailing punctuation; pass a list of tokens to bypass that.
"""

from __future__ import annotations

import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._accel import njit, pick
from .errors import DataError
from .linalg import as_vector

ROUGE_L_BETA = 1.2


def _is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def _strip_punct(tok):
    i, j = 0, len(tok)
    while i < j and _is_punct(tok[i]):
        i += 1
    while j > i and _is_punct(tok[j - 1]):
        j -= 1
    return tok[i:j]


def tokenize(text, lowercase=True, strip_punct=True):
    if lowercase:
        text = text.lower()
    toks = text.split()
    if strip_punct:
        toks = [_strip_punct(t) for t in toks]
    return [t for t in toks if t]


def _tokens(x):
    if isinstance(x, str):
        return tokenize(x)
    toks = list(x)
    if any((not isinstance(t, str)) or t == "" for t in toks):
        raise DataError("token sequences must contain non-empty strings")
    return toks


def _encode_pair(a, b):
    vocab = {}
    ia = np.array([vocab.setdefault(t, len(vocab)) for t in a], dtype=np.int64)
    ib = np.array([vocab.setdefault(t, len(vocab)) for t in b], dtype=np.int64)
    return ia, ib


@njit
def _lcs_numba(a, b):
    n = b.shape[0]
    prev = np.zeros(n + 1, dtype=np.int64)
    cur = np.zeros(n + 1, dtype=np.int64)
    for i in range(a.shape[0]):
        for j in range(n):
            if a[i] == b[j]:
                cur[j + 1] = prev[j] + 1
            elif prev[j + 1] >= cur[j]:
                cur[j + 1] = prev[j + 1]
            else:
                cur[j + 1] = cur[j]
        prev, cur = cur, prev
    return prev[n]


def _lcs_numpy(a, b):
    prev = np.zeros(b.shape[0] + 1, dtype=np.int64)
    for tok in a:
        # a match extends the diagonal by one; otherwise inherit from above,
        # then the running max carries values in from the left
        step = np.where(b == tok, prev[:-1] + 1, prev[1:])
        prev = np.concatenate(([0], np.maximum.accumulate(step)))
    return int(prev[-1])


_lcs = pick(_lcs_numba, _lcs_numpy)


def lcs_length(reference, candidate):
    a, b = _encode_pair(_tokens(reference), _tokens(candidate))
    if a.size == 0 or b.size == 0:
        return 0
    return int(_lcs(a, b))


def _f_measure(p, r, beta=1.0):
    if p == 0.0 or r == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * p * r / (r + b2 * p)


def rouge_l(reference, candidate, beta=ROUGE_L_BETA):
    ref, cand = _tokens(reference), _tokens(candidate)
    if not ref or not cand:
        return 0.0
    if ref == cand:
        return 100.0
    lcs = lcs_length(ref, cand)
    return 100.0 * _f_measure(lcs / len(cand), lcs / len(ref), beta)


def _ngrams(toks, n):
    return Counter(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))


def rouge_1(reference, candidate):
    ref, cand = _tokens(reference), _tokens(candidate)
    if not ref or not cand:
        return 0.0
    if ref == cand:
        return 100.0
    overlap = sum((Counter(ref) & Counter(cand)).values())
    return 100.0 * _f_measure(overlap / len(cand), overlap / len(ref))


def bleu_n(reference, candidate, n=2):
    """Unsmoothed sentence BLEU with uniform weights over orders 1..n."""
    if n not in (1, 2):
        raise DataError("n must be 1 or 2")
    ref, cand = _tokens(reference), _tokens(candidate)
    if len(cand) < n or not ref:
        return 0.0
    if ref == cand:
        return 100.0
    log_p = 0.0
    for k in range(1, n + 1):
        c = _ngrams(cand, k)
        clipped = sum((c & _ngrams(ref, k)).values())
        if clipped == 0:
            return 0.0
        log_p += math.log(clipped / sum(c.values())) / n
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return 100.0 * bp * math.exp(log_p)


def cosine(a, b):
    a, b = as_vector(a, "a"), as_vector(b, "b")
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DataError("cosine of a zero vector is undefined")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def score_pair(reference, candidate):
    ref, cand = _tokens(reference), _tokens(candidate)
    return {
        "rouge_l": rouge_l(ref, cand),
        "rouge_1": rouge_1(ref, cand),
        "bleu_1": bleu_n(ref, cand, 1),
        "bleu_2": bleu_n(ref, cand, 2),
    }


# -- entities -------------------------------------------------------------------


@dataclass(frozen=True)
class EntityAnnotation:
    surface: str
    label: str

    def __post_init__(self):
        if not self.surface:
            raise DataError("entity surface must be non-empty")


def entity_f1(reference_entities, candidate_entities, label_filter=None):
    """Micro F1 (x100) over exact (surface, label) matches, multiset counted."""

    def bag(ents):
        return Counter(
            (e.surface, e.label) for e in ents if label_filter is None or e.label == label_filter
        )

    ref, cand = bag(reference_entities), bag(candidate_entities)
    n_ref, n_cand = sum(ref.values()), sum(cand.values())
    if n_ref == 0 and n_cand == 0:
        return 100.0
    hits = sum((ref & cand).values())
    if hits == 0:
        return 0.0
    return 100.0 * _f_measure(hits / n_cand, hits / n_ref)


def read_entities_jsonl(path):
    """Read ``{"id", "entities": [{"surface", "label"}]}`` lines into ``{id: [EntityAnnotation]}``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out[str(rec["id"])] = [EntityAnnotation(e["surface"], e["label"]) for e in rec["entities"]]
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: bad entity record ({exc})") from exc
    return out
