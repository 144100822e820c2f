"""Synthetic paired embedding spaces and corpora for tests, benchmarks and demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .io import Corpus, Record
from .linalg import l2_normalize_rows

_WORDS = (
    "able acid aged also area army away baby back ball band bank base bath bear beat been beer bell belt "
    "best bill bird blow blue boat body bomb bond bone book boom born boss both bowl bulk burn bush busy "
    "cake call calm came camp card care case cash cast cell chat chip city club coal coat code cold come "
    "cook cool cope copy core cost crew crop dark data date dawn days dead deal dean dear debt deep deny "
    "desk dial diet disc disk does done door dose down draw drew drop drug dual duke dust duty each earn "
    "ease east easy edge else even ever evil exit face fact fail fair fall farm fast fate fear feed feel "
    "file fill film find fine fire firm fish five flat flow food foot ford form fort four free from fuel "
    "full fund gain game gate gave gear gene gift girl give glad goal goes gold golf gone good gray grew "
    "grey grow gulf hair half hall hand hang hard harm hate have head hear heat held hell help here hero "
    "high hill hire hold hole holy home hope host hour huge hung hunt hurt idea inch into iron item jack "
    "jane jean john join jump jury just keen keep kent kept kick kill kind king knee knew know lack lady "
    "laid lake land lane last late lead left less life lift like line link list live load loan lock long"
).split()


def random_orthogonal(n, seed):
    gen = _rng.stream(seed)
    q, r = np.linalg.qr(_rng.standard_normal(gen, n * n).reshape(n, n))
    return q * np.sign(np.diag(r))


def random_unit_rows(k, n, seed):
    gen = _rng.stream(seed)
    return l2_normalize_rows(_rng.standard_normal(gen, k * n).reshape(k, n))


def synthetic_corpus(k, seed=0, min_len=4, max_len=9, prefix="s"):
    """``k`` distinct sentences, no repeated word inside a sentence."""
    gen = _rng.stream(seed)
    seen, records = set(), []
    while len(records) < k:
        size = int(gen.integers(min_len, max_len + 1))
        text = " ".join(gen.choice(_WORDS, size=size, replace=False))
        if text in seen:
            continue
        seen.add(text)
        records.append(Record(f"{prefix}{len(records):06d}", text, "en"))
    return Corpus(records)


@dataclass
class PairedSpace:
    corpus: Corpus
    attack: np.ndarray
    victim: np.ndarray


def exact_space(k=200, dim=16, seed=0):
    """Victim space ``attack @ Q @ D`` with random orthogonal Q and positive diagonal D."""
    attack = random_unit_rows(k, dim, seed)
    q = random_orthogonal(dim, seed + 1)
    d = 0.5 + _rng.stream(seed + 2).random(dim)
    return PairedSpace(synthetic_corpus(k, seed), attack, (attack @ q) * d)


def noisy_space(k=400, attack_dim=16, victim_dim=24, noise=0.05, shared=1.0, seed=0):
    """Anisotropic attack rows and a noisy linear victim image of them.

    Attack rows are ``normalize(shared * c + z)`` for one common direction ``c``,
    as real sentence embeddings cluster in a cone.  The victim space is
    ``attack @ M + noise * N(0, I)`` for a random Gaussian ``M``.
    """
    gen = _rng.stream(seed)
    common = _rng.unit_sphere(gen, attack_dim)
    z = _rng.standard_normal(gen, k * attack_dim).reshape(k, attack_dim) / np.sqrt(attack_dim)
    attack = l2_normalize_rows(shared * common + z)
    m = _rng.standard_normal(gen, attack_dim * victim_dim).reshape(attack_dim, victim_dim) / np.sqrt(attack_dim)
    victim = attack @ m + noise * _rng.standard_normal(gen, k * victim_dim).reshape(k, victim_dim)
    return PairedSpace(synthetic_corpus(k, seed), attack, victim)
