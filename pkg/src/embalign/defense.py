"""Embedding defenses applied on the victim side before anything leaks.

Four kinds are supported:

* ``WET``      - multiply by a seeded, well-conditioned circulant matrix, renormalise
* ``Shuffle``  - one seeded coordinate permutation shared by the whole dataset
* ``Gaussian`` - ``(e + lam * z) / ||e + lam * z||`` with ``z ~ N(0, I)``
* ``LDP``      - metric-LDP sanitisers on the unit sphere (``PurMech`` / ``LapMech``)

The LDP samplers are fixed as follows.  ``LapMech`` adds ``r * u`` with
``r ~ Gamma(d, 1/eps)`` and ``u`` uniform on the sphere (density proportional
to ``exp(-eps ||z||)``), then renormalises.  ``PurMech`` draws the angle to the
input from a density proportional to ``exp(-eps * theta) * sin(theta)**(d-2)``
on ``[0, pi]`` and a uniform direction orthogonal to the input.  delta is 0.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .errors import ConfigError, DataError
from .linalg import as_matrix, as_vector, l2_normalize, l2_normalize_rows, pinv, svd

KINDS = ("WET", "Shuffle", "Gaussian", "LDP")
MECHANISMS = ("PurMech", "LapMech")

WET_MAX_CONDITION = 1e6
WET_MAX_ATTEMPTS = 64
WET_RCOND = 1e-10


@dataclass(frozen=True)
class DefenseSpec:
    kind: str
    lam: float = 0.0
    epsilon: float = 1.0
    mechanism: str = "PurMech"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown defense kind {self.kind!r}; expected one of {KINDS}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.kind == "LDP":
            if self.mechanism not in MECHANISMS:
                raise ConfigError(f"unknown mechanism {self.mechanism!r}")
            if not self.epsilon > 0:
                raise ConfigError("epsilon must be > 0 for LDP")

    def to_dict(self):
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "mechanism": self.mechanism,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"kind", "lambda", "epsilon", "mechanism", "seed"}
        if unknown:
            raise ConfigError(f"unknown defense fields: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("defense spec needs a 'kind'")
        return cls(
            kind=d["kind"],
            lam=float(d.get("lambda", 0.0)),
            epsilon=float(d.get("epsilon", 1.0)),
            mechanism=d.get("mechanism", "PurMech"),
            seed=int(d.get("seed", 0)),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# -- WET ---------------------------------------------------------------------


@dataclass(frozen=True)
class WetTransform:
    t: np.ndarray
    condition_estimate: float
    seed: int = 0
    attempts: int = 1

    @property
    def dim(self):
        return self.t.shape[0]


def circulant(first_row):
    """Circulant matrix whose row ``i`` is ``first_row`` rotated right by ``i``."""
    c = as_vector(first_row, "first_row")
    m = c.shape[0]
    idx = (np.arange(m)[None, :] - np.arange(m)[:, None]) % m
    return c[idx]


def wet_generate(dim, seed, max_condition=WET_MAX_CONDITION, max_attempts=WET_MAX_ATTEMPTS):
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    gen = _rng.stream(seed)
    for attempt in range(1, max_attempts + 1):
        t = circulant(_rng.standard_normal(gen, dim))
        f = svd(t)
        if f.rank(WET_RCOND) == dim and f.condition() <= max_condition:
            return WetTransform(t, f.condition(), seed, attempt)
    raise DataError(f"no admissible circulant transform after {max_attempts} attempts")


def wet_apply(wt, e):
    e = as_vector(e)
    if e.shape[0] != wt.dim:
        raise DataError(f"vector dim {e.shape[0]} != transform dim {wt.dim}")
    te = wt.t @ e
    n = np.linalg.norm(te)
    if n == 0.0:
        raise DataError("transformed vector is zero")
    return te / n


def wet_apply_rows(wt, e):
    e = as_matrix(e)
    if e.shape[1] != wt.dim:
        raise DataError(f"matrix has {e.shape[1]} columns, transform dim {wt.dim}")
    return l2_normalize_rows(e @ wt.t.T)


def wet_recover(wt, defended, scale=1.0):
    """Undo ``wet_apply`` given the pre-normalisation norm ``scale`` of ``T e``."""
    return pinv(wt.t, WET_RCOND) @ (scale * as_vector(defended))


# -- shuffling ----------------------------------------------------------------


def shuffle_permutation(dim, seed):
    return _rng.stream(seed).permutation(dim)


def shuffle_apply(e, seed):
    e = as_vector(e)
    return e[shuffle_permutation(e.shape[0], seed)]


# -- Gaussian noise -----------------------------------------------------------


def _gaussian_noised(e, lam, gen):
    for _ in range(2):
        x = e + lam * _rng.standard_normal(gen, e.shape[0])
        n = np.linalg.norm(x)
        if n > 0.0:
            return x / n
    raise DataError("noised vector was zero twice in a row")


def gaussian_apply(e, lam, seed):
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    e = l2_normalize(e)
    return _gaussian_noised(e, lam, _rng.stream(seed))


# -- metric LDP ---------------------------------------------------------------

_ANGLE_GRID = 8193


@functools.lru_cache(maxsize=64)
def _purkayastha_table(epsilon, dim):
    k = dim - 2
    if k == 0:
        lo, hi = 0.0, min(np.pi, 60.0 / epsilon)
    else:
        mode = np.arctan2(k, epsilon)
        sd = np.sin(mode) / np.sqrt(k)
        lo, hi = max(0.0, mode - 40.0 * sd), min(np.pi, mode + 40.0 * sd)
    theta = np.linspace(lo, hi, _ANGLE_GRID)
    with np.errstate(divide="ignore"):
        logf = -epsilon * theta + k * np.log(np.sin(theta)) if k else -epsilon * theta
    f = np.exp(logf - logf.max())
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(theta))))
    cdf /= cdf[-1]
    return theta, cdf


def purkayastha_angle(gen, epsilon, dim):
    theta, cdf = _purkayastha_table(float(epsilon), int(dim))
    return float(np.interp(gen.random(), cdf, theta))


def _purmech(e, epsilon, gen):
    d = e.shape[0]
    if d == 1:
        flip = gen.random() < np.exp(-epsilon * np.pi) / (1.0 + np.exp(-epsilon * np.pi))
        return -e if flip else e.copy()
    theta = purkayastha_angle(gen, epsilon, d)
    while True:
        z = _rng.standard_normal(gen, d)
        z -= (z @ e) * e
        n = np.linalg.norm(z)
        if n > 1e-12:
            break
    out = np.cos(theta) * e + np.sin(theta) * (z / n)
    return out / np.linalg.norm(out)


def _lapmech(e, epsilon, gen):
    d = e.shape[0]
    for _ in range(2):
        r = gen.gamma(shape=d, scale=1.0 / epsilon)
        x = e + r * _rng.unit_sphere(gen, d)
        n = np.linalg.norm(x)
        if n > 0.0:
            return x / n
    raise DataError("privatised vector was zero twice in a row")


def ldp_apply(e, mechanism, epsilon, seed):
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    if mechanism not in MECHANISMS:
        raise ConfigError(f"unknown mechanism {mechanism!r}")
    e = l2_normalize(e)
    gen = _rng.stream(seed)
    return _purmech(e, epsilon, gen) if mechanism == "PurMech" else _lapmech(e, epsilon, gen)


# -- batch ---------------------------------------------------------------------


def apply_defense(embeddings, spec):
    """Defend every row of ``embeddings`` under ``spec``.

    WET and Shuffle draw one transform/permutation for the whole batch; the
    noise defenses use per-row seeds ``spec.seed XOR row``.
    """
    e = as_matrix(embeddings, "embeddings")
    if spec.kind == "WET":
        return wet_apply_rows(wet_generate(e.shape[1], spec.seed), e)
    if spec.kind == "Shuffle":
        return e[:, shuffle_permutation(e.shape[1], spec.seed)]
    out = np.empty_like(e)
    if spec.kind == "Gaussian":
        for i, row in enumerate(e):
            out[i] = gaussian_apply(row, spec.lam, _rng.row_seed(spec.seed, i))
        return out
    for i, row in enumerate(e):
        out[i] = ldp_apply(row, spec.mechanism, spec.epsilon, _rng.row_seed(spec.seed, i))
    return out
