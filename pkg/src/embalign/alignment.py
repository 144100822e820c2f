"""Closed-form linear alignment of a victim embedding space onto an attack space.

Given ``b`` paired rows ``victim`` (b x m) and ``attack`` (b x n) the fitted map
is the minimum-norm least-squares solution ``W = pinv(victim) @ attack``.  It
solves the normal equations ``V^T V W = V^T A`` even when ``b < m`` and the
Gram matrix is singular.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError
from .linalg import DEFAULT_RCOND, as_matrix, pinv_from_svd, svd


@dataclass(frozen=True)
class AlignmentMap:
    w: np.ndarray
    samples_used: int
    residual_fro: float
    effective_rank: int
    gradient_norm: float
    condition_estimate: float
    rcond: float = DEFAULT_RCOND
    ridge: float = 0.0

    @property
    def victim_dim(self):
        return self.w.shape[0]

    @property
    def attack_dim(self):
        return self.w.shape[1]

    def diagnostics(self):
        d = asdict(self)
        del d["w"]
        d["victim_dim"] = self.victim_dim
        d["attack_dim"] = self.attack_dim
        return d

    def save(self, path):
        """Write ``path`` (EMB1, float64) and ``path.json`` with the diagnostics."""
        from .io import write_emb1

        write_emb1(path, self.w, dtype=np.float64)
        with open(f"{path}.json", "w", encoding="utf-8") as fh:
            json.dump(self.diagnostics(), fh, indent=2)

    @classmethod
    def load(cls, path):
        from .io import read_emb1

        w = read_emb1(path)
        with open(f"{path}.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        fields = {k: meta[k] for k in cls.__dataclass_fields__ if k in meta and k != "w"}
        return cls(w=w, **fields)


def fit_alignment(victim, attack, rcond=DEFAULT_RCOND, ridge=0.0):
    """Fit ``W`` minimising ``||attack - victim @ W||_F``.

    With ``ridge > 0`` the Tikhonov solution ``(V^T V + ridge I)^-1 V^T A`` is
    returned instead; the diagnostics still describe the unregularised
    objective.
    """
    v = as_matrix(victim, "victim")
    a = as_matrix(attack, "attack")
    if v.shape[0] != a.shape[0]:
        raise DataError(f"row count mismatch: victim has {v.shape[0]}, attack has {a.shape[0]}")
    if v.shape[0] == 0:
        raise DataError("need at least one alignment pair")
    if ridge < 0:
        raise DataError("ridge must be non-negative")

    f = svd(v)
    if ridge == 0.0:
        w = pinv_from_svd(f, rcond) @ a
    else:
        # (V^T V + aI)^-1 V^T = V_s diag(s / (s^2 + a)) U^T, stable for any b
        s = f.singular_values
        w = (f.vt.T * (s / (s * s + ridge))) @ (f.u.T @ a)

    gram_rhs = v.T @ a
    grad = v.T @ (v @ w) - gram_rhs
    return AlignmentMap(
        w=w,
        samples_used=v.shape[0],
        residual_fro=float(np.linalg.norm(a - v @ w)),
        effective_rank=f.rank(rcond),
        gradient_norm=float(np.linalg.norm(grad)),
        condition_estimate=f.condition(),
        rcond=rcond,
        ridge=ridge,
    )


def apply_alignment(amap, victim):
    v = as_matrix(victim, "victim")
    if v.shape[1] != amap.victim_dim:
        raise DataError(f"victim has {v.shape[1]} columns, map expects {amap.victim_dim}")
    return v @ amap.w


@dataclass
class AlignmentQuality:
    cosines: list  # float per row, None where a row had zero norm
    mean: float
    zero_rows: int


def alignment_quality(aligned, attack_truth):
    """Row-wise cosine between aligned and true attack embeddings, plus their mean.

    Rows where either side has zero norm are reported as ``None`` and left out
    of the mean; a ``RuntimeWarning`` gives the count.
    """
    x = as_matrix(aligned, "aligned")
    y = as_matrix(attack_truth, "attack_truth")
    if x.shape != y.shape:
        raise DataError(f"shape mismatch: {x.shape} vs {y.shape}")
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    ok = (nx > 0) & (ny > 0)
    cos = np.full(x.shape[0], np.nan)
    cos[ok] = np.einsum("ij,ij->i", x[ok], y[ok]) / (nx[ok] * ny[ok])
    cos = np.clip(cos, -1.0, 1.0)
    bad = int(np.count_nonzero(~ok))
    if bad:
        warnings.warn(f"{bad} zero-norm rows excluded from mean cosine", RuntimeWarning, stacklevel=2)
    mean = float(cos[ok].mean()) if ok.any() else float("nan")
    return AlignmentQuality([None if not k else float(c) for c, k in zip(cos, ok)], mean, bad)


def random_map_baseline(victim, attack_truth, seed=0):
    """Mean cosine achieved by a Gaussian random map of the right shape (chance level)."""
    v = as_matrix(victim)
    rng = np.random.Generator(np.random.Philox(seed))
    w = rng.standard_normal((v.shape[1], np.shape(attack_truth)[1]))
    return alignment_quality(v @ w, attack_truth).mean
