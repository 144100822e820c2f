"""End-to-end attack runs: align leaked victim embeddings, decode, score.

Corpus order defines the splits: ``[train | align pool | test]``.  The
decoder-training block is only used by ``train-decoder``; the alignment pool
and the held-out test block never overlap.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .alignment import alignment_quality, apply_alignment, fit_alignment, random_map_baseline
from .defense import DefenseSpec, apply_defense
from .errors import ConfigError, DataError
from .generator import NearestNeighborDecoder, ToyDecoder
from .io import Corpus, read_corpus, read_emb1
from .linalg import DEFAULT_RCOND, as_matrix
from .metrics import score_pair

log = logging.getLogger(__name__)

# decoder-train / alignment / evaluation sizes the defaults are scaled from
SPLIT_PROPORTIONS = (150_000, 1_000, 200)
METRIC_COLUMNS = ("bleu_1", "bleu_2", "rouge_l", "rouge_1", "cosine")


def default_splits(n):
    total = sum(SPLIT_PROPORTIONS)
    align = max(1, round(n * SPLIT_PROPORTIONS[1] / total))
    test = max(1, round(n * SPLIT_PROPORTIONS[2] / total))
    if align + test > n:
        raise DataError(f"corpus of {n} records is too small to split")
    return {"train": n - align - test, "align": align, "test": test}


@dataclass
class ExperimentConfig:
    victim_embeddings: str
    attack_embeddings: str
    corpus: str
    alignment_size: int
    defense: DefenseSpec | None = None
    decoder: dict = field(default_factory=lambda: {"kind": "nn"})
    metrics: list = field(default_factory=lambda: list(METRIC_COLUMNS))
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str | None = None
    splits: dict | None = None
    rcond: float = DEFAULT_RCOND
    max_tokens: int = 32

    def __post_init__(self):
        if self.alignment_size < 1:
            raise ConfigError("alignment_size must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.decoder.get("kind") not in ("nn", "toy"):
            raise ConfigError(f"unknown decoder {self.decoder!r}")
        if self.decoder["kind"] == "toy" and not self.decoder.get("path"):
            raise ConfigError("toy decoder needs a 'path'")
        unknown = set(self.metrics) - set(METRIC_COLUMNS)
        if unknown:
            raise ConfigError(f"unknown metrics {sorted(unknown)}")
        if isinstance(self.defense, dict):
            self.defense = DefenseSpec.from_dict(self.defense)

    def check_paths(self):
        paths = [self.victim_embeddings, self.attack_embeddings, self.corpus]
        if self.decoder["kind"] == "toy":
            paths.append(self.decoder["path"])
        for p in paths:
            if not os.path.exists(p):
                raise DataError(f"missing file: {p}")

    def to_dict(self):
        d = dict(self.__dict__)
        d["defense"] = self.defense.to_dict() if self.defense else None
        return d

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = {"victim_embeddings", "attack_embeddings", "corpus", "alignment_size"} - set(d)
        if missing:
            raise ConfigError(f"missing config fields: {sorted(missing)}")
        for key in ("victim_embeddings", "attack_embeddings", "corpus"):
            d[key] = os.path.join(base_dir, d[key])
        if d.get("output_dir"):
            d["output_dir"] = os.path.join(base_dir, d["output_dir"])
        if d.get("decoder", {}).get("path"):
            d["decoder"] = {**d["decoder"], "path": os.path.join(base_dir, d["decoder"]["path"])}
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        cfg = cls.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))
        cfg.check_paths()
        return cfg


@dataclass
class AttackReport:
    per_sample: list
    aggregate: dict
    config_echo: dict
    wall_time: float
    alignment: dict = field(default_factory=dict)
    random_baseline_cosine: float | None = None

    def to_dict(self):
        return dict(self.__dict__)

    def write(self, output_dir, stem="report"):
        os.makedirs(output_dir, exist_ok=True)
        json_path = os.path.join(output_dir, f"{stem}.json")
        txt_path = os.path.join(output_dir, f"{stem}.txt")
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        with open(txt_path, "w", encoding="utf-8") as fh:
            fh.write(self.table())
        return [json_path, txt_path]

    def table(self):
        head = "BLEU1   BLEU2   Rouge-L Rouge1  COS"
        a = self.aggregate
        row = (
            f"{a['bleu_1']:7.2f} {a['bleu_2']:7.2f} {a['rouge_l']:7.2f} {a['rouge_1']:7.2f} {a['cosine']:.4f}"
        )
        lines = [head, row, "", f"samples: {len(self.per_sample)}  wall time: {self.wall_time:.3f}s"]
        if self.random_baseline_cosine is not None:
            lines.append(f"random-map cosine baseline: {self.random_baseline_cosine:.4f}")
        return "\n".join(lines) + "\n"


def _split_indices(n, splits):
    s = splits or default_splits(n)
    if s["train"] < 0 or s["align"] < 1 or s["test"] < 1 or s["train"] + s["align"] + s["test"] > n:
        raise ConfigError(f"invalid splits {s} for {n} records")
    a0 = n - s["test"] - s["align"]
    return np.arange(a0, a0 + s["align"]), np.arange(n - s["test"], n)


def alignment_subset(pool, b, seed):
    """First ``b`` entries of the alignment pool after a seeded shuffle."""
    if b > len(pool):
        raise ConfigError(f"alignment size {b} exceeds the {len(pool)} available pairs")
    return pool[_rng.stream(seed).permutation(len(pool))[:b]]


def attack(
    victim,
    attack_emb,
    corpus,
    b,
    decoder=None,
    defense=None,
    splits=None,
    seed=0,
    rcond=DEFAULT_RCOND,
    max_tokens=32,
    config_echo=None,
):
    """Three-step attack on in-memory arrays: fit W, align held-out rows, decode and score.

    The defense (if any) is applied to every victim row before fitting.
    ``decoder`` defaults to nearest-neighbour retrieval over the whole corpus
    in attack space.
    """
    t0 = time.perf_counter()
    victim = as_matrix(victim, "victim")
    attack_emb = as_matrix(attack_emb, "attack")
    n = len(corpus)
    if victim.shape[0] != n or attack_emb.shape[0] != n:
        raise DataError(f"row counts victim={victim.shape[0]}, attack={attack_emb.shape[0]} vs corpus={n}")
    if b < 1:
        raise ConfigError("alignment size must be >= 1")
    pool, test = _split_indices(n, splits)
    train_idx = alignment_subset(pool, b, seed)

    if defense is not None:
        victim = apply_defense(victim, defense)
    amap = fit_alignment(victim[train_idx], attack_emb[train_idx], rcond=rcond)
    aligned = apply_alignment(amap, victim[test])
    quality = alignment_quality(aligned, attack_emb[test])

    if decoder is None:
        decoder = NearestNeighborDecoder(corpus, attack_emb)
    rows = []
    for j, i in enumerate(test):
        rec = corpus[int(i)]
        text = decoder.decode(aligned[j], max_tokens)
        rows.append({"id": rec.id, "reference": rec.text, "reconstruction": text, **score_pair(rec.text, text),
                     "cosine": quality.cosines[j]})
    aggregate = {k: float(np.mean([r[k] for r in rows if r[k] is not None])) for k in METRIC_COLUMNS}
    return AttackReport(
        per_sample=rows,
        aggregate=aggregate,
        config_echo={**(config_echo or {}), "alignment_size": b, "seed": seed},
        wall_time=time.perf_counter() - t0,
        alignment=amap.diagnostics(),
        random_baseline_cosine=random_map_baseline(victim[test], attack_emb[test], seed),
    )


def _load_inputs(cfg):
    corpus = read_corpus(cfg.corpus)
    victim = read_emb1(cfg.victim_embeddings)
    attack_emb = read_emb1(cfg.attack_embeddings)
    if cfg.decoder["kind"] == "toy":
        decoder = ToyDecoder.load(cfg.decoder["path"])
        if decoder.embed_dim != attack_emb.shape[1]:
            raise DataError(f"decoder dim {decoder.embed_dim} != attack dim {attack_emb.shape[1]}")
    else:
        decoder = None
    return corpus, victim, attack_emb, decoder


def run_attack(config, seed=None, write=True):
    seed = config.seeds[0] if seed is None else seed
    corpus, victim, attack_emb, decoder = _load_inputs(config)
    report = attack(
        victim, attack_emb, corpus, config.alignment_size, decoder=decoder, defense=config.defense,
        splits=config.splits, seed=seed, rcond=config.rcond, max_tokens=config.max_tokens,
        config_echo=config.to_dict(),
    )
    if write and config.output_dir:
        files = report.write(config.output_dir)
        write_manifest(config.output_dir, files)
    return report


def dedupe_b_values(b_values):
    out = []
    for b in b_values:
        if b in out:
            warnings.warn(f"duplicate alignment size {b} dropped", UserWarning, stacklevel=3)
            continue
        out.append(b)
    return out


def sweep(config, b_values, seeds=None, workers=1, csv_path=None):
    """One attack per (b, seed).  Returns ``(reports, rows)``; rows feed the CSV."""
    b_values = dedupe_b_values(list(b_values))
    seeds = list(seeds if seeds is not None else config.seeds)
    corpus, victim, attack_emb, decoder = _load_inputs(config)
    pool, _ = _split_indices(len(corpus), config.splits)
    if max(b_values) > len(pool):
        raise ConfigError(f"largest b {max(b_values)} exceeds the {len(pool)} alignment pairs")
    jobs = [(b, s) for b in b_values for s in seeds]

    def one(job):
        b, s = job
        return attack(victim, attack_emb, corpus, b, decoder=decoder, defense=config.defense,
                      splits=config.splits, seed=s, rcond=config.rcond, max_tokens=config.max_tokens,
                      config_echo=config.to_dict())

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool_exec:
        reports = list(pool_exec.map(one, jobs))
    rows = [{"b": b, "seed": s, "rouge_l": r.aggregate["rouge_l"], "cosine": r.aggregate["cosine"]}
            for (b, s), r in zip(jobs, reports)]
    if csv_path is None and config.output_dir:
        os.makedirs(config.output_dir, exist_ok=True)
        csv_path = os.path.join(config.output_dir, "sweep.csv")
    if csv_path:
        write_csv(csv_path, rows, ["b", "seed", "rouge_l", "cosine"])
        if config.output_dir:
            write_manifest(config.output_dir, [csv_path])
    return reports, rows


def sweep_medians(rows):
    """Median rouge_l / cosine per b, in first-seen b order."""
    out = {}
    for b in dict.fromkeys(r["b"] for r in rows):
        sel = [r for r in rows if r["b"] == b]
        out[b] = {k: float(np.median([r[k] for r in sel])) for k in ("rouge_l", "cosine")}
    return out


def emit_density(matrix, bins=50, csv_path=None):
    """Histogram of all matrix entries as rows ``(left, right, count, density)``."""
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    values = as_matrix(matrix).ravel()
    if values.size == 0:
        raise DataError("empty matrix")
    counts, edges = np.histogram(values, bins=bins)
    widths = np.diff(edges)
    rows = [
        {"left": float(edges[i]), "right": float(edges[i + 1]), "count": int(counts[i]),
         "density": float(counts[i] / (values.size * widths[i]))}
        for i in range(bins)
    ]
    if csv_path:
        write_csv(csv_path, rows, ["left", "right", "count", "density"])
    return rows


def write_csv(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def write_manifest(output_dir, files):
    """Add ``files`` (with sha256 and size) to ``output_dir/manifest.json``."""
    path = os.path.join(output_dir, "manifest.json")
    manifest = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    for f in files:
        with open(f, "rb") as fh:
            data = fh.read()
        manifest[os.path.relpath(f, output_dir)] = {
            "sha256": hashlib.sha256(data).hexdigest(),
            "bytes": len(data),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dict(sorted(manifest.items())), fh, indent=2)
    return path
