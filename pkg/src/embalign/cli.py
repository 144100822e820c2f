"""Command line entry point.

Exit codes: 0 success, 2 config error, 3 data error, 4 network error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .alignment import AlignmentMap, fit_alignment
from .client import DEFAULT_KEY_ENV, EmbeddingServiceClient, fetch_embeddings
from .defense import DefenseSpec, apply_defense
from .errors import ConfigError, DataError, EmbalignError, NetworkError
from .generator import DecoderConfig, train_toy_decoder
from .io import read_corpus, read_emb1, read_labels, write_corpus, write_emb1
from .metrics import entity_f1, read_entities_jsonl, score_pair
from .pipeline import ExperimentConfig, emit_density, run_attack, sweep, sweep_medians, write_manifest
from .utility import ClassifierConfig, LabeledEmbeddings, evaluate_classifier, train_classifier

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NETWORK = 0, 2, 3, 4

log = logging.getLogger("embalign")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _out(args, name):
    os.makedirs(args.output_dir, exist_ok=True)
    return os.path.join(args.output_dir, name)


def _dump(args, name, obj):
    path = _out(args, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
    return path


def _defense_from_args(args):
    if args.defense:
        if os.path.exists(args.defense):
            with open(args.defense, encoding="utf-8") as fh:
                return DefenseSpec.from_dict(json.load(fh))
        try:
            return DefenseSpec.from_json(args.defense)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--defense is neither a file nor JSON: {exc}") from exc
    return None


def cmd_embed(args):
    corpus = read_corpus(args.corpus)
    with EmbeddingServiceClient(
        args.base_url, args.model, api_key_env=args.api_key_env,
        max_in_flight=args.max_in_flight, batch_size=args.batch_size,
    ) as client:
        emb = fetch_embeddings(client, corpus, args.cache_dir or _out(args, "cache"))
        requests = client.request_count
    path = _out(args, args.out)
    write_emb1(path, emb)
    write_manifest(args.output_dir, [path])
    print(f"wrote {emb.shape[0]}x{emb.shape[1] if emb.size else 0} to {path} ({requests} requests)")


def cmd_align(args):
    victim, attack = read_emb1(args.victim), read_emb1(args.attack)
    b = args.b or victim.shape[0]
    if b > min(victim.shape[0], attack.shape[0]):
        raise ConfigError(f"b={b} exceeds available pairs")
    amap = fit_alignment(victim[:b], attack[:b], rcond=args.rcond, ridge=args.ridge)
    path = _out(args, args.out)
    amap.save(path)
    write_manifest(args.output_dir, [path, f"{path}.json"])
    print(json.dumps(amap.diagnostics(), indent=2))


def cmd_defend(args):
    spec = _defense_from_args(args)
    if spec is None:
        raise ConfigError("--defense is required")
    defended = apply_defense(read_emb1(args.input), spec)
    path = _out(args, args.out)
    write_emb1(path, defended)
    spec_path = _dump(args, f"{args.out}.defense.json", spec.to_dict())
    write_manifest(args.output_dir, [path, spec_path])
    print(f"wrote {defended.shape[0]} defended rows to {path}")


def _config(args):
    cfg = ExperimentConfig.load(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if getattr(args, "b", None) and isinstance(args.b, int):
        cfg.alignment_size = args.b
    return cfg


def cmd_attack(args):
    cfg = _config(args)
    report = run_attack(cfg, seed=args.seed)
    print(report.table(), end="")


def cmd_sweep(args):
    cfg = _config(args)
    _, rows = sweep(cfg, args.b_values, seeds=args.seeds, workers=args.workers)
    print("b,median_rouge_l,median_cosine")
    for b, m in sweep_medians(rows).items():
        print(f"{b},{m['rouge_l']:.4f},{m['cosine']:.6f}")


def cmd_train_decoder(args):
    corpus = read_corpus(args.corpus)
    emb = read_emb1(args.embeddings)
    cfg = DecoderConfig(hidden=args.hidden, lr=args.lr, weight_decay=args.weight_decay, batch=args.batch,
                        epochs=args.epochs, seed=args.seed, max_len=args.max_len)
    dec = train_toy_decoder(corpus, emb, cfg)
    path = _out(args, args.out)
    dec.save(path)
    write_manifest(args.output_dir, [path])
    last = dec.loss_history[-1] if dec.loss_history else float("nan")
    print(f"trained {len(dec.vocab)}-token decoder, final loss {last:.4f}, saved to {path}")


def _labeled(emb_path, labels_path, num_classes):
    emb = read_emb1(emb_path)
    _, labels = read_labels(labels_path)
    return LabeledEmbeddings(emb, labels, num_classes)


def cmd_classify(args):
    nc = args.num_classes
    if nc is None:
        nc = int(max(read_labels(p)[1].max() for p in (args.train_labels, args.dev_labels, args.test_labels))) + 1
    sets = [_labeled(e, l, nc) for e, l in ((args.train_emb, args.train_labels), (args.dev_emb, args.dev_labels),
                                            (args.test_emb, args.test_labels))]
    spec = _defense_from_args(args)
    if spec is not None:
        sets = [LabeledEmbeddings(apply_defense(s.embeddings, spec), s.labels, nc) for s in sets]
    cfg = ClassifierConfig(hidden=args.hidden, lr=args.lr, epochs=args.epochs, batch=args.batch, seed=args.seed)
    model = train_classifier(sets[0], sets[1], cfg)
    result = evaluate_classifier(model, sets[2])
    result["best_epoch"] = model.best_epoch
    result["checkpoints"] = model.checkpoints
    write_manifest(args.output_dir, [_dump(args, args.out, result)])
    print(f"ACC {result['acc']:.2f}  F1 {result['f1_macro']:.2f}  (best epoch {model.best_epoch})")


def cmd_score(args):
    refs = {r.id: r.text for r in read_corpus(args.references)}
    cands = {r.id: r.text for r in read_corpus(args.candidates)}
    missing = sorted(set(refs) - set(cands))
    if missing:
        raise DataError(f"candidates missing for ids {missing[:10]}")
    ref_ents = read_entities_jsonl(args.ref_entities) if args.ref_entities else None
    cand_ents = read_entities_jsonl(args.cand_entities) if args.cand_entities else None
    rows = []
    for i, ref in refs.items():
        row = {"id": i, **score_pair(ref, cands[i])}
        if ref_ents is not None and cand_ents is not None:
            row["entity_f1"] = entity_f1(ref_ents.get(i, []), cand_ents.get(i, []), args.label)
        rows.append(row)
    keys = [k for k in rows[0] if k != "id"] if rows else []
    aggregate = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    write_manifest(args.output_dir, [_dump(args, args.out, {"per_sample": rows, "aggregate": aggregate})])
    print(json.dumps(aggregate, indent=2))


def cmd_density(args):
    m = read_emb1(args.matrix)
    path = _out(args, args.out)
    emit_density(m, args.bins, csv_path=path)
    write_manifest(args.output_dir, [path])
    print(f"wrote {args.bins}-bin histogram to {path}")


def cmd_synth(args):
    from .synthetic import exact_space, noisy_space

    if args.kind == "exact":
        sp = exact_space(args.rows, args.dim, args.seed)
    else:
        sp = noisy_space(args.rows, args.dim, args.victim_dim, args.noise, seed=args.seed)
    files = [_out(args, "corpus.jsonl"), _out(args, "victim.emb1"), _out(args, "attack.emb1")]
    write_corpus(files[0], sp.corpus)
    write_emb1(files[1], sp.victim, dtype=np.float64)
    write_emb1(files[2], sp.attack, dtype=np.float64)
    write_manifest(args.output_dir, files)
    print(f"wrote {len(sp.corpus)} synthetic pairs to {args.output_dir}")


def build_parser():
    p = argparse.ArgumentParser(prog="embalign", description="Few-shot embedding alignment, inversion and defenses.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sp.add_argument("--output-dir", default=".", help="directory for outputs and manifest.json")
        sp.set_defaults(func=fn)
        return sp

    sp = add("embed", cmd_embed, "fetch embeddings from an OpenAI-compatible service")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--base-url", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--api-key-env", default=DEFAULT_KEY_ENV)
    sp.add_argument("--cache-dir", default=None)
    sp.add_argument("--max-in-flight", type=int, default=8)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--out", default="embeddings.emb1")

    sp = add("align", cmd_align, "fit the alignment map on the first b pairs")
    sp.add_argument("--victim", required=True)
    sp.add_argument("--attack", required=True)
    sp.add_argument("--b", type=int, default=None)
    sp.add_argument("--rcond", type=float, default=1e-10)
    sp.add_argument("--ridge", type=float, default=0.0)
    sp.add_argument("--out", default="alignment.emb1")

    sp = add("defend", cmd_defend, "apply a defense to an embedding matrix")
    sp.add_argument("--input", required=True)
    sp.add_argument("--defense", required=True, help="JSON file or inline JSON DefenseSpec")
    sp.add_argument("--out", default="defended.emb1")

    sp = add("attack", cmd_attack, "run the three-step attack from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(output_dir=None)

    sp = add("sweep", cmd_sweep, "alignment-size ablation")
    sp.add_argument("--config", required=True)
    sp.add_argument("--b-values", type=_int_list, required=True)
    sp.add_argument("--seeds", type=_int_list, default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(output_dir=None)

    sp = add("train-decoder", cmd_train_decoder, "train the toy autoregressive decoder")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--hidden", type=int, default=64)
    sp.add_argument("--lr", type=float, default=1e-4)
    sp.add_argument("--weight-decay", type=float, default=1e-4)
    sp.add_argument("--batch", type=int, default=128)
    sp.add_argument("--epochs", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-len", type=int, default=32)
    sp.add_argument("--out", default="decoder.bin")

    sp = add("classify", cmd_classify, "train/evaluate an MLP on (optionally defended) embeddings")
    for split in ("train", "dev", "test"):
        sp.add_argument(f"--{split}-emb", required=True)
        sp.add_argument(f"--{split}-labels", required=True)
    sp.add_argument("--num-classes", type=int, default=None)
    sp.add_argument("--defense", default=None)
    sp.add_argument("--hidden", type=int, default=256)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--epochs", type=int, default=6)
    sp.add_argument("--batch", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="utility.json")

    sp = add("score", cmd_score, "score candidate texts against references")
    sp.add_argument("--references", required=True, help="corpus JSONL")
    sp.add_argument("--candidates", required=True, help="corpus JSONL with matching ids")
    sp.add_argument("--ref-entities", default=None)
    sp.add_argument("--cand-entities", default=None)
    sp.add_argument("--label", default=None, help="restrict entity F1 to one label")
    sp.add_argument("--out", default="scores.json")

    sp = add("density", cmd_density, "histogram of matrix entries as CSV")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--out", default="density.csv")

    sp = add("synth", cmd_synth, "write a synthetic corpus with paired embeddings")
    sp.add_argument("--kind", choices=("exact", "noisy"), default="exact")
    sp.add_argument("--rows", type=int, default=200)
    sp.add_argument("--dim", type=int, default=16)
    sp.add_argument("--victim-dim", type=int, default=24)
    sp.add_argument("--noise", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NetworkError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        if exc.failed_ids:
            print(f"failed ids: {', '.join(exc.failed_ids)}", file=sys.stderr)
        return EXIT_NETWORK
    except (DataError, EmbalignError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
