"""Command-line interface: synth, train, generate, eval.

Option precedence is flag > config file (``--config``, JSON object keyed by
the flag names with dashes as underscores) > built-in default. The built-in
defaults are the reference hyperparameters (embedding 128, hidden 512,
latent 128, 3 hops, batch 32, teacher forcing 0.5, beam width 5). The
``MWPGEN_SEED`` environment variable is the seed fallback when neither a
flag nor the config file sets one.

Exit codes: 0 ok, 2 input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from pathlib import Path

from . import (
    corpus,
    cskg,
    default_cskg_path,
    default_templates_path,
    generator as gen,
    metrics,
    numerics,
    training,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

DEFAULTS = {
    "cskg": None,  # packaged starter graph when unset
    "templates": None,  # packaged starter bank when unset
    "out_dir": "runs",
    "count": 256,
    "variants": 0,
    "dev_fraction": 0.1,
    "test_fraction": 0.1,
    "seed": None,
    "train": None,
    "dev": None,
    "checkpoint": "runs/model",
    "log": None,
    "embedding_dim": 128,
    "hidden_dim": 512,
    "latent_dim": 128,
    "hops": 3,
    "max_len": 120,
    "num_merges": 200,
    "batch_size": 32,
    "teacher_forcing": 0.5,
    "lr": 1e-3,
    "max_steps": 2000,
    "kl_ramp_fraction": 0.5,
    "eval_interval": 200,
    "lr_patience": 3,
    "equations": None,
    "topic": None,
    "bind_x": None,
    "bind_y": None,
    "n": 4,
    "beam_width": 5,
    "sidecar": "generations.json",
    "predictions": None,
    "references": None,
    "quiet": False,
}


class CliError(ValueError):
    pass


def _add(parser, *names, **kwargs):
    kwargs.setdefault("default", None)
    parser.add_argument(*names, **kwargs)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mwpgen",
        description="Generate math word problems from two-variable linear systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        _add(p, "--config", help="JSON config file; flags override its fields")
        _add(p, "--seed", type=int, help="global RNG seed (fallback: $MWPGEN_SEED, then 0)")
        _add(p, "--quiet", action="store_const", const=True, help="suppress progress output")

    p = sub.add_parser("synth", help="synthesize a dataset from templates and write splits")
    common(p)
    _add(p, "--templates", help="template bank JSONL (default: packaged bank)")
    _add(p, "--cskg", help="knowledge graph TSV (default: packaged graph)")
    _add(p, "--count", type=int, help="samples to synthesize (inputs when --variants > 0)")
    _add(p, "--variants", type=int,
         help="surface variants per input; 0 draws templates independently")
    _add(p, "--dev-fraction", type=float)
    _add(p, "--test-fraction", type=float)
    _add(p, "--out-dir", help="directory for train/dev/test JSONL files")

    p = sub.add_parser("train", help="train a model on a synthesized dataset")
    common(p)
    _add(p, "--train", help="training JSONL (default: <out-dir>/train.jsonl)")
    _add(p, "--dev", help="dev JSONL (default: <out-dir>/dev.jsonl)")
    _add(p, "--cskg")
    _add(p, "--out-dir")
    _add(p, "--checkpoint", help="checkpoint path prefix")
    _add(p, "--log", help="line-oriented JSON training log path")
    for flag, typ in (
        ("--embedding-dim", int), ("--hidden-dim", int), ("--latent-dim", int),
        ("--hops", int), ("--max-len", int), ("--num-merges", int),
        ("--batch-size", int), ("--teacher-forcing", float), ("--lr", float),
        ("--max-steps", int), ("--kl-ramp-fraction", float),
        ("--eval-interval", int), ("--lr-patience", int),
    ):
        _add(p, flag, type=typ)

    p = sub.add_parser("generate", help="generate word problems from a trained checkpoint")
    common(p)
    _add(p, "--checkpoint", help="checkpoint path prefix")
    _add(p, "--cskg")
    _add(p, "--equations", help="two ';'-separated equations, e.g. 'y-x=6;8y-4x=64'")
    _add(p, "--topic")
    _add(p, "--bind-x", help="entity bound to variable x")
    _add(p, "--bind-y", help="entity bound to variable y")
    _add(p, "-n", "--n", type=int, help="number of problems to generate")
    _add(p, "--beam-width", type=int)
    _add(p, "--max-len", type=int)
    _add(p, "--sidecar", help="JSON sidecar path for scores and the solved (x*, y*)")

    p = sub.add_parser("eval", help="score predictions against references")
    common(p)
    _add(p, "--predictions", help="text file, one tokenized prediction per line")
    _add(p, "--references", help="text file, one tokenized reference per line")
    return parser


def merge_options(args):
    merged = dict(DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise CliError(f"config {args.config!r} must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise CliError(f"unknown config fields: {sorted(unknown)}")
        merged.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            merged[key] = value
    if merged["seed"] is None:
        merged["seed"] = int(os.environ.get("MWPGEN_SEED", "0"))
    return merged


def _require(opts, *names):
    for name in names:
        if opts[name] is None:
            raise CliError(f"missing required option --{name.replace('_', '-')}")


def _load_kg(opts):
    return cskg.load_triples(opts["cskg"] or default_cskg_path())


# ---------------------------------------------------------------------------
# commands


def cmd_synth(opts):
    templates = corpus.load_templates(opts["templates"] or default_templates_path())
    kg = _load_kg(opts)
    if opts["variants"] > 0:
        samples = corpus.synth_variant_corpus(
            templates, kg, opts["count"], opts["variants"], opts["seed"]
        )
    else:
        samples = corpus.synth_corpus(templates, kg, opts["count"], opts["seed"])
    train_set, dev_set, test_set = corpus.split(
        samples, opts["dev_fraction"], opts["test_fraction"], opts["seed"]
    )
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train_set), ("dev", dev_set), ("test", test_set)):
        corpus.save_dataset(part, out_dir / f"{name}.jsonl")
    topics = Counter(s.topic for s in samples)
    shapes = len({t.shape for t in templates})
    print(f"synthesized {len(samples)} samples over {shapes} equation shapes")
    print(f"topics: " + ", ".join(f"{t}={c}" for t, c in sorted(topics.items())))
    print(
        f"split: train={len(train_set)} dev={len(dev_set)} test={len(test_set)} "
        f"-> {out_dir}"
    )
    return EXIT_OK


def _build_model_and_vocab(train_samples, kg, opts):
    for s in train_samples:
        s.prepare()
    texts = [" ".join(s.delex_tokens) for s in train_samples]
    vocab = corpus.build_vocab(
        texts,
        corpus.equation_graph_tokens() + corpus.kg_graph_tokens(kg),
        opts["num_merges"],
    )
    config = gen.ModelConfig(
        embedding_dim=opts["embedding_dim"],
        hidden_dim=opts["hidden_dim"],
        latent_dim=opts["latent_dim"],
        hops=opts["hops"],
        vocab_size=len(vocab),
        max_len=opts["max_len"],
    )
    return gen.MwpModel(config, seed=opts["seed"]), vocab


def cmd_train(opts):
    out_dir = Path(opts["out_dir"])
    train_path = opts["train"] or out_dir / "train.jsonl"
    dev_path = opts["dev"] or out_dir / "dev.jsonl"
    train_samples = corpus.load_dataset(train_path)
    dev_samples = corpus.load_dataset(dev_path) if Path(dev_path).exists() else []
    kg = _load_kg(opts)
    model, vocab = _build_model_and_vocab(train_samples, kg, opts)

    prefix = opts["checkpoint"]
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    corpus.save_vocab(vocab, prefix + ".vocab.txt")
    cfg = training.TrainConfig(
        batch_size=opts["batch_size"],
        teacher_forcing=opts["teacher_forcing"],
        lr=opts["lr"],
        max_steps=opts["max_steps"],
        kl_ramp_fraction=opts["kl_ramp_fraction"],
        eval_interval=opts["eval_interval"],
        lr_patience=opts["lr_patience"],
        seed=opts["seed"],
    )
    with open(prefix + ".meta.json", "w", encoding="utf-8") as f:
        json.dump(
            {"model": model.config.to_dict(), "train": cfg.to_dict()},
            f, indent=2, sort_keys=True,
        )
        f.write("\n")

    train_inputs = [
        gen.prepare_inputs(s, kg, vocab, opts["max_len"]) for s in train_samples
    ]
    dev_inputs = [gen.prepare_inputs(s, kg, vocab, opts["max_len"]) for s in dev_samples]
    log_file = open(opts["log"], "w", encoding="utf-8") if opts["log"] else None
    try:
        result = training.train(
            model, train_inputs, dev_inputs, cfg, vocab,
            checkpoint_prefix=prefix, log_file=log_file, verbose=not opts["quiet"],
        )
    finally:
        if log_file is not None:
            log_file.close()
    print(f"trained {result.steps} steps; best dev loss {result.best_dev_loss:.4f}")
    print(f"checkpoint: {prefix} (best: {prefix}-best)")
    return EXIT_OK


def _load_model(prefix):
    with open(prefix + ".meta.json", encoding="utf-8") as f:
        meta = json.load(f)
    vocab = corpus.load_vocab(prefix + ".vocab.txt")
    model = gen.MwpModel(gen.ModelConfig.from_dict(meta["model"]))
    model.load_state_arrays(numerics.load_arrays(prefix))
    return model, vocab


def cmd_generate(opts):
    _require(opts, "checkpoint", "equations", "topic", "bind_x", "bind_y")
    model, vocab = _load_model(opts["checkpoint"])
    kg = _load_kg(opts)
    problems = gen.generate(
        model, kg, vocab,
        opts["equations"], opts["topic"], opts["bind_x"], opts["bind_y"],
        n=opts["n"], seed=opts["seed"],
        beam_width=opts["beam_width"],
        max_len=opts["max_len"] if opts["max_len"] != DEFAULTS["max_len"] else None,
    )
    for p in problems:
        print(p.text)
    sidecar = {
        "equations": opts["equations"],
        "topic": opts["topic"],
        "bind_x": opts["bind_x"],
        "bind_y": opts["bind_y"],
        "seed": opts["seed"],
        "solution": {"x": problems[0].solution_x, "y": problems[0].solution_y},
        "generations": [{"text": p.text, "score": p.score} for p in problems],
    }
    with open(opts["sidecar"], "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    return EXIT_OK


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]


def cmd_eval(opts):
    _require(opts, "predictions", "references")
    pred_lines = _read_lines(opts["predictions"])
    ref_lines = _read_lines(opts["references"])
    if len(pred_lines) != len(ref_lines):
        raise CliError(
            f"line count mismatch: {len(pred_lines)} predictions vs "
            f"{len(ref_lines)} references"
        )
    predictions = [line.split() for line in pred_lines]
    references = [line.split() for line in ref_lines]
    # Self-BLEU needs 4 samples per input: consecutive blocks of 4 predictions
    # whose reference lines agree.
    groups = None
    if len(predictions) % 4 == 0 and predictions:
        blocks = [predictions[i : i + 4] for i in range(0, len(predictions), 4)]
        aligned = all(
            len({tuple(r) for r in references[i : i + 4]}) == 1
            for i in range(0, len(references), 4)
        )
        if aligned:
            groups = blocks
    report = metrics.evaluate(predictions, references, groups)
    print(report.table())
    return EXIT_OK


INPUT_ERRORS = (CliError, OSError, json.JSONDecodeError, ValueError, KeyError)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        opts = merge_options(args)
        handler = {
            "synth": cmd_synth,
            "train": cmd_train,
            "generate": cmd_generate,
            "eval": cmd_eval,
        }[args.command]
        return handler(opts)
    except (training.NumericFailure, FloatingPointError) as exc:
        print(f"mwpgen: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except INPUT_ERRORS as exc:
        message = str(exc).replace("\n", " ")
        print(f"mwpgen: error: {message}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
