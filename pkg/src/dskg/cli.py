"""Command-line entry points: prepare, train, eval, predict-triples, audit-inverse, gen-toy.

Every command exits 0 on success; failures print one machine-parseable line
``error<TAB>ExceptionType<TAB>message`` to stderr and exit nonzero. Commands
that produce files also write the fully resolved configuration they ran with
as ``config.resolved`` in the output directory.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import beam, config as cfg, data, evaluation, toygen, training
from .model import load_checkpoint, save_checkpoint

TRAIN_OPTION_TYPES = {
    "learning_rate": float,
    "batch_size": int,
    "embed_dim": int,
    "layers": int,
    "keep_prob": float,
    "entity_negatives": int,
    "relation_negatives": int,
    "arch": str,
    "relation_loss": bool,
    "epochs": int,
    "eval_interval": int,
    "patience": int,
    "seed": int,
    "shared_negatives": bool,
    "sampling_correction": bool,
    "precision": str,
}

TRAIN_OPTION_DEFAULTS = {
    "learning_rate": 0.001,
    "batch_size": 2048,
    "embed_dim": 512,
    "layers": 2,
    "keep_prob": 0.5,
    "entity_negatives": None,
    "relation_negatives": None,
    "arch": "dskg",
    "relation_loss": True,
    "epochs": 100,
    "eval_interval": 1,
    "patience": 3,
    "seed": 0,
    "shared_negatives": False,
    "sampling_correction": False,
    "precision": "standard",
}

EVAL_OPTION_TYPES = {"alpha": float, "pessimistic": bool, "workers": int, "dump_ranks": bool}
EVAL_OPTION_DEFAULTS = {"alpha": 1.0 / 3.0, "pessimistic": False, "workers": 1, "dump_ranks": False}

PREDICT_OPTION_TYPES = {
    "stage1_window": int,
    "stage2_window": int,
    "canonicalize": bool,
    "curve_points": int,
    "workers": int,
}
PREDICT_OPTION_DEFAULTS = {
    "stage1_window": 100_000,
    "stage2_window": 1_000_000,
    "canonicalize": True,
    "curve_points": 1000,
    "workers": 1,
}


def load_any_dataset(path) -> data.IndexedDataset:
    """Accept a binary cache file or a directory of train/valid/test.txt."""
    path = Path(path)
    if path.is_dir():
        return data.index_dataset(
            data.load_triples(path / "train.txt"),
            data.load_triples(path / "valid.txt"),
            data.load_triples(path / "test.txt"),
        )
    if not path.exists():
        raise FileNotFoundError(f"no such dataset: {path}")
    return data.load_dataset(path)


def _resolve(parsed_flags: dict, defaults: dict, types: dict, config_file=None) -> dict:
    return cfg.resolve_options(defaults, types, config_file=config_file, flags=parsed_flags)


def _echo_config(options: dict, out_dir: Path, extra: dict | None = None):
    merged = dict(options)
    if extra:
        merged.update(extra)
    cfg.write_resolved(merged, out_dir / "config.resolved")


def _train_config(options: dict) -> training.TrainConfig:
    return training.TrainConfig(
        learning_rate=options["learning_rate"],
        batch_size=options["batch_size"],
        embed_dim=options["embed_dim"],
        num_layers=options["layers"],
        keep_prob=options["keep_prob"],
        entity_negatives=options["entity_negatives"],
        relation_negatives=options["relation_negatives"],
        arch=options["arch"],
        relation_loss=options["relation_loss"],
        epochs=options["epochs"],
        eval_interval=options["eval_interval"],
        patience=options["patience"],
        seed=options["seed"],
        shared_negatives=options["shared_negatives"],
        sampling_correction=options["sampling_correction"],
        precision=options["precision"],
    )


def cmd_prepare(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = data.index_dataset(
        data.load_triples(args.train),
        data.load_triples(args.valid),
        data.load_triples(args.test),
    )
    cache_path = out_dir / "dataset.dskg"
    data.save_dataset(dataset, cache_path)
    stats = data.dataset_stats(dataset)
    lines = [f"{key}={value}" for key, value in stats.items()]
    (out_dir / "stats.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _echo_config(
        {"train": args.train, "valid": args.valid, "test": args.test, "out": str(out_dir)},
        out_dir,
    )
    for line in lines:
        print(line)
    print(f"cache={cache_path}")
    return 0


def cmd_gen_toy(args) -> int:
    out_dir = Path(args.out)
    toy = toygen.generate_toy_kg(
        toygen.ToyConfig(
            num_entities=args.entities,
            num_chains=args.chains,
            num_extra_pairs=args.extra_pairs,
            holdout_fraction=args.holdout,
            seed=args.seed,
        )
    )
    toygen.write_toy_kg(toy, out_dir)
    _echo_config(
        {
            "entities": args.entities,
            "chains": args.chains,
            "extra_pairs": args.extra_pairs,
            "holdout": args.holdout,
            "seed": args.seed,
            "out": str(out_dir),
        },
        out_dir,
    )
    print(f"train={len(toy.train)}\nvalid={len(toy.valid)}\ntest={len(toy.test)}")
    return 0


def cmd_train(args) -> int:
    flags = {key: getattr(args, key) for key in TRAIN_OPTION_TYPES}
    options = _resolve(flags, TRAIN_OPTION_DEFAULTS, TRAIN_OPTION_TYPES, args.config)
    dataset = load_any_dataset(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(options, out_dir, {"data": str(args.data), "out": str(out_dir)})

    train_config = _train_config(options)
    result = training.train(
        dataset,
        train_config,
        log_path=out_dir / "train.log",
        checkpoint_path=out_dir / "checkpoint.dskg",
        progress=print if args.verbose else None,
    )
    save_checkpoint(result.params, out_dir / "checkpoint.dskg")
    best = "-" if result.best_val_mrr is None else f"{result.best_val_mrr:.4f}"
    print(f"epochs={result.epochs_run}\nbest_val_mrr={best}\ncheckpoint={out_dir / 'checkpoint.dskg'}")
    return 0


def _check_compatible(params, dataset):
    if (
        params.num_entities != dataset.vocab.num_entities
        or params.num_relations != dataset.vocab.num_relations
    ):
        raise ValueError(
            "checkpoint/vocabulary mismatch: model has "
            f"{params.num_entities} entities/{params.num_relations} relations, dataset has "
            f"{dataset.vocab.num_entities}/{dataset.vocab.num_relations}"
        )


def cmd_eval(args) -> int:
    flags = {key: getattr(args, key) for key in EVAL_OPTION_TYPES}
    options = _resolve(flags, EVAL_OPTION_DEFAULTS, EVAL_OPTION_TYPES, args.config)
    dataset = load_any_dataset(args.data)
    params = load_checkpoint(args.checkpoint)
    _check_compatible(params, dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(
        options, out_dir,
        {"checkpoint": str(args.checkpoint), "data": str(args.data), "out": str(out_dir)},
    )

    enhance_on = evaluation.EnhanceConfig(alpha=options["alpha"], enabled=True)
    enhance_off = evaluation.EnhanceConfig(enabled=False)
    variants = {
        "entity_plain": (evaluation.evaluate_entity_prediction, enhance_off),
        "entity_enhanced": (evaluation.evaluate_entity_prediction, enhance_on),
        "cascade_plain": (evaluation.evaluate_cascade, enhance_off),
        "cascade_enhanced": (evaluation.evaluate_cascade, enhance_on),
    }
    for name, (fn, enhance) in variants.items():
        report = fn(
            params, dataset, enhance,
            split=args.split,
            keep_ranks=options["dump_ranks"],
            pessimistic=options["pessimistic"],
            workers=options["workers"],
        )
        notes = [f"enhancement={'on (alpha=%g)' % options['alpha'] if enhance.enabled else 'off'}"]
        text = evaluation.format_report(report, name, notes)
        (out_dir / f"{name}.report").write_text(text, encoding="utf-8")
        if options["dump_ranks"]:
            evaluation.write_ranks_dump(out_dir / f"{name}.ranks.tsv", dataset, args.split, report)
        print(f"{name}: hits@1={report.hits1:.2f} hits@10={report.hits10:.2f} "
              f"mrr={report.mrr:.2f} mr={report.mr:.2f}")
    return 0


def cmd_predict_triples(args) -> int:
    flags = {key: getattr(args, key) for key in PREDICT_OPTION_TYPES}
    options = _resolve(flags, PREDICT_OPTION_DEFAULTS, PREDICT_OPTION_TYPES, args.config)
    dataset = load_any_dataset(args.data)
    params = load_checkpoint(args.checkpoint)
    _check_compatible(params, dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(
        options, out_dir,
        {"checkpoint": str(args.checkpoint), "data": str(args.data), "out": str(out_dir)},
    )

    beam_config = beam.BeamConfig(
        stage1_window=options["stage1_window"],
        stage2_window=options["stage2_window"],
        canonicalize=options["canonicalize"],
        curve_points=options["curve_points"],
    )
    pairs = beam.stage1_pairs(params, beam_config, workers=options["workers"])
    output = beam.stage2_triples(params, pairs, beam_config, workers=options["workers"])
    curve = beam.precision_curve(
        output, dataset,
        canonicalize=beam_config.canonicalize,
        max_points=beam_config.curve_points,
    )
    beam.write_predictions(out_dir / "predictions.tsv", output, dataset.vocab)
    beam.write_curve(out_dir / "curve.tsv", curve)
    final = curve[-1] if curve else None
    if final is not None and final.precision is not None:
        print(f"triples={len(output)}\nfinal_precision={final.precision:.4f}")
    else:
        print(f"triples={len(output)}\nfinal_precision=NA")
    return 0


def cmd_audit_inverse(args) -> int:
    dataset = load_any_dataset(args.data)
    rows = data.audit_inverse_pairs(dataset)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            data.write_inverse_audit(rows, dataset.vocab, handle)
        print(f"pairs={len(rows)}\nout={args.out}")
    else:
        data.write_inverse_audit(rows, dataset.vocab, sys.stdout)
    return 0


def _add_bool(parser, name, help_text):
    parser.add_argument(name, action=argparse.BooleanOptionalAction, default=None, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dskg",
        description="Sequential knowledge-graph completion: train, evaluate, predict triples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="index triple files and write a binary dataset cache")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("gen-toy", help="generate a deterministic synthetic KG")
    p.add_argument("--out", required=True)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--chains", type=int, default=250)
    p.add_argument("--extra-pairs", type=int, default=250)
    p.add_argument("--holdout", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=cmd_gen_toy)

    p = sub.add_parser("train", help="train a model and keep the best validation checkpoint")
    p.add_argument("--data", required=True, help="dataset cache file or directory of .txt splits")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--keep-prob", dest="keep_prob", type=float, default=None)
    p.add_argument("--entity-negatives", dest="entity_negatives", type=int, default=None)
    p.add_argument("--relation-negatives", dest="relation_negatives", type=int, default=None)
    p.add_argument("--arch", choices=training.ARCH_CHOICES, default=None)
    _add_bool(p, "--relation-loss", "include the relation-prediction loss term")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--eval-interval", dest="eval_interval", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    _add_bool(p, "--shared-negatives", "share one negative set across each batch")
    _add_bool(p, "--sampling-correction", "subtract log sampling probabilities from logits")
    p.add_argument("--precision", choices=training.PRECISION_CHOICES, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="write the four ranking reports for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--alpha", type=float, default=None)
    _add_bool(p, "--pessimistic", "count score ties against the gold label")
    p.add_argument("--workers", type=int, default=None)
    _add_bool(p, "--dump-ranks", "write per-query rank dumps")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict-triples", help="two-stage beam search over whole triples")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--stage1-window", dest="stage1_window", type=int, default=None)
    p.add_argument("--stage2-window", dest="stage2_window", type=int, default=None)
    _add_bool(p, "--canonicalize", "fold reverse-relation outputs onto their forward form")
    p.add_argument("--curve-points", dest="curve_points", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=cmd_predict_triples)

    p = sub.add_parser("audit-inverse", help="report train/test swap-overlap per relation pair")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="output TSV path (default: stdout)")
    p.set_defaults(fn=cmd_audit_inverse)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # noqa: BLE001 - single surface for the error contract
        message = str(exc).replace("\t", " ").replace("\n", " ")
        print(f"error\t{type(exc).__name__}\t{message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
