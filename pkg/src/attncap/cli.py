"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .data import DatasetManifest
from .embed import SkipGramParams, context_pairs, export_table, save_embeddings, train_skipgram
from .errors import ContractError, DataError, NumericError
from .gradcheck import run_suite
from .pipeline import (
    caption,
    generate_candidates,
    load_grid_or_entry,
    load_model,
    read_eval_jsonl,
    report_json,
    score_rows,
    train,
    vocab_from_manifest,
    write_heatmaps,
)
from .synth import synth_dataset
from .text import build_vocab, normalize_tokenize
from .training import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_dir: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (TrainConfig keys)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    if out_dir:
        p.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="attncap", description="Attentive GRU image captioning at desk scale.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic scene dataset")
    _common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--height", type=int, default=4)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--val", type=int, default=0, help="scenes tagged val")
    p.add_argument("--test", type=int, default=0, help="scenes tagged test (taken last)")

    p = sub.add_parser("vocab", help="build a vocabulary from manifest captions")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--min-count", type=int)

    p = sub.add_parser("embed-train", help="train skip-gram word vectors")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", type=Path, help="use the train-split captions")
    src.add_argument("--corpus", type=Path, help="plain text, one sentence per line")
    p.add_argument("--dim", type=int, help="embedding size (default: config embed_dim)")
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.5)

    p = sub.add_parser("train", help="train the captioner")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--resume", action="store_true", help="continue from out-dir checkpoint")

    p = sub.add_parser("caption", help="caption one image id or feature file")
    _common(p, out_dir=False)
    p.add_argument("target", help="manifest id or .fgrd path")
    p.add_argument("--model-dir", type=Path, required=True)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--out-dir", type=Path, help="write one heatmap per generated word here")

    p = sub.add_parser("evaluate", help="score candidates against references")
    _common(p, out_dir=False)
    p.add_argument("--input", type=Path, help="JSON lines with candidate and references")
    p.add_argument("--model-dir", type=Path, help="caption a manifest split with this model")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--split", default="test")
    p.add_argument("--out-dir", type=Path, help="write report.json (and candidates.jsonl)")

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    _common(p, out_dir=False)
    p.add_argument("--seeds", type=int, default=20, help="number of consecutive seeds")
    return parser


def _config(args) -> TrainConfig:
    obj = {}
    if args.config is not None:
        try:
            obj = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from exc
        except ValueError as exc:
            raise ContractError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ContractError("config must be a JSON object")
    if getattr(args, "seed", None) is not None:
        obj["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        obj["epochs"] = args.epochs
    return TrainConfig.from_dict(obj)


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else _config(args).seed
    try:
        manifest = synth_dataset(args.n, args.out_dir, (args.height, args.width), seed, args.val, args.test)
    except ValueError as exc:
        raise ContractError(str(exc)) from exc
    print(f"wrote {len(manifest)} scenes to {args.out_dir / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_vocab(args) -> int:
    cfg = _config(args)
    manifest = DatasetManifest.load(args.manifest, check=False)
    vocab = vocab_from_manifest(manifest, args.min_count or cfg.min_count)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    vocab.save(args.out_dir / "vocab.tsv")
    print(f"vocabulary of {len(vocab)} entries -> {args.out_dir / 'vocab.tsv'}")
    return EXIT_OK


def cmd_embed_train(args) -> int:
    cfg = _config(args)
    if args.manifest is not None:
        manifest = DatasetManifest.load(args.manifest, check=False)
        sentences = [normalize_tokenize(c) for e in manifest.split("train").entries for c in e.captions]
    else:
        try:
            text = args.corpus.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read corpus {args.corpus}: {exc}") from exc
        sentences = [normalize_tokenize(line) for line in text.splitlines() if line.strip()]
    vocab = build_vocab(sentences, cfg.min_count)
    corpus = [[vocab.id(w) for w in s] for s in sentences]
    params = SkipGramParams.init(len(vocab), args.dim or cfg.embed_dim, args.window, cfg.seed)
    history = train_skipgram(corpus, params, args.steps, args.lr)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_embeddings(export_table(params), args.out_dir / "embeddings.embd")
    vocab.save(args.out_dir / "vocab.tsv")
    print(f"{len(context_pairs(corpus, args.window))} pairs, loss {history[0]:.4f} -> {history[-1]:.4f}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    manifest = DatasetManifest.load(args.manifest)
    started = time.perf_counter()
    model = train(manifest, cfg, args.out_dir, resume=args.resume)
    print(f"trained {cfg.epochs} epochs (K={len(model.vocab)}) in {time.perf_counter() - started:.1f}s "
          f"-> {args.out_dir}")
    return EXIT_OK


def cmd_caption(args) -> int:
    model = load_model(args.model_dir)
    manifest = DatasetManifest.load(args.manifest, check=False) if args.manifest else None
    entry_id, grid = load_grid_or_entry(args.target, manifest)
    words, alphas = caption(model, grid)
    print(" ".join(words))
    if args.out_dir is not None:
        for path in write_heatmaps(entry_id, grid, words, alphas, args.out_dir):
            print(path)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.input is not None:
        rows = read_eval_jsonl(args.input)
    elif args.model_dir is not None and args.manifest is not None:
        model = load_model(args.model_dir)
        rows = generate_candidates(model, DatasetManifest.load(args.manifest).split(args.split))
    else:
        raise UsageError("evaluate needs --input, or --model-dir together with --manifest")
    if not rows:
        raise DataError("nothing to evaluate")
    text = report_json(score_rows(rows))
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "report.json").write_text(text, encoding="utf-8")
        if args.input is None:
            (args.out_dir / "candidates.jsonl").write_text(
                "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    first = args.seed if args.seed is not None else 0
    worst: dict[str, float] = {}
    for seed in range(first, first + args.seeds):
        for name, err in run_suite(seed).items():
            worst[name] = max(worst.get(name, 0.0), err)
    for name, err in worst.items():
        print(f"{name:<14} {err:.3e} {'ok' if err < GRADCHECK_TOL else 'FAIL'}")
    overall = max(worst.values())
    print(f"max-rel-err {overall:.3e} over {args.seeds} seeds")
    return EXIT_OK if overall < GRADCHECK_TOL else EXIT_NUMERIC


COMMANDS = {
    "synth": cmd_synth,
    "vocab": cmd_vocab,
    "embed-train": cmd_embed_train,
    "train": cmd_train,
    "caption": cmd_caption,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
