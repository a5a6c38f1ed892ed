"""On-disk training, captioning and evaluation.

A model directory holds ``checkpoint.ckpt`` (parameters, Adam state, epoch
counter, loss history, seed), ``vocab.tsv``, ``config.json`` and
``loss.csv``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint
from .attention import attention_map
from .captioner import CaptionerParams, FeatureGrid, generate
from .data import DatasetManifest, load_features
from .embed import load_embeddings
from .errors import DataError
from .heatmap import export_heatmap, heatmap_name
from .metrics import EvalInstance, ScoreReport, score_corpus
from .text import END_ID, Vocabulary, build_vocab, encode, normalize_tokenize
from .training import AdamState, TrainConfig, mean_loss, run_epochs

logger = logging.getLogger(__name__)

CHECKPOINT = "checkpoint.ckpt"
VOCAB = "vocab.tsv"
CONFIG = "config.json"
LOSS_CSV = "loss.csv"


@dataclass
class Model:
    params: CaptionerParams
    vocab: Vocabulary
    config: TrainConfig


def vocab_from_manifest(manifest: DatasetManifest, min_count: int = 1) -> Vocabulary:
    corpus = [normalize_tokenize(c) for e in manifest.split("train").entries for c in e.captions]
    return build_vocab(corpus, min_count)


def training_examples(manifest: DatasetManifest, vocab: Vocabulary, max_caption_len: int):
    examples = []
    for e in manifest.split("train").entries:
        grid = manifest.load_grid(e)
        for c in e.captions:
            examples.append((grid, encode(normalize_tokenize(c), vocab, max_caption_len)))
    return examples


def write_loss_csv(path, curve: Sequence[float]) -> None:
    rows = ["epoch,mean_loss"] + [f"{i},{float(v)!r}" for i, v in enumerate(curve)]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def save_state(path, params: CaptionerParams, state: AdamState, epoch: int,
               curve: Sequence[float], seed: int) -> None:
    blocks = {k: t.data for k, t in params.named().items()}
    blocks.update(state.to_blocks())
    blocks["train.epoch"] = np.array(float(epoch))
    blocks["train.seed"] = np.array(float(seed))
    blocks["train.loss_curve"] = np.asarray(curve, dtype=np.float64)
    checkpoint.save(path, blocks)


def train(manifest: DatasetManifest, cfg: TrainConfig, out_dir, resume: bool = False) -> Model:
    """Train on the manifest's train split, checkpointing after every epoch.

    ``loss.csv`` row 0 is the mean loss before any update; row k is the mean
    training loss of epoch k. With ``resume`` the run continues from the
    checkpoint in ``out_dir`` and reproduces an uninterrupted run exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(manifest.split("train")) == 0:
        raise DataError("manifest has no train entries")
    vocab = vocab_from_manifest(manifest, cfg.min_count)
    examples = training_examples(manifest, vocab, cfg.max_caption_len)
    ckpt_path = out / CHECKPOINT

    if resume and ckpt_path.exists():
        blocks = checkpoint.load(ckpt_path)
        params = CaptionerParams.from_named(blocks)
        state = AdamState.from_blocks(blocks)
        start = int(blocks["train.epoch"])
        curve = [float(v) for v in blocks["train.loss_curve"].reshape(-1)]
        saved_vocab = Vocabulary.load(out / VOCAB)
        if saved_vocab.words != vocab.words:
            raise DataError(f"{out / VOCAB} does not match the manifest vocabulary")
        (out / CONFIG).write_text(cfg.to_json(), encoding="utf-8")
    else:
        table = load_embeddings(cfg.embeddings) if cfg.embeddings else None
        params = CaptionerParams.init(
            len(vocab), examples[0][0].depth, cfg.enc_dim, cfg.dec_dim, cfg.embed_dim,
            cfg.attn_dim, seed=cfg.seed, embedding=table,
        )
        state = AdamState()
        start = 0
        curve = [mean_loss(params, examples)]
        vocab.save(out / VOCAB)
        (out / CONFIG).write_text(cfg.to_json(), encoding="utf-8")
        save_state(ckpt_path, params, state, 0, curve, cfg.seed)
        write_loss_csv(out / LOSS_CSV, curve)

    def on_epoch(epoch: int, loss: float) -> None:
        curve.append(loss)
        save_state(ckpt_path, params, state, epoch, curve, cfg.seed)
        write_loss_csv(out / LOSS_CSV, curve)

    run_epochs(params, examples, cfg, state, start, on_epoch)
    return Model(params, vocab, cfg)


def load_model(model_dir) -> Model:
    d = Path(model_dir)
    try:
        cfg = TrainConfig.from_json((d / CONFIG).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {d / CONFIG}: {exc}") from exc
    params = CaptionerParams.from_named(checkpoint.load(d / CHECKPOINT))
    return Model(params, Vocabulary.load(d / VOCAB), cfg)


def caption(model: Model, grid: FeatureGrid) -> tuple[list[str], list[np.ndarray]]:
    """Greedy caption words (without <end>) and the attention weights for each."""
    tokens, alphas = generate(grid, model.params, model.config.max_caption_len + 1)
    words = [model.vocab.word(t) for t in tokens]
    if tokens and tokens[-1] == END_ID:
        words, alphas = words[:-1], alphas[:-1]
    return words, alphas


def write_heatmaps(entry_id: str, grid: FeatureGrid, words, alphas, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        export_heatmap(attention_map(a, grid.height, grid.width), out / heatmap_name(entry_id, i, w))
        for i, (w, a) in enumerate(zip(words, alphas))
    ]


def generate_candidates(model: Model, manifest: DatasetManifest) -> list[dict]:
    rows = []
    for e in manifest.entries:
        words, _ = caption(model, manifest.load_grid(e))
        rows.append({"id": e.id, "candidate": " ".join(words), "references": e.captions})
    return rows


def score_rows(rows: Sequence[dict]) -> ScoreReport:
    corpus = [
        EvalInstance(normalize_tokenize(r["candidate"]), [normalize_tokenize(c) for c in r["references"]])
        for r in rows
    ]
    return score_corpus(corpus)


def read_eval_jsonl(path) -> list[dict]:
    rows = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rows.append({"id": obj.get("id"), "candidate": str(obj["candidate"]),
                         "references": [str(r) for r in obj["references"]]})
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: malformed evaluation line: {exc}") from exc
        if not rows[-1]["references"]:
            raise DataError(f"{path}:{lineno}: no references")
    return rows


def report_json(report: ScoreReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def load_grid_or_entry(target: str, manifest: DatasetManifest | None) -> tuple[str, FeatureGrid]:
    """Resolve a CLI caption target: a manifest id or a feature-file path."""
    if manifest is not None:
        try:
            entry = manifest.by_id(target)
        except DataError:
            entry = None
        if entry is not None:
            return entry.id, manifest.load_grid(entry)
    path = Path(target)
    if not path.exists():
        raise DataError(f"{target!r} is neither a manifest id nor a feature file")
    return path.stem, load_features(path)


def is_finite_model(model: Model) -> bool:
    return all(math.isfinite(float(np.sum(t.data))) for t in model.params.parameters())
