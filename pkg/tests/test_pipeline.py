import json
import math
import struct

import numpy as np
import pytest

from attncap import checkpoint
from attncap.cli import main
from attncap.data import DatasetManifest, ManifestEntry, load_features, save_features
from attncap.errors import DataError
from attncap.heatmap import export_heatmap, heatmap_name, read_pgm, to_pixels
from attncap.pipeline import caption, load_model, train, vocab_from_manifest
from attncap.synth import (
    Scene,
    SceneObject,
    captions,
    grounding_hits,
    load_scenes,
    relation,
    render,
    synth_dataset,
)
from attncap.text import RESERVED, normalize_tokenize
from attncap.training import TrainConfig

SMALL = dict(epochs=3, enc_dim=8, dec_dim=12, embed_dim=8, batch_size=4, seed=11)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    synth_dataset(14, root, (3, 3), seed=4, n_val=2, n_test=2)
    return root


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("model")
    train(DatasetManifest.load(dataset / "manifest.jsonl"), TrainConfig(**SMALL), out)
    return out


# checkpoint / feature files -------------------------------------------------

def test_checkpoint_round_trip_is_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    blocks = {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=4), "s": np.array(2.0), "t": rng.normal(size=(2, 1, 3))}
    checkpoint.save(tmp_path / "a.ckpt", blocks)
    loaded = checkpoint.load(tmp_path / "a.ckpt")
    assert list(loaded) == list(blocks)
    for k in blocks:
        assert loaded[k].shape == blocks[k].shape and loaded[k].tobytes() == blocks[k].tobytes()
    checkpoint.save(tmp_path / "b.ckpt", loaded)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    raw = (tmp_path / "a.ckpt").read_bytes()
    assert raw[:4] == b"CKPT" and struct.unpack_from("<I", raw, 4) == (1,)


def test_checkpoint_rejects_corruption(tmp_path):
    raw = checkpoint.dumps({"w": np.ones((2, 2))})
    for bad in (b"XXXX" + raw[4:], raw[:-3], raw[:4] + struct.pack("<I", 9) + raw[8:]):
        with pytest.raises(DataError):
            checkpoint.loads(bad)
    with pytest.raises(DataError):
        checkpoint.load(tmp_path / "missing.ckpt")


def test_feature_file_round_trip(tmp_path):
    grid = np.random.default_rng(1).normal(size=(2, 3, 4))
    save_features(tmp_path / "g.fgrd", grid)
    raw = (tmp_path / "g.fgrd").read_bytes()
    assert raw[:4] == b"FGRD" and struct.unpack_from("<IIII", raw, 4) == (1, 2, 3, 4)
    assert load_features(tmp_path / "g.fgrd").values.tobytes() == grid.tobytes()
    (tmp_path / "bad.fgrd").write_bytes(raw[:-1])
    with pytest.raises(DataError, match="bad.fgrd"):
        load_features(tmp_path / "bad.fgrd")


def test_manifest_rules(tmp_path):
    e = ManifestEntry("a", "a.fgrd", ["x"])
    with pytest.raises(DataError):
        DatasetManifest([e, ManifestEntry("a", "b.fgrd", ["y"])])
    with pytest.raises(DataError):
        DatasetManifest([ManifestEntry("a", "a.fgrd", ["x"], "dev")])
    DatasetManifest([e], tmp_path).save(tmp_path / "m.jsonl")
    with pytest.raises(DataError, match="a.fgrd"):
        DatasetManifest.load(tmp_path / "m.jsonl")
    (tmp_path / "broken.jsonl").write_text('{"id": 1}\n')
    with pytest.raises(DataError, match="broken.jsonl:1"):
        DatasetManifest.load(tmp_path / "broken.jsonl")


# heatmaps -------------------------------------------------------------------

def test_heatmap_examples(tmp_path):
    assert np.all(to_pixels(np.full((2, 2), 0.25)) == 255)
    one_hot = to_pixels(np.eye(4)[3].reshape(2, 2))
    assert one_hot.shape == (32, 32)
    assert np.all(one_hot[16:, 16:] == 255) and one_hot.sum() == 255 * 256
    grid = np.random.default_rng(2).random((3, 5))
    path = export_heatmap(grid, tmp_path / "h.pgm")
    assert path.read_bytes().startswith(b"P5\n80 48\n255\n")
    assert np.array_equal(read_pgm(path), to_pixels(grid))
    assert heatmap_name("scene00001", 3, "red") == "scene00001_03_red.pgm"


# synthetic scenes -----------------------------------------------------------

def test_synth_is_deterministic(tmp_path):
    synth_dataset(1, tmp_path / "a", seed=7)
    synth_dataset(1, tmp_path / "b", seed=7)
    for name in ("manifest.jsonl", "scenes.jsonl", "features/scene00000.fgrd"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_captions_and_vocabulary(tmp_path):
    manifest = synth_dataset(500, tmp_path, seed=3)
    for e in manifest.entries:
        assert len(e.captions) == 2
        for c in e.captions:
            assert " ".join(normalize_tokenize(c)) == c
    vocab = vocab_from_manifest(manifest)
    assert len(vocab) - len(RESERVED) <= 25


def test_render_and_relations():
    top = SceneObject("square", "red", 0, 1)
    below = SceneObject("circle", "blue", 2, 1)
    right = SceneObject("circle", "blue", 0, 3)
    assert relation(top, below) == "above"
    assert relation(top, right) == "to the left of"
    assert relation(right, top) == "to the right of"
    scene = Scene("s", 3, 4, (top, below))
    assert captions(scene) == ["a red square above a blue circle", "there is a red square above a blue circle"]
    grid = render(scene)
    assert grid.shape == (3, 4, 16)
    assert grid[0, 1, 0] == 1 and grid[0, 1, 3] == 1 and grid[0, 1, 6] == 1
    assert grid[1, 1, 6] == 0 and np.all(grid[..., 15] == 1)


def test_grounding_hits():
    scene = Scene("s", 2, 2, (SceneObject("square", "red", 0, 0), SceneObject("circle", "blue", 1, 1)))
    words = ["a", "red", "square", "above", "a", "blue", "circle"]
    on_first, on_second = np.eye(4)[0], np.eye(4)[3]
    good = [on_first] * 4 + [on_second] * 3
    assert grounding_hits(words, good, scene) == (4, 4)
    assert grounding_hits(words, [on_first] * 7, scene) == (2, 4)
    assert grounding_hits(["a", "green", "square"], [on_first] * 3, scene) == (0, 2)


# training pipeline ----------------------------------------------------------

def test_train_artifacts(trained, dataset):
    for name in ("checkpoint.ckpt", "vocab.tsv", "config.json", "loss.csv"):
        assert (trained / name).is_file()
    rows = (trained / "loss.csv").read_text().splitlines()
    assert rows[0] == "epoch,mean_loss" and len(rows) == 1 + 1 + SMALL["epochs"]
    model = load_model(trained)
    assert model.config == TrainConfig(**SMALL)
    blocks = checkpoint.load(trained / "checkpoint.ckpt")
    assert blocks["train.seed"] == SMALL["seed"] and blocks["train.epoch"] == SMALL["epochs"]


def test_initial_loss_matches_uniform_baseline(trained, dataset):
    model = load_model(trained)
    manifest = DatasetManifest.load(dataset / "manifest.jsonl").split("train")
    lengths = [len(normalize_tokenize(c)) + 1 for e in manifest.entries for c in e.captions]
    baseline = np.mean(lengths) * math.log(len(model.vocab))
    first = float((trained / "loss.csv").read_text().splitlines()[1].split(",")[1])
    assert abs(first - baseline) < 0.1 * baseline


def test_training_is_reproducible_and_resumable(dataset, trained, tmp_path):
    manifest = DatasetManifest.load(dataset / "manifest.jsonl")
    train(manifest, TrainConfig(**SMALL), tmp_path / "again")
    staged = tmp_path / "staged"
    train(manifest, TrainConfig(**{**SMALL, "epochs": 1}), staged)
    train(manifest, TrainConfig(**SMALL), staged, resume=True)
    for name in ("checkpoint.ckpt", "loss.csv", "vocab.tsv", "config.json"):
        expected = (trained / name).read_bytes()
        assert (tmp_path / "again" / name).read_bytes() == expected, name
        assert (staged / name).read_bytes() == expected, name


def test_caption_excludes_end_and_matches_attention(trained, dataset):
    model = load_model(trained)
    grid = load_features(dataset / "features" / "scene00000.fgrd")
    words, alphas = caption(model, grid)
    assert "<end>" not in words and len(words) == len(alphas)
    assert len(words) <= model.config.max_caption_len + 1


# command line ---------------------------------------------------------------

def test_cli_synth(tmp_path, capsys):
    assert main(["synth", "--n", "10", "--seed", "1", "--out-dir", str(tmp_path / "d")]) == 0
    assert len(list((tmp_path / "d" / "features").glob("*.fgrd"))) == 10
    assert len((tmp_path / "d" / "manifest.jsonl").read_text().splitlines()) == 10
    assert len(load_scenes(tmp_path / "d" / "scenes.jsonl")) == 10


def test_cli_evaluate_identical_candidates(tmp_path, capsys):
    rows = [{"id": "a", "candidate": "A red square.", "references": ["a red square", "there is a red square"]},
            {"id": "b", "candidate": "a blue circle", "references": ["a blue circle"]}]
    path = tmp_path / "eval.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    assert main(["evaluate", "--input", str(path), "--out-dir", str(tmp_path / "r")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["bleu1"] == 1.0 and report["rouge_l"] == 1.0
    assert json.loads((tmp_path / "r" / "report.json").read_text()) == report


def test_cli_train_caption_evaluate(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({k: v for k, v in SMALL.items() if k != "seed"}))
    model_dir = tmp_path / "m"
    manifest = str(dataset / "manifest.jsonl")
    assert main(["train", "--manifest", manifest, "--config", str(cfg), "--seed", "11",
                 "--out-dir", str(model_dir)]) == 0
    capsys.readouterr()
    assert main(["caption", "scene00013", "--model-dir", str(model_dir), "--manifest", manifest,
                 "--out-dir", str(tmp_path / "maps")]) == 0
    lines = capsys.readouterr().out.splitlines()
    words = lines[0].split()
    assert len(lines) == 1 + len(words)
    for i, w in enumerate(words):
        assert read_pgm(tmp_path / "maps" / f"scene00013_{i:02d}_{w}.pgm").shape == (48, 48)
    assert main(["caption", str(dataset / "features" / "scene00001.fgrd"), "--model-dir", str(model_dir)]) == 0
    assert main(["evaluate", "--model-dir", str(model_dir), "--manifest", manifest]) == 0
    assert set(json.loads(capsys.readouterr().out.split("\n", 1)[1])) >= {"bleu4", "cider"}


def test_cli_embed_train(dataset, tmp_path, capsys):
    assert main(["embed-train", "--manifest", str(dataset / "manifest.jsonl"), "--dim", "4",
                 "--steps", "20", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "embeddings.embd").read_bytes()[:4] == b"EMBD"
    assert main(["vocab", "--manifest", str(dataset / "manifest.jsonl"), "--out-dir", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v" / "vocab.tsv").read_text().startswith("0\t<pad>\t0\n")


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--seeds", "2"]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1]
    assert last.startswith("max-rel-err") and float(last.split()[1]) < 1e-4


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1
    assert main(["synth"]) == 1
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text('{"learning_rate": 1}')
    assert main(["synth", "--n", "1", "--config", str(bad_cfg), "--out-dir", str(tmp_path)]) == 1
    assert main(["train", "--manifest", str(tmp_path / "nope.jsonl")]) == 2
    assert main(["evaluate", "--input", str(tmp_path / "nope.jsonl")]) == 2
    assert main(["caption", "nothing", "--model-dir", str(tmp_path / "none")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_nan_exit_code(tmp_path):
    save_features(tmp_path / "huge.fgrd", np.full((2, 2, 3), 1e308))
    DatasetManifest([ManifestEntry("x", "huge.fgrd", ["a red square"])], tmp_path).save(tmp_path / "m.jsonl")
    assert main(["train", "--manifest", str(tmp_path / "m.jsonl"), "--epochs", "1",
                 "--out-dir", str(tmp_path / "out")]) == 3
