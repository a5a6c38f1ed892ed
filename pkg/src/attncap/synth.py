"""Synthetic scenes of colored shapes, rendered straight to feature grids.

Each cell carries a 16-channel vector::

    0-2   shape one-hot (square, circle, triangle)
    3-5   color one-hot (red, blue, green)
    6     occupancy
    7-9   row band one-hot (top, middle, bottom)
    10-12 column band one-hot (left, center, right)
    13    row / (H - 1)
    14    col / (W - 1)
    15    constant 1

Objects occupy one cell each and are named in reading order (top row first,
then left to right).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import DatasetManifest, ManifestEntry, save_features

SHAPES = ("square", "circle", "triangle")
COLORS = ("red", "blue", "green")
FEATURE_DIM = 16


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    row: int
    col: int

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [(self.row, self.col)]


@dataclass(frozen=True)
class Scene:
    id: str
    height: int
    width: int
    objects: tuple[SceneObject, ...]

    def to_json(self) -> str:
        return json.dumps({
            "id": self.id,
            "height": self.height,
            "width": self.width,
            "objects": [asdict(o) for o in self.objects],
        })

    @classmethod
    def from_json(cls, line: str) -> "Scene":
        obj = json.loads(line)
        return cls(obj["id"], obj["height"], obj["width"],
                   tuple(SceneObject(**o) for o in obj["objects"]))


def relation(first: SceneObject, second: SceneObject) -> str:
    dr, dc = second.row - first.row, second.col - first.col
    if abs(dr) > abs(dc):
        return "above"
    return "to the left of" if dc > 0 else "to the right of"


def captions(scene: Scene) -> list[str]:
    """Two paraphrases: the plain template and a 'there is' variant."""
    objs = scene.objects
    phrase = f"a {objs[0].color} {objs[0].shape}"
    if len(objs) == 2:
        phrase += f" {relation(objs[0], objs[1])} a {objs[1].color} {objs[1].shape}"
    return [phrase, f"there is {phrase}"]


def _band(i: int, n: int) -> int:
    return min(2, 3 * i // n)


def render(scene: Scene) -> np.ndarray:
    h, w = scene.height, scene.width
    grid = np.zeros((h, w, FEATURE_DIM))
    for r in range(h):
        for c in range(w):
            grid[r, c, 7 + _band(r, h)] = 1.0
            grid[r, c, 10 + _band(c, w)] = 1.0
            grid[r, c, 13] = r / (h - 1) if h > 1 else 0.0
            grid[r, c, 14] = c / (w - 1) if w > 1 else 0.0
            grid[r, c, 15] = 1.0
    for o in scene.objects:
        grid[o.row, o.col, SHAPES.index(o.shape)] = 1.0
        grid[o.row, o.col, 3 + COLORS.index(o.color)] = 1.0
        grid[o.row, o.col, 6] = 1.0
    return grid


def random_scene(rng: np.random.Generator, scene_id: str, height: int, width: int) -> Scene:
    n_obj = 1 if height * width < 2 else int(rng.integers(1, 3))
    cells = rng.choice(height * width, size=n_obj, replace=False)
    objs = [
        SceneObject(SHAPES[rng.integers(3)], COLORS[rng.integers(3)], int(c) // width, int(c) % width)
        for c in cells
    ]
    objs.sort(key=lambda o: (o.row, o.col))
    return Scene(scene_id, height, width, tuple(objs))


def synth_dataset(
    n: int,
    out_dir,
    grid: tuple[int, int] = (4, 4),
    seed: int = 0,
    n_val: int = 0,
    n_test: int = 0,
) -> DatasetManifest:
    """Write ``n`` scenes under ``out_dir``: features/, manifest.jsonl, scenes.jsonl.

    The last ``n_test`` scenes are tagged test and the ``n_val`` before them val.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n_val + n_test > n:
        raise ValueError("more held-out scenes than scenes")
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries, scenes = [], []
    for i in range(n):
        scene = random_scene(rng, f"scene{i:05d}", *grid)
        rel = f"features/{scene.id}.fgrd"
        save_features(out / rel, render(scene))
        split = "test" if i >= n - n_test else "val" if i >= n - n_test - n_val else "train"
        entries.append(ManifestEntry(scene.id, rel, captions(scene), split))
        scenes.append(scene)
    manifest = DatasetManifest(entries, out)
    manifest.save(out / "manifest.jsonl")
    (out / "scenes.jsonl").write_text("".join(s.to_json() + "\n" for s in scenes), encoding="utf-8")
    return manifest


def load_scenes(path) -> dict[str, Scene]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return {s.id: s for s in (Scene.from_json(line) for line in lines if line.strip())}


def grounding_hits(words, alphas, scene: Scene) -> tuple[int, int]:
    """(hits, object-word emissions) for one generated caption.

    Every emitted color or shape word belongs to the "<color> <shape>" phrase
    around it. The emission is a hit when that phrase names an object of the
    scene and the arg-max attention cell of the step lies on that object.
    """
    hits = total = 0
    for i, word in enumerate(words):
        if word in COLORS:
            color, shape = word, words[i + 1] if i + 1 < len(words) else None
        elif word in SHAPES:
            color, shape = (words[i - 1] if i > 0 else None), word
        else:
            continue
        total += 1
        cell = divmod(int(np.argmax(alphas[i])), scene.width)
        owners = [o for o in scene.objects if o.color == color and o.shape == shape]
        hits += any(cell in o.cells for o in owners)
    return hits, total
