"""Feature-grid files and dataset manifests."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .captioner import FeatureGrid
from .errors import DataError

FEATURE_MAGIC = b"FGRD"
FEATURE_VERSION = 1
SPLITS = ("train", "val", "test")


def save_features(path, grid: FeatureGrid | np.ndarray) -> None:
    values = grid.values if isinstance(grid, FeatureGrid) else np.asarray(grid, dtype=np.float64)
    if values.ndim != 3:
        raise DataError(f"feature grid must be H x W x D, got {values.shape}")
    h, w, d = values.shape
    header = FEATURE_MAGIC + struct.pack("<IIII", FEATURE_VERSION, h, w, d)
    Path(path).write_bytes(header + np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_features(path) -> FeatureGrid:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc
    if len(raw) < 20 or raw[:4] != FEATURE_MAGIC:
        raise DataError(f"{path}: not a feature-grid file")
    version, h, w, d = struct.unpack_from("<IIII", raw, 4)
    if version != FEATURE_VERSION:
        raise DataError(f"{path}: unsupported feature-grid version {version}")
    if len(raw) != 20 + 8 * h * w * d:
        raise DataError(f"{path}: expected {h}x{w}x{d} values, file size {len(raw)}")
    values = np.frombuffer(raw, "<f8", offset=20).reshape(h, w, d).astype(np.float64)
    try:
        return FeatureGrid(values)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


@dataclass
class ManifestEntry:
    id: str
    features: str
    captions: list[str]
    split: str = "train"

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "features": self.features, "captions": self.captions, "split": self.split}
        )


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise DataError(f"duplicate manifest id {e.id!r}")
            seen.add(e.id)
            if e.split not in SPLITS:
                raise DataError(f"entry {e.id!r}: unknown split {e.split!r}")
            if not e.captions:
                raise DataError(f"entry {e.id!r} has no captions")

    def __len__(self) -> int:
        return len(self.entries)

    def split(self, name: str) -> "DatasetManifest":
        return DatasetManifest([e for e in self.entries if e.split == name], self.root)

    def by_id(self, entry_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise DataError(f"no manifest entry with id {entry_id!r}")

    def feature_path(self, entry: ManifestEntry) -> Path:
        p = Path(entry.features)
        return p if p.is_absolute() else self.root / p

    def load_grid(self, entry: ManifestEntry) -> FeatureGrid:
        return load_features(self.feature_path(entry))

    def check_files(self) -> None:
        for e in self.entries:
            if not self.feature_path(e).is_file():
                raise DataError(f"feature file for {e.id!r} not found: {self.feature_path(e)}")

    def save(self, path) -> None:
        Path(path).write_text("".join(e.to_json() + "\n" for e in self.entries), encoding="utf-8")

    @classmethod
    def load(cls, path, check: bool = True) -> "DatasetManifest":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        entries = []
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries.append(
                    ManifestEntry(
                        str(obj["id"]), str(obj["features"]), [str(c) for c in obj["captions"]],
                        str(obj.get("split", "train")),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed manifest line: {exc}") from exc
        manifest = cls(entries, path.parent)
        if check:
            manifest.check_files()
        return manifest
