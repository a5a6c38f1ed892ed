"""Input checks shared by the estimators."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .captioner import FeatureGrid
from .errors import ContractError, DimensionError
from .text import normalize_tokenize


def check_grids(X) -> list[FeatureGrid]:
    """Accept a 4-D array (n, H, W, D) or a sequence of grids with one depth."""
    if isinstance(X, np.ndarray) and X.ndim == 4:
        grids = [FeatureGrid(x) for x in X]
    else:
        grids = [x if isinstance(x, FeatureGrid) else FeatureGrid(np.asarray(x)) for x in X]
    if not grids:
        raise ContractError("need at least one feature grid")
    depths = {g.depth for g in grids}
    if len(depths) != 1:
        raise DimensionError(f"feature grids disagree on depth: {sorted(depths)}")
    return grids


def check_references(y, n_samples: int) -> list[list[list[str]]]:
    """Normalize targets to token lists: one caption string or a list of them per sample."""
    if isinstance(y, str):
        raise ContractError("y must hold one entry per sample, not a single string")
    refs = []
    for item in y:
        captions = [item] if isinstance(item, str) else list(item)
        if not captions:
            raise ContractError("every sample needs at least one caption")
        refs.append([normalize_tokenize(c) if isinstance(c, str) else list(c) for c in captions])
    if len(refs) != n_samples:
        raise DimensionError(f"{len(refs)} caption entries for {n_samples} grids")
    return refs


def check_sentences(X) -> list[list[str]]:
    if isinstance(X, str):
        raise ContractError("expected a sequence of sentences, got a single string")
    out = [normalize_tokenize(s) if isinstance(s, str) else list(s) for s in X]
    if not out:
        raise ContractError("need at least one sentence")
    return out


def check_depth(grids: Sequence[FeatureGrid], depth: int) -> None:
    for g in grids:
        if g.depth != depth:
            raise DimensionError(f"grid depth {g.depth} does not match fitted depth {depth}")
