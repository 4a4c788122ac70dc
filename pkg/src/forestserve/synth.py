"""Deterministic synthetic models and datasets for tests and benchmarks.

Leaf values are drawn on a dyadic grid (multiples of 2^-20, magnitude < 4) so
any grouping of per-tree sums is exact in float64; that is what makes
prediction files bitwise-identical across plan kinds and worker counts.
Thresholds and feature values are ordinary random doubles.
"""

from __future__ import annotations

import numpy as np

from . import model
from .model import Forest, Node, Tree

LEAF_GRID = 2.0 ** -20
_LEAF_UNITS = 1 << 22  # |leaf| < 4.0


def _synth_tree(rng: np.random.Generator, max_depth: int, num_features: int,
                split_prob: float) -> Tree:
    nodes: list[Node] = []

    def grow(depth: int) -> int:
        my = len(nodes)
        nodes.append(Node.leaf(0.0))  # placeholder
        split = depth < max_depth and (depth == 0 or rng.random() < split_prob)
        if not split:
            value = int(rng.integers(-_LEAF_UNITS + 1, _LEAF_UNITS)) * LEAF_GRID
            nodes[my] = Node.leaf(value)
            return my
        feature = int(rng.integers(num_features))
        threshold = float(rng.normal())
        default = model.LEFT if rng.random() < 0.5 else model.RIGHT
        left = grow(depth + 1)
        right = grow(depth + 1)
        nodes[my] = Node.internal(feature, threshold, left, right, default)
        return my

    grow(0)
    return model.make_tree(nodes)


def synth_forest(n_trees: int, max_depth: int, num_features: int, seed: int,
                 model_kind: str = model.GRADIENT_BOOSTING,
                 split_prob: float = 0.75) -> Forest:
    """Random forest with depth <= max_depth; reproducible for a fixed seed."""
    if n_trees < 1 or max_depth < 0 or num_features < 1:
        raise ValueError("n_trees, num_features must be positive; max_depth >= 0")
    rng = np.random.default_rng(seed)
    trees = tuple(_synth_tree(rng, max_depth, num_features, split_prob)
                  for _ in range(n_trees))
    return Forest(trees=trees, num_features=num_features, model_kind=model_kind,
                  base_score=0.0)


def synth_samples(rows: int, num_features: int, missing_rate: float,
                  seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(rows, num_features))
    missing = rng.random(size=(rows, num_features)) < missing_rate
    values[missing] = np.nan
    return values, missing


def write_model(forest: Forest, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model.serialize_model(forest))
        fh.write("\n")


def write_csv(path: str, rows: int, num_features: int, missing_rate: float,
              seed: int) -> int:
    """Dense CSV, one sample per line; missing cells hold the token nan."""
    values, missing = synth_samples(rows, num_features, missing_rate, seed)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in range(rows):
            fields = ["nan" if missing[r, c] else repr(float(values[r, c]))
                      for c in range(num_features)]
            fh.write(",".join(fields))
            fh.write("\n")
    return rows


def write_libsvm(path: str, rows: int, num_features: int, sparsity: float,
                 seed: int) -> int:
    """Sparse rows "label idx:value ..." with 1-based ascending indices."""
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for _ in range(rows):
            label = int(rng.integers(0, 2))
            present = rng.random(num_features) >= sparsity
            values = rng.normal(size=num_features)
            pairs = [f"{c + 1}:{float(values[c])!r}" for c in np.flatnonzero(present)]
            fh.write(" ".join([str(label)] + pairs))
            fh.write("\n")
    return rows
