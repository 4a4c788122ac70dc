"""Shared builders for randomized sweeps and hand-built trees."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from forestserve import model, synth
from forestserve.blocks import SampleBlock
from forestserve.model import Forest, Node


def make_forest(seed: int, max_depth: int = 8, n_trees: int | None = None,
                num_features: int | None = None, kind: str | None = None) -> Forest:
    """Random forest with seed-derived shape: 1-64 trees, dyadic leaf values,
    random default branches, both model kinds."""
    rng = np.random.default_rng(seed)
    n_trees = n_trees if n_trees is not None else int(rng.integers(1, 65))
    num_features = num_features if num_features is not None else int(rng.integers(2, 24))
    if kind is None:
        kind = model.RANDOM_FOREST if rng.random() < 0.5 else model.GRADIENT_BOOSTING
    forest = synth.synth_forest(n_trees, max_depth, num_features,
                                seed=seed + 10_000, model_kind=kind)
    if kind == model.GRADIENT_BOOSTING and rng.random() < 0.5:
        base = int(rng.integers(-(1 << 20), 1 << 20)) * synth.LEAF_GRID
        forest = dataclasses.replace(forest, base_score=base)
    return forest


def make_samples(seed: int, rows: int, num_features: int,
                 missing_rate: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    return synth.synth_samples(rows, num_features, missing_rate, seed)


def make_block(seed: int, rows: int, num_features: int,
               missing_rate: float = 0.0) -> SampleBlock:
    values, missing = make_samples(seed, rows, num_features, missing_rate)
    return SampleBlock(0, 0, values, missing)


def complete_tree(depth: int, num_features: int, seed: int = 0) -> model.Tree:
    """Fully balanced tree of the given depth with distinct dyadic leaf values."""
    rng = np.random.default_rng(seed)
    nodes: list[Node] = []
    counter = [0]

    def grow(d: int) -> int:
        my = len(nodes)
        nodes.append(Node.leaf(0.0))
        if d == depth:
            counter[0] += 1
            nodes[my] = Node.leaf(counter[0] * synth.LEAF_GRID * 16)
            return my
        left = grow(d + 1)
        right = grow(d + 1)
        nodes[my] = Node.internal(int(rng.integers(num_features)), float(rng.normal()),
                                  left, right,
                                  model.LEFT if rng.random() < 0.5 else model.RIGHT)
        return my

    grow(0)
    return model.make_tree(nodes)


def brute_force_raw(forest: Forest, values, missing=None) -> float:
    """Independent oracle: per tree, enumerate every root-to-leaf path and pick
    the unique one whose constraints the sample satisfies."""

    def paths(tree, i, constraints):
        node = tree.nodes[i]
        if node.is_leaf:
            yield constraints, node.leaf_value
            return
        yield from paths(tree, node.left_child,
                         constraints + [(node.feature_index, node.threshold,
                                         "left", node.default_branch)])
        yield from paths(tree, node.right_child,
                         constraints + [(node.feature_index, node.threshold,
                                         "right", node.default_branch)])

    def satisfied(constraints):
        for f, thr, direction, default in constraints:
            if missing is not None and missing[f]:
                took = default
            else:
                took = "left" if values[f] <= thr else "right"
            if took != direction:
                return False
        return True

    acc = 0.0
    for tree in forest.trees:
        matches = [value for constraints, value in paths(tree, 0, [])
                   if satisfied(constraints)]
        assert len(matches) == 1, "exactly one root-to-leaf path must match"
        acc += matches[0]
    return model.finalize_raw(acc, forest.n_trees, forest.model_kind, forest.base_score)


@pytest.fixture
def two_tree_forest() -> Forest:
    """T1: f0 <= 1.0 -> 0.3 else -0.2; T2: leaf 0.5 (boosting, base 0)."""
    t1 = model.make_tree([Node.internal(0, 1.0, 1, 2, model.LEFT),
                          Node.leaf(0.3), Node.leaf(-0.2)])
    t2 = model.make_tree([Node.leaf(0.5)])
    return Forest(trees=(t1, t2), num_features=1,
                  model_kind=model.GRADIENT_BOOSTING, base_score=0.0)


@pytest.fixture
def default_right_tree_forest() -> Forest:
    """f0 <= 0.5 -> 1.0 else 2.0, with the missing default on the right."""
    tree = model.make_tree([Node.internal(0, 0.5, 1, 2, model.RIGHT),
                            Node.leaf(1.0), Node.leaf(2.0)])
    return Forest(trees=(tree,), num_features=1,
                  model_kind=model.GRADIENT_BOOSTING, base_score=0.0)
