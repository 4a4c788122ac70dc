"""Root-to-leaf traversal engines: naive (branch on the original layout) and
predicated (branch-free index arithmetic on a sibling-adjacent relayout).

Both engines process blocks level-synchronously across all rows; the per-tree
contribution order is ascending tree index, so raw scores are bitwise equal to
the reference predictor's.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .. import model
from ..blocks import PredictionBlock, SampleBlock, sigmoid_block
from ..errors import DimensionMismatch
from ..model import Forest, Prediction, Tree


def _check_block(forest: Forest, block: SampleBlock) -> None:
    if block.num_features != forest.num_features:
        raise DimensionMismatch(
            f"block has {block.num_features} features, model expects {forest.num_features}")


class _EngineBase:
    """Shared aggregation: leaf sums -> raw scores -> probabilities."""

    name = "base"

    def __init__(self, forest: Forest):
        self.forest = forest

    def leaf_sum_block(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_block(self, block: SampleBlock) -> PredictionBlock:
        _check_block(self.forest, block)
        sums = self.leaf_sum_block(block.values, block.missing)
        raw = model.finalize_raw(sums, self.forest.n_trees,
                                 self.forest.model_kind, self.forest.base_score)
        return PredictionBlock(block_id=block.block_id, row_offset=block.row_offset,
                               raw_score=raw, probability=sigmoid_block(raw))

    def predict(self, values, missing=None) -> Prediction:
        raise NotImplementedError


@dataclass
class _TreeArrays:
    """Original-layout tree flattened to parallel numpy arrays."""

    feature: np.ndarray  # int64, 0 for leaves
    threshold: np.ndarray  # float64, +inf for leaves
    left: np.ndarray  # int64, self-index for leaves
    right: np.ndarray  # int64, self-index for leaves
    is_leaf: np.ndarray  # bool
    value: np.ndarray  # float64, 0.0 for internal nodes
    default_right: np.ndarray  # bool, False for leaves
    depth: int

    @staticmethod
    def from_tree(tree: Tree) -> "_TreeArrays":
        n = len(tree.nodes)
        feature = np.zeros(n, dtype=np.int64)
        threshold = np.full(n, np.inf, dtype=np.float64)
        left = np.arange(n, dtype=np.int64)
        right = np.arange(n, dtype=np.int64)
        is_leaf = np.zeros(n, dtype=bool)
        value = np.zeros(n, dtype=np.float64)
        default_right = np.zeros(n, dtype=bool)
        for i, node in enumerate(tree.nodes):
            if node.is_leaf:
                is_leaf[i] = True
                value[i] = node.leaf_value
            else:
                feature[i] = node.feature_index
                threshold[i] = node.threshold
                left[i] = node.left_child
                right[i] = node.right_child
                default_right[i] = node.default_branch == model.RIGHT
        return _TreeArrays(feature, threshold, left, right, is_leaf, value,
                           default_right, model.tree_depth(tree))


class NaiveEngine(_EngineBase):
    """Per-node branch selection on the model's original node layout."""

    name = "naive"

    def __init__(self, forest: Forest):
        super().__init__(forest)
        self._trees = [_TreeArrays.from_tree(t) for t in forest.trees]

    def predict(self, values, missing=None) -> Prediction:
        return model.predict_naive(self.forest, values, missing)

    def leaf_sum_block(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        n_rows = values.shape[0]
        rows = np.arange(n_rows)
        acc = np.zeros(n_rows, dtype=np.float64)
        for t in self._trees:
            idx = np.zeros(n_rows, dtype=np.int64)
            for _ in range(t.depth):
                f = t.feature[idx]
                x = values[rows, f]
                m = missing[rows, f]
                go_left = np.where(m, ~t.default_right[idx], x <= t.threshold[idx])
                step = np.where(go_left, t.left[idx], t.right[idx])
                idx = np.where(t.is_leaf[idx], idx, step)
            acc += t.value[idx]
        return acc


@dataclass
class PredicatedTree:
    """Sibling-adjacent packed layout: the right child is always left_child + 1,
    so descent is index = left_child[index] + cond with no data-dependent branch.

    Leaf slots are self-loops: left_child points at the leaf itself, threshold
    is +inf and default_is_right is False, so cond is always 0 there.
    """

    feature_index: np.ndarray  # int64
    threshold: np.ndarray  # float64
    left_child: np.ndarray  # int64
    is_leaf: np.ndarray  # bool
    leaf_value: np.ndarray  # float64
    default_is_right: np.ndarray  # bool
    depth: int

    def __len__(self) -> int:
        return len(self.is_leaf)


def lower_predicated(forest: Forest) -> list[PredicatedTree]:
    """Renumber every tree breadth-first so both children of a node land on
    consecutive indices, then pack the fields into parallel arrays."""
    out = []
    for tree in forest.trees:
        order: list[int] = []
        queue = deque([0])
        while queue:
            i = queue.popleft()
            order.append(i)
            node = tree.nodes[i]
            if not node.is_leaf:
                # enqueued back-to-back, hence dequeued and numbered adjacently
                queue.append(node.left_child)
                queue.append(node.right_child)
        new_index = {old: new for new, old in enumerate(order)}
        n = len(order)
        pt = PredicatedTree(
            feature_index=np.zeros(n, dtype=np.int64),
            threshold=np.full(n, np.inf, dtype=np.float64),
            left_child=np.arange(n, dtype=np.int64),
            is_leaf=np.zeros(n, dtype=bool),
            leaf_value=np.zeros(n, dtype=np.float64),
            default_is_right=np.zeros(n, dtype=bool),
            depth=model.tree_depth(tree),
        )
        for old in order:
            new = new_index[old]
            node = tree.nodes[old]
            if node.is_leaf:
                pt.is_leaf[new] = True
                pt.leaf_value[new] = node.leaf_value
            else:
                pt.feature_index[new] = node.feature_index
                pt.threshold[new] = node.threshold
                pt.left_child[new] = new_index[node.left_child]
                pt.default_is_right[new] = node.default_branch == model.RIGHT
                assert new_index[node.right_child] == new_index[node.left_child] + 1
        out.append(pt)
    return out


class PredicatedEngine(_EngineBase):
    """Branch-free descent over the sibling-adjacent layout."""

    name = "predicated"

    def __init__(self, forest: Forest):
        super().__init__(forest)
        self._trees = lower_predicated(forest)

    def predict(self, values, missing=None) -> Prediction:
        model._check_sample(self.forest, values, missing)
        acc = 0.0
        for t in self._trees:
            i = 0
            for _ in range(t.depth):
                f = t.feature_index[i]
                m = missing is not None and bool(missing[f])
                cond = (t.default_is_right[i] if m
                        else values[f] > t.threshold[i])
                i = int(t.left_child[i]) + int(cond)
            acc += float(t.leaf_value[i])
        raw = model.finalize_raw(acc, self.forest.n_trees,
                                 self.forest.model_kind, self.forest.base_score)
        return Prediction(raw_score=raw, probability=model.sigmoid(raw))

    def leaf_sum_block(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        n_rows = values.shape[0]
        rows = np.arange(n_rows)
        acc = np.zeros(n_rows, dtype=np.float64)
        for t in self._trees:
            idx = np.zeros(n_rows, dtype=np.int64)
            for _ in range(t.depth):
                f = t.feature_index[idx]
                x = values[rows, f]
                m = missing[rows, f]
                cond = np.where(m, t.default_is_right[idx], x > t.threshold[idx])
                idx = t.left_child[idx] + cond
            acc += t.leaf_value[idx]
        return acc


def predict_block(engine: _EngineBase, block: SampleBlock) -> PredictionBlock:
    """Run any engine over a whole block; row i equals the single-sample result."""
    return engine.predict_block(block)
