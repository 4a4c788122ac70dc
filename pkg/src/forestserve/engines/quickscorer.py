"""Bit-vector scoring: per-feature threshold-sorted node entries whose masks
knock out the leaves made unreachable by each failed node test.

Every tree's leaves map onto one 64-bit word, leaf 0 (leftmost) at the most
significant bit; unused low bits stay 1 so they are neutral under AND. A node
test fails (the node is FALSE) exactly when value > threshold, found by binary
search within the feature group; ANDing all FALSE masks leaves the exit leaf
as the most significant surviving bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import model
from ..blocks import PredictionBlock, SampleBlock, sigmoid_block
from ..errors import DimensionMismatch, MissingValueUnsupported, TooManyLeaves
from ..model import Forest, Prediction

ALL_ONES = (1 << 64) - 1
MAX_LEAVES = 64


@dataclass(frozen=True)
class QSNodeEntry:
    tree_index: int
    threshold: float
    mask: int  # 64-bit; 0 exactly at the left-subtree leaves of this node


@dataclass
class _FeatureGroup:
    thresholds: list[float] = field(default_factory=list)
    tree_index: list[int] = field(default_factory=list)
    masks: list[int] = field(default_factory=list)

    def entries(self) -> list[QSNodeEntry]:
        return [QSNodeEntry(t, th, m)
                for t, th, m in zip(self.tree_index, self.thresholds, self.masks)]


@dataclass
class QuickScorerModel:
    groups: list[_FeatureGroup]  # indexed by feature
    leaf_values: list[np.ndarray]  # per tree, leaf values left-to-right
    num_features: int
    num_trees: int
    model_kind: str
    base_score: float

    def score(self, values, missing=None) -> Prediction:
        raw = self.score_block(np.asarray(values, dtype=np.float64).reshape(1, -1),
                               None if missing is None
                               else np.asarray(missing, dtype=bool).reshape(1, -1))[0]
        raw = float(raw)
        return Prediction(raw_score=raw, probability=model.sigmoid(raw))

    def score_block(self, values: np.ndarray, missing: np.ndarray | None) -> np.ndarray:
        """Raw scores for a dense block; rejects any missing entry."""
        if values.shape[1] != self.num_features:
            raise DimensionMismatch(
                f"block has {values.shape[1]} features, model expects {self.num_features}")
        if missing is not None and missing.any():
            raise MissingValueUnsupported(
                "bit-vector scoring has no default-branch path; provide dense inputs")
        n_rows = values.shape[0]
        # first index whose threshold >= value: entries before it are FALSE
        cuts = np.empty((n_rows, self.num_features), dtype=np.int64)
        for f, group in enumerate(self.groups):
            if group.thresholds:
                cuts[:, f] = np.searchsorted(group.thresholds, values[:, f], side="left")
            else:
                cuts[:, f] = 0
        raw = np.zeros(n_rows, dtype=np.float64)
        nonempty = [(f, g) for f, g in enumerate(self.groups) if g.thresholds]
        for r in range(n_rows):
            result = [ALL_ONES] * self.num_trees
            for f, group in nonempty:
                tree_index = group.tree_index
                masks = group.masks
                for j in range(cuts[r, f]):
                    result[tree_index[j]] &= masks[j]
            acc = 0.0
            for t in range(self.num_trees):
                leaf = 64 - result[t].bit_length()
                acc += self.leaf_values[t][leaf]
            raw[r] = model.finalize_raw(acc, self.num_trees, self.model_kind,
                                        self.base_score)
        return raw


def lower_quickscorer(forest: Forest) -> QuickScorerModel:
    """Group all internal nodes by feature, sorted ascending by threshold, with
    a leaf mask per node that clears its left-subtree leaves."""
    groups = [_FeatureGroup() for _ in range(forest.num_features)]
    leaf_values: list[np.ndarray] = []
    staged: list[tuple[float, int, int, int]] = []  # threshold, feature, tree, mask
    for t, tree in enumerate(forest.trees):
        order = model.leaves_inorder(tree)
        if len(order) > MAX_LEAVES:
            raise TooManyLeaves(t, len(order))
        position = {node_idx: pos for pos, node_idx in enumerate(order)}
        leaf_values.append(np.array([tree.nodes[i].leaf_value for i in order],
                                    dtype=np.float64))
        for i, node in enumerate(tree.nodes):
            if node.is_leaf:
                continue
            mask = ALL_ONES
            for j in model.iter_subtree(tree, node.left_child):
                if tree.nodes[j].is_leaf:
                    mask &= ~(1 << (63 - position[j]))
            staged.append((node.threshold, node.feature_index, t, mask))
    staged.sort(key=lambda e: e[0])
    for threshold, f, t, mask in staged:
        groups[f].thresholds.append(threshold)
        groups[f].tree_index.append(t)
        groups[f].masks.append(mask)
    return QuickScorerModel(groups=groups, leaf_values=leaf_values,
                            num_features=forest.num_features, num_trees=forest.n_trees,
                            model_kind=forest.model_kind, base_score=forest.base_score)


def score(qs_model: QuickScorerModel, values, missing=None) -> Prediction:
    return qs_model.score(values, missing)


class QuickScorerEngine:
    """Engine facade over the lowered bit-vector model (dense inputs only)."""

    name = "quickscorer"

    def __init__(self, forest: Forest):
        self.forest = forest
        self.model = lower_quickscorer(forest)
        # same tables, neutral aggregation: score_block then returns plain sums
        self._sums = QuickScorerModel(self.model.groups, self.model.leaf_values,
                                      self.model.num_features, self.model.num_trees,
                                      model.GRADIENT_BOOSTING, 0.0)

    def predict(self, values, missing=None) -> Prediction:
        if len(values) != self.forest.num_features:
            raise DimensionMismatch(
                f"sample has {len(values)} features, model expects {self.forest.num_features}")
        if missing is not None and any(missing):
            raise MissingValueUnsupported(
                "bit-vector scoring has no default-branch path; provide dense inputs")
        return self.model.score(values)

    def leaf_sum_block(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        if missing is not None and missing.any():
            raise MissingValueUnsupported(
                "bit-vector scoring has no default-branch path; provide dense inputs")
        return self._sums.score_block(values, None)

    def predict_block(self, block: SampleBlock) -> PredictionBlock:
        if block.num_features != self.forest.num_features:
            raise DimensionMismatch(
                f"block has {block.num_features} features, model expects {self.forest.num_features}")
        sums = self.leaf_sum_block(block.values, block.missing)
        raw = model.finalize_raw(sums, self.forest.n_trees, self.forest.model_kind,
                                 self.forest.base_score)
        return PredictionBlock(block_id=block.block_id, row_offset=block.row_offset,
                               raw_score=raw, probability=sigmoid_block(raw))
