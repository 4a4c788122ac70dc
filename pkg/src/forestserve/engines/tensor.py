"""Matrix-product lowering of tree traversal.

Per tree: for a block X, S = X @ A gathers each node's tested feature value,
P = (S <= B) marks passed tests, Q = P @ C counts signed left/right-subtree
ancestry per leaf, and a leaf is the exit leaf exactly when Q equals D, its
left-ancestor count. H one-hot-selects it and H @ E yields the contribution.
All comparisons use <= so ties go left, matching the reference predictor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import model
from ..blocks import PredictionBlock, SampleBlock, sigmoid_block
from ..errors import DimensionMismatch, MissingValueUnsupported
from ..model import Forest, Prediction


@dataclass
class TreeTensors:
    A: np.ndarray  # (num_features, n_internal) one-hot feature selectors
    B: np.ndarray  # (n_internal,) thresholds
    C: np.ndarray  # (n_internal, n_leaves) +1 left subtree, -1 right subtree
    D: np.ndarray  # (n_leaves,) left-ancestor counts
    E: np.ndarray  # (n_leaves,) leaf values


@dataclass
class TensorModel:
    trees: list[TreeTensors]
    num_features: int
    model_kind: str
    base_score: float

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def lower_tensor(forest: Forest) -> TensorModel:
    lowered = []
    for tree in forest.trees:
        internal = [i for i, n in enumerate(tree.nodes) if not n.is_leaf]
        leaves = model.leaves_inorder(tree)
        col_of = {node: j for j, node in enumerate(internal)}
        leaf_col = {node: j for j, node in enumerate(leaves)}
        nf, ni, nl = forest.num_features, len(internal), len(leaves)
        A = np.zeros((nf, ni), dtype=np.float64)
        B = np.zeros(ni, dtype=np.float64)
        C = np.zeros((ni, nl), dtype=np.float64)
        D = np.zeros(nl, dtype=np.float64)
        E = np.array([tree.nodes[i].leaf_value for i in leaves], dtype=np.float64)
        for i in internal:
            node = tree.nodes[i]
            j = col_of[i]
            A[node.feature_index, j] = 1.0
            B[j] = node.threshold
            for sub in model.iter_subtree(tree, node.left_child):
                if tree.nodes[sub].is_leaf:
                    C[j, leaf_col[sub]] = 1.0
                    D[leaf_col[sub]] += 1.0
            for sub in model.iter_subtree(tree, node.right_child):
                if tree.nodes[sub].is_leaf:
                    C[j, leaf_col[sub]] = -1.0
        tensors = TreeTensors(A, B, C, D, E)
        _check_shapes(tensors)
        lowered.append(tensors)
    return TensorModel(trees=lowered, num_features=forest.num_features,
                       model_kind=forest.model_kind, base_score=forest.base_score)


def _check_shapes(t: TreeTensors) -> None:
    nf, ni = t.A.shape
    ni2, nl = t.C.shape
    assert ni == ni2 and t.B.shape == (ni,) and t.D.shape == (nl,) and t.E.shape == (nl,)
    if ni:
        assert (t.A.sum(axis=0) == 1.0).all(), "each internal node tests exactly one feature"
    assert (np.maximum(t.C, 0.0).sum(axis=0) == t.D).all(), \
        "left-ancestor counts must match C's positive column sums"


def _leaf_sums(tensor_model: TensorModel, X: np.ndarray) -> np.ndarray:
    acc = np.zeros(X.shape[0], dtype=np.float64)
    for t in tensor_model.trees:
        if t.B.shape[0] == 0:  # single-leaf tree: no tests, everyone exits leaf 0
            acc += t.E[0]
            continue
        S = X @ t.A
        P = (S <= t.B).astype(np.float64)
        Q = P @ t.C
        H = (Q == t.D)
        ok = H.sum(axis=1)
        if not (ok == 1).all():
            bad = int(np.flatnonzero(ok != 1)[0])
            raise AssertionError(f"row {bad}: expected exactly one exit leaf, got {int(ok[bad])}")
        acc += H.astype(np.float64) @ t.E
    return acc


def predict_tensor(tensor_model: TensorModel, block: SampleBlock) -> PredictionBlock:
    """Blockwise matrix-product prediction; dense inputs only."""
    if block.num_features != tensor_model.num_features:
        raise DimensionMismatch(
            f"block has {block.num_features} features, model expects {tensor_model.num_features}")
    if block.has_missing:
        raise MissingValueUnsupported(
            "matrix lowering has no default-branch path; provide dense inputs")
    sums = _leaf_sums(tensor_model, block.values)
    raw = model.finalize_raw(sums, tensor_model.n_trees, tensor_model.model_kind,
                             tensor_model.base_score)
    return PredictionBlock(block_id=block.block_id, row_offset=block.row_offset,
                           raw_score=raw, probability=sigmoid_block(raw))


class TensorEngine:
    name = "tensor"

    def __init__(self, forest: Forest):
        self.forest = forest
        self.model = lower_tensor(forest)

    def predict(self, values, missing=None) -> Prediction:
        if len(values) != self.forest.num_features:
            raise DimensionMismatch(
                f"sample has {len(values)} features, model expects {self.forest.num_features}")
        if missing is not None and any(missing):
            raise MissingValueUnsupported(
                "matrix lowering has no default-branch path; provide dense inputs")
        X = np.asarray(values, dtype=np.float64).reshape(1, -1)
        raw = float(model.finalize_raw(_leaf_sums(self.model, X),
                                       self.model.n_trees, self.forest.model_kind,
                                       self.forest.base_score)[0])
        return Prediction(raw_score=raw, probability=model.sigmoid(raw))

    def leaf_sum_block(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        if missing is not None and missing.any():
            raise MissingValueUnsupported(
                "matrix lowering has no default-branch path; provide dense inputs")
        return _leaf_sums(self.model, values)

    def predict_block(self, block: SampleBlock) -> PredictionBlock:
        return predict_tensor(self.model, block)
