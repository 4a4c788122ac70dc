"""Naive and predicated engines: lowering, block prediction, oracle equivalence."""

import collections

import numpy as np
import pytest

from forestserve import model
from forestserve.blocks import SampleBlock
from forestserve.engines.traversal import (
    NaiveEngine,
    PredicatedEngine,
    lower_predicated,
    predict_block,
)
from forestserve.errors import DimensionMismatch
from forestserve.model import Forest, Node

from conftest import make_block, make_forest, make_samples


def leaf_forest(value=0.0, num_features=1):
    return Forest(trees=(model.make_tree([Node.leaf(value)]),),
                  num_features=num_features, model_kind=model.GRADIENT_BOOSTING)


class TestLowerPredicated:
    def test_single_leaf(self):
        [pt] = lower_predicated(leaf_forest(0.7))
        assert len(pt) == 1 and bool(pt.is_leaf[0])

    def test_complete_depth2_tree_is_adjacent(self):
        from conftest import complete_tree
        forest = Forest(trees=(complete_tree(2, 3, seed=5),), num_features=3,
                        model_kind=model.GRADIENT_BOOSTING)
        [pt] = lower_predicated(forest)
        assert len(pt) == 7
        for i in range(7):
            if not pt.is_leaf[i]:
                # right child is implicit: left + 1
                assert pt.left_child[i] + 1 < 7

    def test_exit_leaves_match_naive_on_random_tree(self):
        forest = make_forest(31, max_depth=8, n_trees=1)
        engine = PredicatedEngine(forest)
        values, missing = make_samples(32, 1000, forest.num_features)
        got = engine.leaf_sum_block(values, missing)
        want = NaiveEngine(forest).leaf_sum_block(values, missing)
        assert (got == want).all()

    @pytest.mark.parametrize("seed", range(10))
    def test_preserves_leaf_value_multiset(self, seed):
        forest = make_forest(seed)
        lowered = lower_predicated(forest)
        for tree, pt in zip(forest.trees, lowered):
            original = collections.Counter(n.leaf_value for n in tree.nodes if n.is_leaf)
            relaid = collections.Counter(pt.leaf_value[pt.is_leaf].tolist())
            assert original == relaid


class TestPredictPredicated:
    def test_zero_leaves_probability_half(self):
        engine = PredicatedEngine(leaf_forest(0.0))
        assert engine.predict([3.0]).probability == 0.5

    def test_hand_traced(self, two_tree_forest):
        assert PredicatedEngine(two_tree_forest).predict([1.0]).raw_score == 0.8

    def test_missing_default_right(self, default_right_tree_forest):
        engine = PredicatedEngine(default_right_tree_forest)
        got = engine.predict([float("nan")], [True]).raw_score
        want = model.predict_naive(default_right_tree_forest,
                                   [float("nan")], [True]).raw_score
        assert got == want == 2.0

    def test_dimension_mismatch(self, two_tree_forest):
        with pytest.raises(DimensionMismatch):
            PredicatedEngine(two_tree_forest).predict([1.0, 2.0])


class TestPredictBlock:
    def test_empty_block(self, two_tree_forest):
        block = SampleBlock(0, 0, np.empty((0, 1)), np.empty((0, 1), bool))
        for engine in (NaiveEngine(two_tree_forest), PredicatedEngine(two_tree_forest)):
            out = predict_block(engine, block)
            assert out.n_rows == 0

    def test_identical_rows_identical_predictions(self, two_tree_forest):
        block = SampleBlock(0, 0, np.full((3, 1), 0.25), np.zeros((3, 1), bool))
        out = NaiveEngine(two_tree_forest).predict_block(block)
        assert len(set(out.raw_score.tolist())) == 1

    @pytest.mark.parametrize("engine_cls", [NaiveEngine, PredicatedEngine])
    def test_block_bitwise_equals_single_sample_calls(self, engine_cls):
        forest = make_forest(77)
        engine = engine_cls(forest)
        block = make_block(78, 256, forest.num_features, missing_rate=0.1)
        out = engine.predict_block(block)
        for r in range(256):
            single = engine.predict(block.values[r], block.missing[r])
            assert out.raw_score[r] == single.raw_score

    def test_width_mismatch(self, two_tree_forest):
        block = make_block(1, 4, 3)
        with pytest.raises(DimensionMismatch):
            NaiveEngine(two_tree_forest).predict_block(block)


class TestEngineEquivalence:
    @pytest.mark.parametrize("seed", range(100))
    def test_predicated_bitwise_equals_naive(self, seed):
        forest = make_forest(seed)
        missing_rate = 0.1 if seed % 2 else 0.0
        block = make_block(seed + 500, 100, forest.num_features, missing_rate)
        naive = NaiveEngine(forest).predict_block(block)
        pred = PredicatedEngine(forest).predict_block(block)
        assert (naive.raw_score == pred.raw_score).all()
