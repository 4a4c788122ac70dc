"""scikit-learn converters: RandomForest (classifier leaves become per-tree
class-1 probabilities so the serving mean matches predict_proba) and classic
GradientBoosting (leaves scaled by the learning rate, init folded into
base_score so the serving sum matches decision_function).

scikit-learn splits with `X <= threshold -> left`, the same tie rule the
serving side uses, so thresholds pass through unchanged. Trees trained on
data with NaN carry per-node missing routing in `missing_go_to_left`.
"""

from __future__ import annotations

import numpy as np

from .errors import UnsupportedModelType
from .interchange import FlatTree, GRADIENT_BOOSTING, RANDOM_FOREST


def _leaf_class1_fraction(value_row: np.ndarray) -> float:
    total = value_row.sum()
    return float(value_row[1] / total) if total else 0.0


_FLOAT_MAX = float(np.finfo(np.float64).max)


def _finite_threshold(threshold: float) -> float:
    # NaN-capable trees use +/-inf thresholds for missing-only splits
    # ("every finite value one way, missing the other"); the interchange
    # format requires finite thresholds, and clamping to the float64 extremes
    # preserves the routing of every finite feature value.
    if threshold == np.inf:
        return _FLOAT_MAX
    if threshold == -np.inf:
        return -_FLOAT_MAX
    return float(threshold)


def _convert_tree(tree, leaf_value, scale: float = 1.0) -> FlatTree:
    left = tree.children_left
    right = tree.children_right
    missing_left = getattr(tree, "missing_go_to_left", None)
    out = FlatTree()

    def visit(i: int) -> int:
        if left[i] == -1:
            return out.add_leaf(scale * leaf_value(i))
        default_left = True if missing_left is None else bool(missing_left[i])
        my = out.add_split(int(tree.feature[i]), _finite_threshold(tree.threshold[i]),
                           default_left)
        out.nodes[my].left = visit(int(left[i]))
        out.nodes[my].right = visit(int(right[i]))
        return my

    visit(0)
    return out


def _check_binary(clf) -> None:
    if getattr(clf, "n_classes_", 2) != 2:
        raise UnsupportedModelType(
            f"only binary classifiers are supported, got {clf.n_classes_} classes")


def convert_sklearn(estimator) -> tuple[list[FlatTree], int, str, float]:
    """Returns (trees, num_features, model_kind, base_score)."""
    name = type(estimator).__name__
    if name == "RandomForestClassifier":
        _check_binary(estimator)
        trees = [_convert_tree(est.tree_,
                               lambda i, t=est.tree_: _leaf_class1_fraction(t.value[i][0]))
                 for est in estimator.estimators_]
        return trees, estimator.n_features_in_, RANDOM_FOREST, 0.0
    if name == "RandomForestRegressor":
        trees = [_convert_tree(est.tree_, lambda i, t=est.tree_: float(t.value[i][0][0]))
                 for est in estimator.estimators_]
        return trees, estimator.n_features_in_, RANDOM_FOREST, 0.0
    if name in ("GradientBoostingClassifier", "GradientBoostingRegressor"):
        if name == "GradientBoostingClassifier":
            _check_binary(estimator)
        if estimator.estimators_.shape[1] != 1:
            raise UnsupportedModelType("multi-output boosting is not supported")
        lr = estimator.learning_rate
        trees = [_convert_tree(stage[0].tree_,
                               lambda i, t=stage[0].tree_: float(t.value[i][0][0]),
                               scale=lr)
                 for stage in estimator.estimators_]
        base = float(estimator._raw_predict_init(
            np.zeros((1, estimator.n_features_in_)))[0, 0])
        return trees, estimator.n_features_in_, GRADIENT_BOOSTING, base
    raise UnsupportedModelType(f"cannot convert {name}")


def sklearn_raw_scores(estimator, samples: np.ndarray) -> np.ndarray:
    """The source-library quantity the serving raw_score must reproduce."""
    name = type(estimator).__name__
    if name == "RandomForestClassifier":
        return estimator.predict_proba(samples)[:, 1]
    if name == "GradientBoostingClassifier":
        return estimator.decision_function(samples)
    if name in ("RandomForestRegressor", "GradientBoostingRegressor"):
        return estimator.predict(samples)
    raise UnsupportedModelType(f"cannot score {name}")
