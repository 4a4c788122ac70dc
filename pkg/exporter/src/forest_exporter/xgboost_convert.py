"""XGBoost converter, reading the library's JSON model file (save_model with a
.json suffix); the xgboost package itself is only needed for the optional
agreement check.

Dump semantics: arrays per tree; `left_children[i] == -1` marks a leaf, whose
value sits in `split_conditions[i]`; split rule is `x < threshold -> left`
(strict), missing goes left iff `default_left[i]`. Thresholds pass through
unchanged: the serving side tests `<=`, which only differs on exact threshold
hits, a measure-zero event on continuous features (documented limitation).

For `binary:*` objectives the stored base_score is a probability; its
log-odds is the additive margin bias. For regression objectives it is used
as-is.
"""

from __future__ import annotations

import json
import math

from .errors import UnsupportedModelType
from .interchange import FlatTree, GRADIENT_BOOSTING


def convert_xgboost_json(doc: dict) -> tuple[list[FlatTree], int, str, float]:
    try:
        learner = doc["learner"]
        booster = learner["gradient_booster"]
        model = booster["model"]
        raw_trees = model["trees"]
        num_features = int(learner["learner_model_param"]["num_feature"])
        base_score = float(learner["learner_model_param"]["base_score"])
        objective = learner["objective"]["name"]
    except (KeyError, TypeError, ValueError) as exc:
        raise UnsupportedModelType(f"not an xgboost JSON model: {exc}") from exc
    if booster.get("name", "gbtree") != "gbtree":
        raise UnsupportedModelType(f"unsupported booster {booster.get('name')!r}")

    trees = []
    for raw in raw_trees:
        if any(int(t) != 0 for t in raw.get("split_type", [])):
            raise UnsupportedModelType("categorical splits are not supported")
        left = raw["left_children"]
        right = raw["right_children"]
        feature = raw["split_indices"]
        condition = raw["split_conditions"]
        default_left = raw["default_left"]
        out = FlatTree()

        def visit(i: int) -> int:
            if left[i] == -1:
                return out.add_leaf(float(condition[i]))
            my = out.add_split(int(feature[i]), float(condition[i]),
                               bool(int(default_left[i])))
            out.nodes[my].left = visit(int(left[i]))
            out.nodes[my].right = visit(int(right[i]))
            return my

        visit(0)
        trees.append(out)

    if objective.startswith("binary:"):
        base = math.log(base_score / (1.0 - base_score))
    else:
        base = base_score
    return trees, num_features, GRADIENT_BOOSTING, base


def load_xgboost_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise UnsupportedModelType(
                f"{path}: expected xgboost JSON (save_model to a .json path): {exc}"
            ) from exc


def xgboost_raw_scores(path: str, samples):
    """Margin predictions from the live library; requires xgboost installed."""
    import xgboost  # deferred: optional dependency

    booster = xgboost.Booster()
    booster.load_model(path)
    return booster.predict(xgboost.DMatrix(samples), output_margin=True)
