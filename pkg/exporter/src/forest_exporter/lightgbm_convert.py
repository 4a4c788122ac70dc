"""LightGBM converter, reading `Booster.dump_model()` JSON; the lightgbm
package itself is only needed for the optional agreement check.

Dump semantics: nested `tree_structure` per tree; numerical splits use
decision_type "<=" with ties going left, identical to the serving rule, so
thresholds and tie behavior carry over exactly. NaN inputs follow
`default_left` (exact for missing_type "NaN"; for "None"/"Zero" the library
substitutes zero for missing, which a NaN-free densified pipeline never
triggers). Leaf values already include shrinkage; raw prediction is their
plain sum, so base_score is 0.
"""

from __future__ import annotations

import json

from .errors import UnsupportedModelType
from .interchange import FlatTree, GRADIENT_BOOSTING


def _convert_node(node: dict, out: FlatTree) -> int:
    if "leaf_value" in node and "split_feature" not in node:
        return out.add_leaf(float(node["leaf_value"]))
    decision = node.get("decision_type")
    if decision != "<=":
        raise UnsupportedModelType(
            f"unsupported decision_type {decision!r} (categorical splits?)")
    my = out.add_split(int(node["split_feature"]), float(node["threshold"]),
                       bool(node.get("default_left", True)))
    out.nodes[my].left = _convert_node(node["left_child"], out)
    out.nodes[my].right = _convert_node(node["right_child"], out)
    return my


def convert_lightgbm_json(doc: dict) -> tuple[list[FlatTree], int, str, float]:
    try:
        num_features = int(doc["max_feature_idx"]) + 1
        raw_trees = doc["tree_info"]
    except (KeyError, TypeError, ValueError) as exc:
        raise UnsupportedModelType(f"not a lightgbm dump_model JSON: {exc}") from exc
    if doc.get("num_tree_per_iteration", 1) != 1:
        raise UnsupportedModelType("multiclass boosters are not supported")
    trees = []
    for raw in raw_trees:
        out = FlatTree()
        _convert_node(raw["tree_structure"], out)
        trees.append(out)
    return trees, num_features, GRADIENT_BOOSTING, 0.0


def load_lightgbm_file(path: str) -> dict:
    """Accepts either dump_model() JSON or, when the lightgbm package is
    importable, the text model written by Booster.save_model()."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        import lightgbm
    except ImportError:
        raise UnsupportedModelType(
            f"{path}: not dump_model() JSON, and the lightgbm package is not "
            f"available to read a text model") from None
    return lightgbm.Booster(model_file=path).dump_model()


def lightgbm_raw_scores(path: str, samples):
    """Raw-score predictions from the live library; requires lightgbm installed."""
    import lightgbm  # deferred: optional dependency

    booster = lightgbm.Booster(model_file=path)
    return booster.predict(samples, raw_score=True)
