"""Builds interchange JSON documents from a flat node intermediate form.

The exporter deliberately does not import the serving library: the JSON
document and the serving CLI are the only contract between the two packages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

FORMAT_VERSION = 1

RANDOM_FOREST = "random_forest"
GRADIENT_BOOSTING = "gradient_boosting"


@dataclass
class FlatNode:
    """Either a split (feature/threshold/children/default) or a leaf (value)."""

    is_leaf: bool
    feature: int = 0
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    default_left: bool = True
    value: float = 0.0


@dataclass
class FlatTree:
    nodes: list[FlatNode] = field(default_factory=list)

    def add_leaf(self, value: float) -> int:
        self.nodes.append(FlatNode(is_leaf=True, value=float(value)))
        return len(self.nodes) - 1

    def add_split(self, feature: int, threshold: float, default_left: bool) -> int:
        self.nodes.append(FlatNode(is_leaf=False, feature=int(feature),
                                   threshold=float(threshold),
                                   default_left=bool(default_left)))
        return len(self.nodes) - 1

    def max_depth(self) -> int:
        depth = [0] * len(self.nodes)
        deepest = 0
        for i, node in enumerate(self.nodes):
            if node.is_leaf:
                deepest = max(deepest, depth[i])
            else:
                depth[node.left] = depth[i] + 1
                depth[node.right] = depth[i] + 1
        return deepest


def reindex_preorder(tree: FlatTree) -> FlatTree:
    """Renumber nodes in preorder so children always follow their parent,
    which the interchange format requires."""
    out = FlatTree()

    def visit(i: int) -> int:
        node = tree.nodes[i]
        my = len(out.nodes)
        out.nodes.append(FlatNode(**vars(node)))
        if not node.is_leaf:
            out.nodes[my].left = visit(node.left)
            out.nodes[my].right = visit(node.right)
        return my

    visit(0)
    return out


def document(trees: list[FlatTree], num_features: int, model_kind: str,
             base_score: float) -> str:
    def node_obj(node: FlatNode) -> dict:
        if node.is_leaf:
            return {"kind": "leaf", "value": node.value}
        return {"kind": "internal", "feature": node.feature,
                "threshold": node.threshold, "left": node.left,
                "right": node.right,
                "default": "left" if node.default_left else "right"}

    doc = {
        "format_version": FORMAT_VERSION,
        "model_kind": model_kind,
        "num_features": int(num_features),
        "base_score": float(base_score),
        "trees": [{"nodes": [node_obj(n) for n in t.nodes]} for t in trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))
