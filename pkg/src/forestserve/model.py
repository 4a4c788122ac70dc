"""Forest intermediate representation, JSON interchange, validation, and the
reference tree-walk predictor every other engine is checked against.

Conventions pinned here and honored by all engines:

* a sample goes LEFT iff value <= threshold (ties left);
* a missing feature follows the node's default branch;
* random_forest aggregates by mean of exit-leaf values, gradient_boosting by
  base_score + sum, in ascending tree order starting from 0.0;
* probability = sigmoid(raw score).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import (
    DimensionMismatch,
    InvariantViolation,
    MalformedDocument,
    SchemaViolation,
)

LEFT = "left"
RIGHT = "right"

RANDOM_FOREST = "random_forest"
GRADIENT_BOOSTING = "gradient_boosting"
MODEL_KINDS = (RANDOM_FOREST, GRADIENT_BOOSTING)

DEFAULT_MAX_DEPTH = 8

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Node:
    """One tree node in the flat, forward-only layout (children after parent)."""

    kind: str  # "internal" | "leaf"
    feature_index: int = 0
    threshold: float = 0.0
    left_child: int = 0
    right_child: int = 0
    default_branch: str = LEFT
    leaf_value: float = 0.0

    @staticmethod
    def leaf(value: float) -> "Node":
        return Node(kind="leaf", leaf_value=float(value))

    @staticmethod
    def internal(feature: int, threshold: float, left: int, right: int,
                 default: str = LEFT) -> "Node":
        return Node(kind="internal", feature_index=feature, threshold=float(threshold),
                    left_child=left, right_child=right, default_branch=default)

    @property
    def is_leaf(self) -> bool:
        return self.kind == "leaf"


@dataclass(frozen=True)
class Tree:
    nodes: tuple[Node, ...]
    # True iff right_child == left_child + 1 for every internal node.
    # Always recomputed from the nodes, never trusted from input.
    sibling_adjacent: bool = False

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]
    num_features: int
    model_kind: str
    base_score: float = 0.0

    @property
    def n_trees(self) -> int:
        return len(self.trees)


@dataclass(frozen=True)
class Prediction:
    raw_score: float
    probability: float


@dataclass(frozen=True)
class Violation:
    """One broken invariant; violations are data, not exceptions."""

    rule: str
    tree_index: int | None = None
    node_index: int | None = None
    detail: str = ""

    def __str__(self) -> str:
        where = ""
        if self.tree_index is not None:
            where = f"@tree{self.tree_index}"
            if self.node_index is not None:
                where += f"/node{self.node_index}"
        msg = f"{self.rule}{where}"
        if self.detail:
            msg += f" ({self.detail})"
        return msg


def sigmoid(x: float) -> float:
    """1 / (1 + exp(-x)), evaluated so exp only ever sees a non-positive argument."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def compute_sibling_adjacent(nodes: Sequence[Node]) -> bool:
    return all(n.is_leaf or n.right_child == n.left_child + 1 for n in nodes)


def make_tree(nodes: Sequence[Node]) -> Tree:
    nodes = tuple(nodes)
    return Tree(nodes=nodes, sibling_adjacent=compute_sibling_adjacent(nodes))


def tree_depth(tree: Tree) -> int:
    """Max root-to-leaf edge count; 0 for a single-leaf tree."""
    depth = [0] * len(tree.nodes)
    deepest = 0
    for i, node in enumerate(tree.nodes):
        if node.is_leaf:
            deepest = max(deepest, depth[i])
        else:
            # forward-only layout: children always come after their parent
            depth[node.left_child] = depth[i] + 1
            depth[node.right_child] = depth[i] + 1
    return deepest


def leaves_inorder(tree: Tree) -> list[int]:
    """Leaf node indices in left-to-right traversal order."""
    order: list[int] = []
    stack = [0]
    while stack:
        i = stack.pop()
        node = tree.nodes[i]
        if node.is_leaf:
            order.append(i)
        else:
            stack.append(node.right_child)
            stack.append(node.left_child)
    return order


def iter_subtree(tree: Tree, root: int) -> Iterator[int]:
    stack = [root]
    while stack:
        i = stack.pop()
        yield i
        node = tree.nodes[i]
        if not node.is_leaf:
            stack.append(node.right_child)
            stack.append(node.left_child)


def validate(forest: Forest, max_depth: int = DEFAULT_MAX_DEPTH) -> list[Violation]:
    """Check every IR invariant; returns an empty list iff the forest is valid."""
    out: list[Violation] = []
    if not forest.trees:
        out.append(Violation("EmptyForest"))
    if forest.num_features <= 0:
        out.append(Violation("NonPositiveFeatureCount"))
    if forest.model_kind not in MODEL_KINDS:
        out.append(Violation("UnknownModelKind", detail=forest.model_kind))
    if not math.isfinite(forest.base_score):
        out.append(Violation("BaseScoreNotFinite"))
    if forest.model_kind == RANDOM_FOREST and forest.base_score != 0.0:
        out.append(Violation("RandomForestBaseScore", detail="base_score must be 0.0"))

    for t, tree in enumerate(forest.trees):
        n = len(tree.nodes)
        if n == 0:
            out.append(Violation("EmptyTree", t))
            continue
        indegree = [0] * n
        structural_ok = True
        for i, node in enumerate(tree.nodes):
            if node.is_leaf:
                if not math.isfinite(node.leaf_value):
                    out.append(Violation("LeafValueNotFinite", t, i))
                continue
            if not (0 <= node.feature_index < forest.num_features):
                out.append(Violation("FeatureOutOfRange", t, i,
                                     f"feature {node.feature_index} of {forest.num_features}"))
            if not math.isfinite(node.threshold):
                out.append(Violation("ThresholdNotFinite", t, i))
            if node.default_branch not in (LEFT, RIGHT):
                out.append(Violation("UnknownDefaultBranch", t, i))
            for child in (node.left_child, node.right_child):
                if not (0 <= child < n):
                    out.append(Violation("ChildOutOfBounds", t, i, f"child {child}"))
                    structural_ok = False
                elif child <= i:
                    out.append(Violation("ChildNotForward", t, i, f"child {child}"))
                    structural_ok = False
                else:
                    indegree[child] += 1
        if structural_ok:
            if indegree[0] != 0:
                out.append(Violation("RootHasParent", t, 0))
            for i in range(1, n):
                if indegree[i] != 1:
                    out.append(Violation("NodeParentCount", t, i,
                                         f"referenced {indegree[i]} times"))
            if indegree[0] == 0 and all(d == 1 for d in indegree[1:]):
                d = tree_depth(tree)
                if d > max_depth:
                    out.append(Violation("DepthExceeded", t, detail=f"depth {d} > {max_depth}"))
        if tree.sibling_adjacent != compute_sibling_adjacent(tree.nodes):
            out.append(Violation("LayoutFlagMismatch", t))
    return out


# --- interchange format -----------------------------------------------------

_TOP_FIELDS = {"format_version", "model_kind", "num_features", "base_score", "trees"}
_TREE_FIELDS = {"nodes"}
_LEAF_FIELDS = {"kind", "value"}
_INTERNAL_FIELDS = {"kind", "feature", "threshold", "left", "right", "default"}


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaViolation(message)


def _parse_node(obj, t: int, i: int) -> Node:
    where = f"tree {t} node {i}"
    _require(isinstance(obj, dict), f"{where}: node must be an object")
    kind = obj.get("kind")
    if kind == "leaf":
        _require(set(obj) == _LEAF_FIELDS, f"{where}: leaf fields must be exactly {sorted(_LEAF_FIELDS)}")
        _require(isinstance(obj["value"], (int, float)) and not isinstance(obj["value"], bool),
                 f"{where}: value must be a number")
        return Node.leaf(float(obj["value"]))
    if kind == "internal":
        _require(set(obj) == _INTERNAL_FIELDS,
                 f"{where}: internal fields must be exactly {sorted(_INTERNAL_FIELDS)}")
        _require(isinstance(obj["feature"], int) and not isinstance(obj["feature"], bool),
                 f"{where}: feature must be an integer")
        _require(isinstance(obj["threshold"], (int, float)) and not isinstance(obj["threshold"], bool),
                 f"{where}: threshold must be a number")
        for key in ("left", "right"):
            _require(isinstance(obj[key], int) and not isinstance(obj[key], bool),
                     f"{where}: {key} must be an integer")
        _require(obj["default"] in (LEFT, RIGHT), f"{where}: default must be 'left' or 'right'")
        return Node.internal(obj["feature"], float(obj["threshold"]),
                             obj["left"], obj["right"], obj["default"])
    raise SchemaViolation(f"{where}: kind must be 'leaf' or 'internal'")


def parse_model(data: bytes | str, max_depth: int = DEFAULT_MAX_DEPTH) -> Forest:
    """Parse an interchange JSON document into a validated Forest.

    Raises MalformedDocument for broken JSON, SchemaViolation for wrong or
    unknown fields, InvariantViolation when the structure is schema-valid but
    not a legal forest. Layout flags are always recomputed from the nodes.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(str(exc)) from exc

    _require(isinstance(doc, dict), "top level must be an object")
    unknown = set(doc) - _TOP_FIELDS
    _require(not unknown, f"unknown top-level fields: {sorted(unknown)}")
    for key in ("format_version", "model_kind", "num_features", "trees"):
        _require(key in doc, f"missing top-level field: {key}")
    _require(doc["format_version"] == FORMAT_VERSION,
             f"unsupported format_version {doc['format_version']!r}")
    _require(doc["model_kind"] in MODEL_KINDS,
             f"model_kind must be one of {MODEL_KINDS}")
    _require(isinstance(doc["num_features"], int) and not isinstance(doc["num_features"], bool)
             and doc["num_features"] > 0,
             "num_features must be a positive integer")
    base = doc.get("base_score", 0.0)
    _require(isinstance(base, (int, float)) and not isinstance(base, bool),
             "base_score must be a number")
    _require(isinstance(doc["trees"], list), "trees must be an array")

    trees = []
    for t, tree_obj in enumerate(doc["trees"]):
        _require(isinstance(tree_obj, dict) and set(tree_obj) == _TREE_FIELDS,
                 f"tree {t}: fields must be exactly ['nodes']")
        _require(isinstance(tree_obj["nodes"], list) and tree_obj["nodes"],
                 f"tree {t}: nodes must be a non-empty array")
        nodes = [_parse_node(obj, t, i) for i, obj in enumerate(tree_obj["nodes"])]
        trees.append(make_tree(nodes))

    forest = Forest(trees=tuple(trees), num_features=doc["num_features"],
                    model_kind=doc["model_kind"], base_score=float(base))
    violations = validate(forest, max_depth=max_depth)
    if violations:
        raise InvariantViolation(violations)
    return forest


def _node_to_obj(node: Node) -> dict:
    if node.is_leaf:
        return {"kind": "leaf", "value": node.leaf_value}
    return {"kind": "internal", "feature": node.feature_index, "threshold": node.threshold,
            "left": node.left_child, "right": node.right_child, "default": node.default_branch}


def serialize_model(forest: Forest) -> str:
    """Emit canonical interchange JSON; float repr round-trips values exactly."""
    doc = {
        "format_version": FORMAT_VERSION,
        "model_kind": forest.model_kind,
        "num_features": forest.num_features,
        "base_score": forest.base_score,
        "trees": [{"nodes": [_node_to_obj(n) for n in tree.nodes]} for tree in forest.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# --- reference predictor ----------------------------------------------------

def _check_sample(forest: Forest, values: Sequence[float],
                  missing: Sequence[bool] | None) -> None:
    if len(values) != forest.num_features:
        raise DimensionMismatch(
            f"sample has {len(values)} features, model expects {forest.num_features}")
    if missing is not None and len(missing) != forest.num_features:
        raise DimensionMismatch(
            f"missing mask has {len(missing)} entries, model expects {forest.num_features}")


def walk_tree(tree: Tree, values: Sequence[float],
              missing: Sequence[bool] | None = None) -> int:
    """Root-to-leaf walk; returns the exit leaf's node index."""
    i = 0
    node = tree.nodes[0]
    while not node.is_leaf:
        if missing is not None and missing[node.feature_index]:
            i = node.left_child if node.default_branch == LEFT else node.right_child
        elif values[node.feature_index] <= node.threshold:
            i = node.left_child
        else:
            i = node.right_child
        node = tree.nodes[i]
    return i


def finalize_raw(leaf_sum: float, n_trees: int, model_kind: str, base_score: float) -> float:
    if model_kind == RANDOM_FOREST:
        return leaf_sum / n_trees
    return base_score + leaf_sum


def predict_naive(forest: Forest, values: Sequence[float],
                  missing: Sequence[bool] | None = None) -> Prediction:
    """Walk every tree root-to-leaf and aggregate the exit-leaf values.

    This is the oracle: every other engine must reproduce its raw_score.
    """
    _check_sample(forest, values, missing)
    acc = 0.0
    for tree in forest.trees:
        acc += tree.nodes[walk_tree(tree, values, missing)].leaf_value
    raw = finalize_raw(acc, forest.n_trees, forest.model_kind, forest.base_score)
    return Prediction(raw_score=raw, probability=sigmoid(raw))
