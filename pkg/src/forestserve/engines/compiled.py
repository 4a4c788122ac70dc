"""Tree logic unrolled into nested if-else program text, grouped into
compilation units, plus the interpreter that executes the emitted text.

Grammar (whitespace-insensitive, floats are hex-floats so values round-trip
bitwise):

    program := header unit+
    header  := "model" KIND FLOAT INT          (kind, base score, num features)
    unit    := "unit" INT "{" tree+ "}"
    tree    := "tree" INT "{" node "}"
    node    := "if" "missing" "(" FEAT ")" "{" node "}" "else" "{" cond "}"
             | cond
             | leaf
    cond    := "if" FEAT "<=" FLOAT "{" node "}" "else" "{" node "}"
    leaf    := "emit" FLOAT
    FEAT    := "f" INT   (glued, e.g. f12)

A bare cond routes missing values to its else branch, so only nodes whose
default branch is LEFT carry a missing-guard; the guard's arm holds a copy of
the default (left) subtree. The guard feature must match the guarded test's
feature.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass

import numpy as np

from .. import model
from ..blocks import PredictionBlock, SampleBlock, sigmoid_block
from ..errors import DimensionMismatch, ParseError
from ..model import Forest, Node, Prediction, Tree

PROGRAM_SUFFIX = ".dfp"

DEFAULT_UNIT_SIZE = 8

_FEAT_RE = re.compile(r"^f(\d+)$")
_INT_RE = re.compile(r"^\d+$")
_HEXFLOAT_RE = re.compile(r"^-?0[xX]")


@dataclass(frozen=True)
class CompilationUnit:
    unit_index: int
    tree_indices: tuple[int, ...]
    program_text: str


@dataclass(frozen=True)
class DecisionProgram:
    units: tuple[CompilationUnit, ...]
    model_kind: str
    base_score: float
    num_features: int

    def render(self) -> str:
        header = f"model {self.model_kind} {self.base_score.hex()} {self.num_features}\n"
        return header + "".join(u.program_text for u in self.units)


@dataclass
class CompileCost:
    duration_ms: float
    emitted_bytes: int
    n_units: int
    n_trees: int


# --- emission ----------------------------------------------------------------

def _emit_node(tree: Tree, i: int, lines: list[str], depth: int) -> None:
    pad = "  " * depth
    node = tree.nodes[i]
    if node.is_leaf:
        lines.append(f"{pad}emit {node.leaf_value.hex()}")
        return
    if node.default_branch == model.LEFT:
        # missing must not fall through to the else branch: guard it, with the
        # default (left) subtree duplicated as the arm
        lines.append(f"{pad}if missing(f{node.feature_index}) {{")
        _emit_node(tree, node.left_child, lines, depth + 1)
        lines.append(f"{pad}}} else {{")
        _emit_cond(tree, i, lines, depth + 1)
        lines.append(f"{pad}}}")
    else:
        _emit_cond(tree, i, lines, depth)


def _emit_cond(tree: Tree, i: int, lines: list[str], depth: int) -> None:
    pad = "  " * depth
    node = tree.nodes[i]
    lines.append(f"{pad}if f{node.feature_index} <= {node.threshold.hex()} {{")
    _emit_node(tree, node.left_child, lines, depth + 1)
    lines.append(f"{pad}}} else {{")
    _emit_node(tree, node.right_child, lines, depth + 1)
    lines.append(f"{pad}}}")


def compile_forest(forest: Forest, unit_size: int = DEFAULT_UNIT_SIZE) -> DecisionProgram:
    """Render every tree as nested if-else text, unit_size trees per unit."""
    if unit_size < 1:
        raise ValueError("unit_size must be >= 1")
    units = []
    for u, start in enumerate(range(0, forest.n_trees, unit_size)):
        indices = tuple(range(start, min(start + unit_size, forest.n_trees)))
        lines = [f"unit {u} {{"]
        for t in indices:
            lines.append(f"  tree {t} {{")
            _emit_node(forest.trees[t], 0, lines, 2)
            lines.append("  }")
        lines.append("}")
        units.append(CompilationUnit(unit_index=u, tree_indices=indices,
                                     program_text="\n".join(lines) + "\n"))
    return DecisionProgram(units=tuple(units), model_kind=forest.model_kind,
                           base_score=forest.base_score, num_features=forest.num_features)


def measure_compile_cost(forest: Forest, unit_size: int = DEFAULT_UNIT_SIZE
                         ) -> tuple[DecisionProgram, CompileCost]:
    """Emit the program and report the one-time cost (wall time, text bytes)."""
    start = time.perf_counter()
    program = compile_forest(forest, unit_size)
    text = program.render()
    duration_ms = (time.perf_counter() - start) * 1e3
    return program, CompileCost(duration_ms=duration_ms,
                                emitted_bytes=len(text.encode("utf-8")),
                                n_units=len(program.units), n_trees=forest.n_trees)


# --- parsing to an executable form -------------------------------------------

@dataclass
class _ProgramTree:
    """Flat executable node arrays; `miss` is the third child pointer taken when
    the tested feature is missing (the right child for unguarded nodes)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    miss: np.ndarray
    guarded: np.ndarray  # bool: node had an explicit missing-guard
    is_leaf: np.ndarray
    value: np.ndarray
    depth: int


@dataclass
class ExecutableProgram:
    model_kind: str
    base_score: float
    num_features: int
    units: list[tuple[int, list[int]]]  # (unit_index, tree indices)
    trees: dict[int, _ProgramTree]

    def trees_in_order(self) -> list[tuple[int, _ProgramTree]]:
        order = []
        for _, indices in self.units:
            for t in indices:
                order.append((t, self.trees[t]))
        return order


_TOKEN_RE = re.compile(r"[{}()]|[^\s{}()]+")


class _Tokens:
    """Streaming tokenizer: braces and parens split off, everything else is
    whitespace-delimited. One token of lookahead, nothing materialized."""

    def __init__(self, text: str):
        self._iter = _TOKEN_RE.finditer(text)
        self._ahead: str | None = None
        self.pos = 0

    def peek(self) -> str | None:
        if self._ahead is None:
            match = next(self._iter, None)
            self._ahead = match.group(0) if match else None
        return self._ahead

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of program text")
        self._ahead = None
        self.pos += 1
        return tok

    def expect(self, want: str) -> None:
        tok = self.next()
        if tok != want:
            raise ParseError(f"expected {want!r}, got {tok!r} at token {self.pos - 1}")

    def take_int(self) -> int:
        tok = self.next()
        if not _INT_RE.match(tok):
            raise ParseError(f"expected integer, got {tok!r} at token {self.pos - 1}")
        return int(tok)

    def take_float(self) -> float:
        tok = self.next()
        if not _HEXFLOAT_RE.match(tok):
            raise ParseError(f"expected hex-float, got {tok!r} at token {self.pos - 1}")
        try:
            return float.fromhex(tok)
        except ValueError as exc:
            raise ParseError(f"bad hex-float {tok!r}") from exc

    def take_feature(self) -> int:
        tok = self.next()
        m = _FEAT_RE.match(tok)
        if not m:
            raise ParseError(f"expected feature token fN, got {tok!r} at token {self.pos - 1}")
        return int(m.group(1))


class _TreeBuilder:
    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.miss: list[int] = []
        self.guarded: list[bool] = []
        self.is_leaf: list[bool] = []
        self.value: list[float] = []

    def add(self) -> int:
        for arr, fill in ((self.feature, 0), (self.threshold, 0.0), (self.left, 0),
                          (self.right, 0), (self.miss, 0), (self.guarded, False),
                          (self.is_leaf, False), (self.value, 0.0)):
            arr.append(fill)
        return len(self.is_leaf) - 1

    def finish(self) -> _ProgramTree:
        depth = [0] * len(self.is_leaf)
        deepest = 0
        for i in range(len(self.is_leaf)):
            if self.is_leaf[i]:
                deepest = max(deepest, depth[i])
            else:
                for child in {self.left[i], self.right[i], self.miss[i]}:
                    depth[child] = depth[i] + 1
        return _ProgramTree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            miss=np.array(self.miss, dtype=np.int64),
            guarded=np.array(self.guarded, dtype=bool),
            is_leaf=np.array(self.is_leaf, dtype=bool),
            value=np.array(self.value, dtype=np.float64),
            depth=deepest,
        )


def _parse_node(toks: _Tokens, tb: _TreeBuilder) -> int:
    tok = toks.peek()
    if tok == "emit":
        toks.next()
        i = tb.add()
        tb.is_leaf[i] = True
        tb.value[i] = toks.take_float()
        return i
    if tok != "if":
        raise ParseError(f"expected 'if' or 'emit', got {tok!r}")
    toks.next()
    if toks.peek() == "missing":
        toks.next()
        toks.expect("(")
        guard_feature = toks.take_feature()
        toks.expect(")")
        i = tb.add()
        toks.expect("{")
        arm = _parse_node(toks, tb)
        toks.expect("}")
        toks.expect("else")
        toks.expect("{")
        toks.expect("if")
        _parse_cond_into(toks, tb, i)
        toks.expect("}")
        if tb.feature[i] != guard_feature:
            raise ParseError(
                f"missing-guard tests f{guard_feature} but guards a split on f{tb.feature[i]}")
        tb.miss[i] = arm
        tb.guarded[i] = True
        return i
    i = tb.add()
    _parse_cond_into(toks, tb, i)
    tb.miss[i] = tb.right[i]  # missing fails the comparison: take the else branch
    return i


def _parse_cond_into(toks: _Tokens, tb: _TreeBuilder, i: int) -> None:
    tb.feature[i] = toks.take_feature()
    toks.expect("<=")
    tb.threshold[i] = toks.take_float()
    toks.expect("{")
    tb.left[i] = _parse_node(toks, tb)
    toks.expect("}")
    toks.expect("else")
    toks.expect("{")
    tb.right[i] = _parse_node(toks, tb)
    toks.expect("}")


def parse_program(text: str) -> ExecutableProgram:
    """Parse full program text into executable per-tree arrays."""
    toks = _Tokens(text)
    toks.expect("model")
    kind = toks.next()
    if kind not in model.MODEL_KINDS:
        raise ParseError(f"unknown model kind {kind!r}")
    base = toks.take_float()
    num_features = toks.take_int()
    units: list[tuple[int, list[int]]] = []
    trees: dict[int, _ProgramTree] = {}
    while toks.peek() is not None:
        toks.expect("unit")
        unit_index = toks.take_int()
        toks.expect("{")
        indices: list[int] = []
        while toks.peek() == "tree":
            toks.next()
            t = toks.take_int()
            if t in trees:
                raise ParseError(f"tree {t} defined twice")
            toks.expect("{")
            tb = _TreeBuilder()
            root = _parse_node(toks, tb)
            if root != 0:
                raise ParseError("tree body must start at its root")
            toks.expect("}")
            trees[t] = tb.finish()
            indices.append(t)
        toks.expect("}")
        if not indices:
            raise ParseError(f"unit {unit_index} has no trees")
        units.append((unit_index, indices))
    if not units:
        raise ParseError("program has no units")
    return ExecutableProgram(model_kind=kind, base_score=base,
                             num_features=num_features, units=units, trees=trees)


def _subtrees_equal(tb: _ProgramTree, a: int, b: int) -> bool:
    if tb.is_leaf[a] != tb.is_leaf[b]:
        return False
    if tb.is_leaf[a]:
        va, vb = float(tb.value[a]), float(tb.value[b])
        return va.hex() == vb.hex()
    if (tb.feature[a] != tb.feature[b] or tb.guarded[a] != tb.guarded[b]
            or float(tb.threshold[a]).hex() != float(tb.threshold[b]).hex()):
        return False
    if tb.guarded[a] and not _subtrees_equal(tb, tb.miss[a], tb.miss[b]):
        return False
    return (_subtrees_equal(tb, tb.left[a], tb.left[b])
            and _subtrees_equal(tb, tb.right[a], tb.right[b]))


def program_to_forest(program: DecisionProgram | ExecutableProgram | str) -> Forest:
    """Strictly reconstruct the source forest from program text.

    Guarded nodes must carry an arm identical to their left subtree (that is
    what compile_forest emits); anything else raises ParseError.
    """
    ex = _as_executable(program)
    ir_trees: dict[int, Tree] = {}
    for t, pt in ex.trees.items():
        nodes: list[Node] = []

        def build(i: int) -> int:
            my = len(nodes)
            nodes.append(Node.leaf(0.0))  # placeholder, patched below
            if pt.is_leaf[i]:
                nodes[my] = Node.leaf(float(pt.value[i]))
                return my
            if pt.guarded[i]:
                if not _subtrees_equal(pt, int(pt.miss[i]), int(pt.left[i])):
                    raise ParseError(
                        f"tree {t}: missing-guard arm is not a copy of the left subtree")
                default = model.LEFT
            else:
                default = model.RIGHT
            left = build(int(pt.left[i]))
            right = build(int(pt.right[i]))
            nodes[my] = Node.internal(int(pt.feature[i]), float(pt.threshold[i]),
                                      left, right, default)
            return my

        build(0)
        ir_trees[t] = model.make_tree(nodes)
    expected = list(range(len(ir_trees)))
    if sorted(ir_trees) != expected:
        raise ParseError(f"tree indices must cover 0..{len(ir_trees) - 1}")
    return Forest(trees=tuple(ir_trees[t] for t in expected),
                  num_features=ex.num_features, model_kind=ex.model_kind,
                  base_score=ex.base_score)


def _as_executable(program: DecisionProgram | ExecutableProgram | str) -> ExecutableProgram:
    if isinstance(program, ExecutableProgram):
        return program
    if isinstance(program, DecisionProgram):
        return parse_program(program.render())
    return parse_program(program)


# --- interpretation -----------------------------------------------------------

def _walk_scalar(pt: _ProgramTree, values, missing) -> float:
    i = 0
    while not pt.is_leaf[i]:
        f = pt.feature[i]
        if missing is not None and missing[f]:
            i = int(pt.miss[i])
        elif values[f] <= pt.threshold[i]:
            i = int(pt.left[i])
        else:
            i = int(pt.right[i])
    return float(pt.value[i])


def interpret(program: DecisionProgram | ExecutableProgram | str,
              values, missing=None) -> Prediction:
    """Execute the program for one sample; numerically identical to the
    reference predictor on the source forest."""
    ex = _as_executable(program)
    if len(values) != ex.num_features:
        raise DimensionMismatch(
            f"sample has {len(values)} features, program expects {ex.num_features}")
    if missing is not None and len(missing) != ex.num_features:
        raise DimensionMismatch(
            f"missing mask has {len(missing)} entries, program expects {ex.num_features}")
    acc = 0.0
    for _, pt in ex.trees_in_order():
        acc += _walk_scalar(pt, values, missing)
    raw = model.finalize_raw(acc, len(ex.trees), ex.model_kind, ex.base_score)
    return Prediction(raw_score=raw, probability=model.sigmoid(raw))


def _walk_block(pt: _ProgramTree, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
    n_rows = values.shape[0]
    rows = np.arange(n_rows)
    idx = np.zeros(n_rows, dtype=np.int64)
    for _ in range(pt.depth):
        f = pt.feature[idx]
        x = values[rows, f]
        m = missing[rows, f]
        step = np.where(m, pt.miss[idx], np.where(x <= pt.threshold[idx],
                                                  pt.left[idx], pt.right[idx]))
        idx = np.where(pt.is_leaf[idx], idx, step)
    return pt.value[idx]


def unit_partial_sums(program: DecisionProgram | ExecutableProgram | str,
                      values: np.ndarray, missing: np.ndarray) -> list[np.ndarray]:
    """Per-unit row sums of leaf contributions, in unit order."""
    ex = _as_executable(program)
    out = []
    for _, indices in ex.units:
        acc = np.zeros(values.shape[0], dtype=np.float64)
        for t in indices:
            acc += _walk_block(ex.trees[t], values, missing)
        out.append(acc)
    return out


class CompiledEngine:
    """Compiles the forest to program text, then interprets that text."""

    name = "compiled"

    def __init__(self, forest: Forest, unit_size: int = DEFAULT_UNIT_SIZE):
        self.forest = forest
        self.program, self.cost = measure_compile_cost(forest, unit_size)
        self.executable = parse_program(self.program.render())

    def predict(self, values, missing=None) -> Prediction:
        return interpret(self.executable, values, missing)

    def leaf_sum_block(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        acc = np.zeros(values.shape[0], dtype=np.float64)
        for _, pt in self.executable.trees_in_order():
            acc += _walk_block(pt, values, missing)
        return acc

    def predict_block(self, block: SampleBlock) -> PredictionBlock:
        if block.num_features != self.forest.num_features:
            raise DimensionMismatch(
                f"block has {block.num_features} features, model expects {self.forest.num_features}")
        sums = self.leaf_sum_block(block.values, block.missing)
        raw = model.finalize_raw(sums, self.forest.n_trees, self.forest.model_kind,
                                 self.forest.base_score)
        return PredictionBlock(block_id=block.block_id, row_offset=block.row_offset,
                               raw_score=raw, probability=sigmoid_block(raw))
