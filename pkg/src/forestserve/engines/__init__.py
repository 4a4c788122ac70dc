"""Engine registry.

Every engine exposes the same surface over a shared Forest:

* ``predict(values, missing=None) -> Prediction`` (single sample),
* ``predict_block(block) -> PredictionBlock``,
* ``leaf_sum_block(values, missing) -> ndarray`` (per-row sum of exit-leaf
  values in ascending tree order, before mean/base-score finalization).

Engines are immutable once built and safe to share across worker threads.
"""

from __future__ import annotations

from ..model import Forest
from .compiled import CompiledEngine
from .quickscorer import QuickScorerEngine
from .tensor import TensorEngine
from .traversal import NaiveEngine, PredicatedEngine

ENGINES = {
    "naive": NaiveEngine,
    "predicated": PredicatedEngine,
    "quickscorer": QuickScorerEngine,
    "tensor": TensorEngine,
    "compiled": CompiledEngine,
}

ENGINE_NAMES = tuple(ENGINES)

# engines that route missing values through default branches
MISSING_CAPABLE = ("naive", "predicated", "compiled")


def build_engine(name: str, forest: Forest, **options):
    try:
        cls = ENGINES[name]
    except KeyError:
        raise ValueError(f"unknown engine {name!r}; choose from {ENGINE_NAMES}") from None
    return cls(forest, **options)
