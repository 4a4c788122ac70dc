"""In-process dataflow execution: the single-stage UDF-centric plan (data
parallelism: workers own disjoint blocks and run the whole-forest engine) and
the multi-stage relation-centric plan (model parallelism: a cross-product
pairs every model partition with every sample block, partials are merged per
row), plus materialization of the partition stage so later runs can skip it.

Determinism: work items are pure, results are merged in a fixed order
(ascending block id, ascending partition id), so outputs do not depend on the
worker count or on thread scheduling.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model
from .blocks import PredictionBlock, SampleBlock, sigmoid_block
from .data_io import DEFAULT_BLOCK_ROWS, DatasetHandle
from .engines import build_engine
from .errors import MissingPartial, StoreCorrupt, UnsupportedEngineForPlan
from .model import Forest

UDF_CENTRIC = "udf_centric"
RELATION_CENTRIC = "relation_centric"
RELATION_CENTRIC_REUSED = "relation_centric_reused"
PLAN_KINDS = (UDF_CENTRIC, RELATION_CENTRIC, RELATION_CENTRIC_REUSED)

_MANIFEST = "manifest.json"


@dataclass(frozen=True)
class ModelPartition:
    partition_id: int
    tree_indices: tuple[int, ...]
    forest: Forest  # this partition's trees only; shares num_features/kind/base

    @property
    def n_trees(self) -> int:
        return len(self.tree_indices)


@dataclass
class PartialPredictionBlock:
    partition_id: int
    block_id: int
    row_offset: int
    sums: np.ndarray  # per-row sum of this partition's exit-leaf values
    tree_count: int  # uniform across rows: the partition size


@dataclass(frozen=True)
class PipelineStage:
    name: str
    operators: tuple[str, ...]  # the last operator is the pipeline breaker


@dataclass
class ExecConfig:
    workers: int = 1
    batch_blocks: int | None = None
    block_rows: int = DEFAULT_BLOCK_ROWS
    engine: str = "naive"
    unit_size: int = 8
    partition_store: str | None = None


@dataclass
class ExecutionPlan:
    plan_kind: str
    stages: tuple[PipelineStage, ...]
    forest: Forest
    config: ExecConfig
    dataset: DatasetHandle | None = None
    whole_engine: object | None = None  # prebuilt whole-forest engine (UDF plan)


@dataclass
class StageMetrics:
    stage: str
    wall_ms: float = 0.0
    rows: int = 0
    workers: int = 1


@dataclass
class ExecutionResult:
    blocks: list[PredictionBlock]
    stage_metrics: list[StageMetrics]
    counters: dict[str, int] = field(default_factory=dict)


_UDF_STAGES = (PipelineStage("predict", ("scan", "predict-udf", "write")),)
_REL_STAGES = (
    PipelineStage("partition-model", ("scan-model", "partition", "materialize")),
    PipelineStage("cross-product", ("scan", "cross-product", "leaf-sums", "group-partials")),
    PipelineStage("aggregate", ("merge-partials", "aggregate")),
    PipelineStage("post-process", ("finalize", "sigmoid", "write")),
)
# reuse elides the partition stage: the first stage scans the materialized
# partitions straight into the cross-product, leaving three stages
_REUSED_STAGES = (
    PipelineStage("load-partitions", ("scan-store", "verify", "load",
                                      "cross-product", "leaf-sums", "group-partials")),
) + _REL_STAGES[2:]


def plan(forest: Forest, dataset: DatasetHandle | None, plan_kind: str,
         config: ExecConfig, whole_engine=None) -> ExecutionPlan:
    """Build a dataflow plan; stage counts are fixed per plan kind."""
    if plan_kind not in PLAN_KINDS:
        raise ValueError(f"unknown plan kind {plan_kind!r}; choose from {PLAN_KINDS}")
    if plan_kind != UDF_CENTRIC and config.engine == "quickscorer":
        raise UnsupportedEngineForPlan(
            "quickscorer groups nodes by feature, not by tree, so it has no "
            "balanced model partitioning; use it with the udf_centric plan")
    if plan_kind == RELATION_CENTRIC_REUSED and not config.partition_store:
        raise ValueError("relation_centric_reused requires config.partition_store")
    stages = {UDF_CENTRIC: _UDF_STAGES, RELATION_CENTRIC: _REL_STAGES,
              RELATION_CENTRIC_REUSED: _REUSED_STAGES}[plan_kind]
    return ExecutionPlan(plan_kind=plan_kind, stages=stages, forest=forest,
                         config=config, dataset=dataset, whole_engine=whole_engine)


def partition_model(forest: Forest, k: int) -> list[ModelPartition]:
    """Round-robin trees over min(k, n_trees) partitions; sizes differ by <= 1."""
    if k < 1:
        raise ValueError("worker count must be >= 1")
    k = min(k, forest.n_trees)
    partitions = []
    for p in range(k):
        indices = tuple(range(p, forest.n_trees, k))
        sub = Forest(trees=tuple(forest.trees[i] for i in indices),
                     num_features=forest.num_features,
                     model_kind=forest.model_kind, base_score=forest.base_score)
        partitions.append(ModelPartition(partition_id=p, tree_indices=indices, forest=sub))
    return partitions


def _build_partition_engines(partitions: list[ModelPartition], engine_name: str,
                             unit_size: int) -> list:
    opts = {"unit_size": unit_size} if engine_name == "compiled" else {}
    return [build_engine(engine_name, part.forest, **opts) for part in partitions]


def cross_product(partitions: list[ModelPartition], blocks: list[SampleBlock],
                  engine_name: str, workers: int | None = None,
                  unit_size: int = 8) -> list[PartialPredictionBlock]:
    """Pair every partition with every block: |partitions| x |blocks| partials."""
    engines = _build_partition_engines(partitions, engine_name, unit_size)
    return _cross_product(partitions, engines, blocks,
                          workers or len(partitions))


def _cross_product(partitions, engines, blocks, workers) -> list[PartialPredictionBlock]:
    def run_partition(p: int) -> list[PartialPredictionBlock]:
        part, engine = partitions[p], engines[p]
        out = []
        for block in blocks:  # every worker sees every block, read-only
            sums = engine.leaf_sum_block(block.values, block.missing)
            out.append(PartialPredictionBlock(
                partition_id=part.partition_id, block_id=block.block_id,
                row_offset=block.row_offset, sums=sums, tree_count=part.n_trees))
        return out

    partials: list[PartialPredictionBlock] = []
    if workers <= 1 or len(partitions) <= 1:
        for p in range(len(partitions)):
            partials.extend(run_partition(p))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(run_partition, range(len(partitions))):
                partials.extend(chunk)
    return partials


def aggregate(partials: list[PartialPredictionBlock], n_partitions: int,
              total_trees: int, model_kind: str, base_score: float
              ) -> dict[int, tuple[int, np.ndarray]]:
    """Merge partial sums per row in ascending partition order and finalize.

    Returns block_id -> (row_offset, raw scores). Raises MissingPartial when a
    (block, partition) pair never arrived.
    """
    by_block: dict[int, dict[int, PartialPredictionBlock]] = {}
    for part in partials:
        slot = by_block.setdefault(part.block_id, {})
        if part.partition_id in slot:
            raise ValueError(
                f"duplicate partial for block {part.block_id}, partition {part.partition_id}")
        slot[part.partition_id] = part
    out: dict[int, tuple[int, np.ndarray]] = {}
    for block_id in sorted(by_block):
        parts = by_block[block_id]
        for p in range(n_partitions):
            if p not in parts:
                raise MissingPartial(block_id, p)
        first = parts[0]
        total = np.zeros_like(first.sums)
        seen_trees = 0
        for p in range(n_partitions):
            total = total + parts[p].sums
            seen_trees += parts[p].tree_count
        if seen_trees != total_trees:
            raise MissingPartial(block_id, -1)
        raw = model.finalize_raw(total, total_trees, model_kind, base_score)
        out[block_id] = (first.row_offset, raw)
    return out


# --- partition store -----------------------------------------------------------

def forest_content_hash(forest: Forest) -> str:
    return hashlib.sha256(model.serialize_model(forest).encode("utf-8")).hexdigest()


def _partition_filename(p: int) -> str:
    return f"partition_{p:04d}.json"


def materialize_partitions(partitions: list[ModelPartition], store: str,
                           source_forest: Forest) -> None:
    """Persist each partition as interchange JSON plus a checksummed manifest."""
    os.makedirs(store, exist_ok=True)
    checksums = {}
    total = 0
    for part in partitions:
        name = _partition_filename(part.partition_id)
        payload = model.serialize_model(part.forest).encode("utf-8")
        with open(os.path.join(store, name), "wb") as fh:
            fh.write(payload)
        checksums[name] = hashlib.sha256(payload).hexdigest()
        total += part.n_trees
    manifest = {
        "format_version": 1,
        "partition_count": len(partitions),
        "tree_total": total,
        "forest_hash": forest_content_hash(source_forest),
        "checksums": checksums,
    }
    with open(os.path.join(store, _MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_partitions(store: str, source_forest: Forest) -> list[ModelPartition]:
    """Load materialized partitions, rejecting stale or corrupt stores."""
    try:
        with open(os.path.join(store, _MANIFEST), "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise StoreCorrupt(f"{store}: cannot read manifest: {exc}") from exc
    if manifest.get("forest_hash") != forest_content_hash(source_forest):
        raise StoreCorrupt(f"{store}: partitions were materialized from a different model")
    k = manifest["partition_count"]
    total = manifest["tree_total"]
    partitions = []
    for p in range(k):
        name = _partition_filename(p)
        try:
            with open(os.path.join(store, name), "rb") as fh:
                payload = fh.read()
        except OSError as exc:
            raise StoreCorrupt(f"{store}: missing {name}") from exc
        if hashlib.sha256(payload).hexdigest() != manifest["checksums"].get(name):
            raise StoreCorrupt(f"{store}: checksum mismatch for {name}")
        sub = model.parse_model(payload)
        indices = tuple(range(p, total, k))
        if len(indices) != sub.n_trees:
            raise StoreCorrupt(f"{store}: {name} holds {sub.n_trees} trees, "
                               f"expected {len(indices)}")
        partitions.append(ModelPartition(partition_id=p, tree_indices=indices, forest=sub))
    return partitions


# --- execution -------------------------------------------------------------------

def _chunks(items: list, size: int | None) -> list[list]:
    if not size or size >= len(items):
        return [items] if items else []
    return [items[i:i + size] for i in range(0, len(items), size)]


def execute(exec_plan: ExecutionPlan, blocks: list[SampleBlock] | None = None
            ) -> ExecutionResult:
    """Run the plan over the blocks (loaded from the dataset handle when not
    given); predictions come back in global row order regardless of plan kind,
    worker count, or batching."""
    cfg = exec_plan.config
    if blocks is None:
        if exec_plan.dataset is None:
            raise ValueError("plan has no dataset handle and no blocks were given")
        blocks = exec_plan.dataset.load_blocks()
    metrics = [StageMetrics(stage=s.name, workers=cfg.workers) for s in exec_plan.stages]
    counters = {"partition_stage_runs": 0}
    total_rows = sum(b.n_rows for b in blocks)

    if exec_plan.plan_kind == UDF_CENTRIC:
        engine = exec_plan.whole_engine
        if engine is None:
            opts = {"unit_size": cfg.unit_size} if cfg.engine == "compiled" else {}
            engine = build_engine(cfg.engine, exec_plan.forest, **opts)
        start = time.perf_counter()
        out: list[PredictionBlock] = []
        for batch in _chunks(blocks, cfg.batch_blocks):
            if cfg.workers <= 1 or len(batch) <= 1:
                out.extend(engine.predict_block(b) for b in batch)
            else:
                with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                    out.extend(pool.map(engine.predict_block, batch))
        metrics[0].wall_ms = (time.perf_counter() - start) * 1e3
        metrics[0].rows = total_rows
        out.sort(key=lambda b: b.block_id)
        return ExecutionResult(blocks=out, stage_metrics=metrics, counters=counters)

    # relation-centric: partition (or load into the cross-product stage),
    # cross-product, aggregate, post-process
    reused = exec_plan.plan_kind == RELATION_CENTRIC_REUSED
    i_cross, i_agg, i_post = (0, 1, 2) if reused else (1, 2, 3)
    start = time.perf_counter()
    if reused:
        partitions = load_partitions(cfg.partition_store, exec_plan.forest)
    else:
        partitions = partition_model(exec_plan.forest, cfg.workers)
        counters["partition_stage_runs"] += 1
        if cfg.partition_store:
            materialize_partitions(partitions, cfg.partition_store, exec_plan.forest)
    engines = _build_partition_engines(partitions, cfg.engine, cfg.unit_size)
    metrics[0].wall_ms = (time.perf_counter() - start) * 1e3
    metrics[0].rows = 0

    out = []
    for batch in _chunks(blocks, cfg.batch_blocks):
        start = time.perf_counter()
        partials = _cross_product(partitions, engines, batch, cfg.workers)
        metrics[i_cross].wall_ms += (time.perf_counter() - start) * 1e3
        metrics[i_cross].rows += sum(b.n_rows for b in batch) * len(partitions)

        start = time.perf_counter()
        raw_by_block = aggregate(partials, len(partitions), exec_plan.forest.n_trees,
                                 exec_plan.forest.model_kind, exec_plan.forest.base_score)
        metrics[i_agg].wall_ms += (time.perf_counter() - start) * 1e3
        metrics[i_agg].rows += sum(b.n_rows for b in batch)

        start = time.perf_counter()
        for block_id in sorted(raw_by_block):
            row_offset, raw = raw_by_block[block_id]
            out.append(PredictionBlock(block_id=block_id, row_offset=row_offset,
                                       raw_score=raw, probability=sigmoid_block(raw)))
        metrics[i_post].wall_ms += (time.perf_counter() - start) * 1e3
        metrics[i_post].rows += sum(b.n_rows for b in batch)
    out.sort(key=lambda b: b.block_id)
    return ExecutionResult(blocks=out, stage_metrics=metrics, counters=counters)
