"""End-to-end latency harness: every repeat is load -> execute plan -> write,
timed per phase with a monotonic clock. Model parsing, engine lowering and
program compilation happen once, are reported under one_time_costs, and never
count toward end-to-end latency because they amortize across queries.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import statistics
import time
from dataclasses import dataclass

from . import dataflow, model
from .data_io import (
    DATA_FORMATS,
    DEFAULT_BLOCK_ROWS,
    DatasetHandle,
    NATIVE_FORMAT,
    read_native_header,
    write_predictions,
)
from .dataflow import ExecConfig, PLAN_KINDS, UDF_CENTRIC
from .engines import ENGINE_NAMES, build_engine
from .engines.compiled import measure_compile_cost
from .errors import ConfigError
from .model import Forest

REPORT_SCHEMA_VERSION = 1


@dataclass
class BenchConfig:
    model_path: str
    data_path: str
    out_path: str
    data_format: str = "csv"
    engine: str = "naive"
    plan_kind: str = UDF_CENTRIC
    workers: int = 1
    block_rows: int = DEFAULT_BLOCK_ROWS
    batch_blocks: int | None = None
    repeats: int = 3
    warmups: int = 0
    report_path: str | None = None
    unit_size: int = 8
    partition_store: str | None = None
    max_depth: int = model.DEFAULT_MAX_DEPTH


@dataclass
class PhaseTimings:
    load_ms: float
    infer_ms: float
    write_ms: float
    end_to_end_ms: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class BenchReport:
    config: BenchConfig
    environment: dict
    one_time_costs: dict
    repeats: list[PhaseTimings]
    aggregate: dict
    stage_metrics: list[dict]
    counters: dict
    prediction_hash: str
    rows_written: int

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": dataclasses.asdict(self.config),
            "environment": self.environment,
            "one_time_costs": self.one_time_costs,
            "repeats": [r.as_dict() for r in self.repeats],
            "aggregate": self.aggregate,
            "stage_metrics": self.stage_metrics,
            "counters": self.counters,
            "prediction_hash": self.prediction_hash,
            "rows_written": self.rows_written,
        }

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def validate_config(cfg: BenchConfig) -> None:
    if cfg.engine not in ENGINE_NAMES:
        raise ConfigError(f"unknown engine {cfg.engine!r}; choose from {ENGINE_NAMES}")
    if cfg.plan_kind not in PLAN_KINDS:
        raise ConfigError(f"unknown plan {cfg.plan_kind!r}; choose from {PLAN_KINDS}")
    if cfg.data_format not in DATA_FORMATS:
        raise ConfigError(f"unknown data format {cfg.data_format!r}")
    if cfg.repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if cfg.warmups < 0:
        raise ConfigError("warmups must be >= 0")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.block_rows < 1:
        raise ConfigError("block-rows must be >= 1")
    if cfg.batch_blocks is not None and cfg.batch_blocks < 1:
        raise ConfigError("batch-blocks must be >= 1")
    if cfg.unit_size < 1:
        raise ConfigError("unit-size must be >= 1")
    if cfg.plan_kind == dataflow.RELATION_CENTRIC_REUSED and not cfg.partition_store:
        raise ConfigError("relation_centric_reused requires --partition-store")
    if cfg.plan_kind != UDF_CENTRIC and cfg.engine == "quickscorer":
        raise ConfigError("quickscorer runs only under the udf_centric plan")


def hash_prediction_file(path: str) -> str:
    """64-bit digest over the hex-float prediction file."""
    digest = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_model(cfg: BenchConfig) -> tuple[Forest, float]:
    start = time.perf_counter()
    with open(cfg.model_path, "rb") as fh:
        forest = model.parse_model(fh.read(), max_depth=cfg.max_depth)
    return forest, (time.perf_counter() - start) * 1e3


def _dataset_handle(cfg: BenchConfig, forest: Forest) -> DatasetHandle:
    if cfg.data_format == NATIVE_FORMAT:
        header = read_native_header(cfg.data_path)
        if header["num_features"] != forest.num_features:
            raise ConfigError(
                f"native store has {header['num_features']} features, "
                f"model expects {forest.num_features}")
        return DatasetHandle(NATIVE_FORMAT, cfg.data_path, header["num_features"],
                             cfg.block_rows)
    return DatasetHandle(cfg.data_format, cfg.data_path, forest.num_features,
                         cfg.block_rows)


def _environment(cfg: BenchConfig, forest: Forest, rows: int) -> dict:
    return {
        "engine": cfg.engine,
        "plan_kind": cfg.plan_kind,
        "workers": cfg.workers,
        "block_rows": cfg.block_rows,
        "batch_blocks": cfg.batch_blocks,
        "rows": rows,
        "num_features": forest.num_features,
        "n_trees": forest.n_trees,
        "max_tree_depth": max(model.tree_depth(t) for t in forest.trees),
        "model_kind": forest.model_kind,
    }


def _stat(values: list[float]) -> dict:
    return {"median": statistics.median(values), "min": min(values), "max": max(values)}


def run(cfg: BenchConfig) -> BenchReport:
    """Execute warmups then repeats; aggregate statistics exclude warmups."""
    validate_config(cfg)
    forest, model_parse_ms = load_model(cfg)
    one_time: dict = {"model_parse_ms": model_parse_ms}

    if cfg.engine == "compiled":
        _, cost = measure_compile_cost(forest, cfg.unit_size)
        one_time["compile_ms"] = cost.duration_ms
        one_time["compiled_bytes"] = cost.emitted_bytes

    whole_engine = None
    if cfg.plan_kind == UDF_CENTRIC:
        opts = {"unit_size": cfg.unit_size} if cfg.engine == "compiled" else {}
        start = time.perf_counter()
        whole_engine = build_engine(cfg.engine, forest, **opts)
        one_time["lowering_ms"] = (time.perf_counter() - start) * 1e3

    handle = _dataset_handle(cfg, forest)
    exec_cfg = ExecConfig(workers=cfg.workers, batch_blocks=cfg.batch_blocks,
                          block_rows=cfg.block_rows, engine=cfg.engine,
                          unit_size=cfg.unit_size, partition_store=cfg.partition_store)
    the_plan = dataflow.plan(forest, handle, cfg.plan_kind, exec_cfg, whole_engine)

    timings: list[PhaseTimings] = []
    result = None
    rows_written = 0
    rows = 0
    for _ in range(cfg.warmups + cfg.repeats):
        t0 = time.perf_counter()
        blocks = handle.load_blocks()
        t1 = time.perf_counter()
        result = dataflow.execute(the_plan, blocks)
        t2 = time.perf_counter()
        rows_written = write_predictions(result.blocks, cfg.out_path)
        t3 = time.perf_counter()
        rows = sum(b.n_rows for b in blocks)
        timings.append(PhaseTimings(load_ms=(t1 - t0) * 1e3, infer_ms=(t2 - t1) * 1e3,
                                    write_ms=(t3 - t2) * 1e3,
                                    end_to_end_ms=(t3 - t0) * 1e3))
    measured = timings[cfg.warmups:]

    report = BenchReport(
        config=cfg,
        environment=_environment(cfg, forest, rows),
        one_time_costs=one_time,
        repeats=measured,
        aggregate={
            "load_ms": _stat([t.load_ms for t in measured]),
            "infer_ms": _stat([t.infer_ms for t in measured]),
            "write_ms": _stat([t.write_ms for t in measured]),
            "end_to_end_ms": _stat([t.end_to_end_ms for t in measured]),
        },
        stage_metrics=[dataclasses.asdict(m) for m in result.stage_metrics],
        counters=dict(result.counters),
        prediction_hash=hash_prediction_file(cfg.out_path),
        rows_written=rows_written,
    )
    if cfg.report_path:
        report.write(cfg.report_path)
    return report


SWEEP_AXES = ("batch_blocks", "block_rows", "workers", "engine")
SWEEP_COLUMNS = ("axis_value", "load_ms", "infer_ms", "write_ms",
                 "end_to_end_ms", "prediction_hash")


def sweep(cfg: BenchConfig, axis: str, values: list, table_path: str | None = None
          ) -> list[BenchReport]:
    """One full run per axis value plus a combined CSV table for plotting."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    if not values:
        raise ConfigError("sweep values must be non-empty")
    reports = []
    for value in values:
        reports.append(run(dataclasses.replace(cfg, **{axis: value}, report_path=None)))
    if table_path:
        with open(table_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(SWEEP_COLUMNS) + "\n")
            for value, rep in zip(values, reports):
                agg = rep.aggregate
                fh.write(",".join([
                    str(value),
                    repr(agg["load_ms"]["median"]),
                    repr(agg["infer_ms"]["median"]),
                    repr(agg["write_ms"]["median"]),
                    repr(agg["end_to_end_ms"]["median"]),
                    rep.prediction_hash,
                ]) + "\n")
    return reports


def parallelism_trend(cfg: BenchConfig, report_path: str | None = None) -> dict:
    """Run the same workload under data parallelism (udf_centric) and model
    parallelism (relation_centric) and record both throughputs plus their
    ratio. Informational: the ratio is recorded, never asserted."""
    out = {"workers": cfg.workers, "plans": {}}
    for kind in (UDF_CENTRIC, dataflow.RELATION_CENTRIC):
        rep = run(dataclasses.replace(cfg, plan_kind=kind, report_path=None))
        infer_ms = rep.aggregate["infer_ms"]["median"]
        rows = rep.environment["rows"]
        out["plans"][kind] = {
            "infer_ms_median": infer_ms,
            "end_to_end_ms_median": rep.aggregate["end_to_end_ms"]["median"],
            "rows_per_second": rows / (infer_ms / 1e3) if infer_ms > 0 else float("inf"),
            "prediction_hash": rep.prediction_hash,
        }
    udf = out["plans"][UDF_CENTRIC]["rows_per_second"]
    rel = out["plans"][dataflow.RELATION_CENTRIC]["rows_per_second"]
    out["model_over_data_parallel_throughput_ratio"] = rel / udf if udf else float("inf")
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return out
