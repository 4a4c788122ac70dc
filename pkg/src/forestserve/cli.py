"""Command line interface: run, sweep, synth, inspect-model, compile.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench, model, synth
from .dataflow import PLAN_KINDS, UDF_CENTRIC
from .engines import ENGINE_NAMES
from .engines.compiled import measure_compile_cost
from .errors import ConfigError, ForestError


def _plan_kind(text: str) -> str:
    kind = text.replace("-", "_")
    if kind not in PLAN_KINDS:
        raise argparse.ArgumentTypeError(
            f"unknown plan {text!r}; choose from {', '.join(PLAN_KINDS)}")
    return kind


def _add_bench_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model interchange JSON")
    p.add_argument("--data", required=True, help="dataset path")
    p.add_argument("--data-format", default="csv", choices=("csv", "libsvm", "native"))
    p.add_argument("--engine", default="naive", choices=ENGINE_NAMES)
    p.add_argument("--plan", default=UDF_CENTRIC, type=_plan_kind,
                   help="udf_centric | relation_centric | relation_centric_reused")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--block-rows", type=int, default=256)
    p.add_argument("--batch-blocks", type=int, default=None,
                   help="sample blocks per batch (default: all blocks in one batch)")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--warmups", type=int, default=0)
    p.add_argument("--out", required=True, help="predictions CSV output")
    p.add_argument("--report", default=None, help="benchmark report JSON output")
    p.add_argument("--unit-size", type=int, default=8,
                   help="trees per compilation unit (compiled engine)")
    p.add_argument("--partition-store", default=None,
                   help="directory for materialized model partitions")
    p.add_argument("--max-depth", type=int, default=model.DEFAULT_MAX_DEPTH)


def _config_from_args(args: argparse.Namespace) -> bench.BenchConfig:
    return bench.BenchConfig(
        model_path=args.model, data_path=args.data, out_path=args.out,
        data_format=args.data_format, engine=args.engine, plan_kind=args.plan,
        workers=args.workers, block_rows=args.block_rows,
        batch_blocks=args.batch_blocks, repeats=args.repeats, warmups=args.warmups,
        report_path=args.report, unit_size=args.unit_size,
        partition_store=args.partition_store, max_depth=args.max_depth)


def _cmd_run(args: argparse.Namespace) -> int:
    report = bench.run(_config_from_args(args))
    agg = report.aggregate
    print(json.dumps({
        "end_to_end_ms_median": agg["end_to_end_ms"]["median"],
        "load_ms_median": agg["load_ms"]["median"],
        "infer_ms_median": agg["infer_ms"]["median"],
        "write_ms_median": agg["write_ms"]["median"],
        "prediction_hash": report.prediction_hash,
        "rows": report.rows_written,
    }, sort_keys=True))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    axis = args.axis.replace("-", "_")
    raw_values = [v for v in args.values.split(",") if v]
    if axis == "engine":
        values: list = raw_values
    else:
        try:
            values = [int(v) for v in raw_values]
        except ValueError:
            raise ConfigError(f"axis {axis} takes integer values, got {args.values!r}") from None
    reports = bench.sweep(_config_from_args(args), axis, values, args.table)
    for value, rep in zip(values, reports):
        print(f"{axis}={value}: end_to_end_ms_median="
              f"{rep.aggregate['end_to_end_ms']['median']:.3f} "
              f"hash={rep.prediction_hash}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    forest = synth.synth_forest(args.trees, args.depth, args.num_features,
                                args.seed, model_kind=args.model_kind)
    synth.write_model(forest, args.out_model)
    summary = {"model": args.out_model, "trees": forest.n_trees,
               "num_features": forest.num_features,
               "max_depth": max(model.tree_depth(t) for t in forest.trees)}
    if args.out_csv:
        summary["csv_rows"] = synth.write_csv(args.out_csv, args.rows,
                                              args.num_features, args.missing_rate,
                                              args.seed)
        summary["csv"] = args.out_csv
    if args.out_libsvm:
        summary["libsvm_rows"] = synth.write_libsvm(args.out_libsvm, args.rows,
                                                    args.num_features, args.sparsity,
                                                    args.seed)
        summary["libsvm"] = args.out_libsvm
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    with open(args.model, "rb") as fh:
        payload = fh.read()
    if args.model.endswith(".dfp") or payload.lstrip().startswith(b"model "):
        from .engines.compiled import program_to_forest
        forest = program_to_forest(payload.decode("utf-8"))
    else:
        forest = model.parse_model(payload, max_depth=args.max_depth)
    violations = model.validate(forest, max_depth=args.max_depth)
    print(json.dumps({
        "model_kind": forest.model_kind,
        "num_features": forest.num_features,
        "base_score": forest.base_score,
        "n_trees": forest.n_trees,
        "total_nodes": sum(len(t.nodes) for t in forest.trees),
        "max_depth": max(model.tree_depth(t) for t in forest.trees),
        "sibling_adjacent_trees": sum(t.sibling_adjacent for t in forest.trees),
        "violations": [str(v) for v in violations],
    }, sort_keys=True))
    return 0


def _cmd_compile(args: argparse.Namespace) -> int:
    with open(args.model, "rb") as fh:
        forest = model.parse_model(fh.read(), max_depth=args.max_depth)
    program, cost = measure_compile_cost(forest, args.unit_size)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(program.render())
    print(json.dumps({"out": args.out, "duration_ms": cost.duration_ms,
                      "emitted_bytes": cost.emitted_bytes, "units": cost.n_units,
                      "trees": cost.n_trees}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forestserve",
        description="Decision forest inference engines and benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one benchmarked end-to-end inference")
    _add_bench_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="repeat a run across one axis")
    _add_bench_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True,
                         choices=("batch-blocks", "block-rows", "workers", "engine"))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--table", default=None, help="combined sweep CSV output")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_synth = sub.add_parser("synth", help="generate a synthetic model and dataset")
    p_synth.add_argument("--trees", type=int, required=True)
    p_synth.add_argument("--depth", type=int, required=True)
    p_synth.add_argument("--num-features", type=int, required=True)
    p_synth.add_argument("--rows", type=int, default=0)
    p_synth.add_argument("--sparsity", type=float, default=0.8,
                         help="fraction of absent columns per sparse row")
    p_synth.add_argument("--missing-rate", type=float, default=0.0,
                         help="fraction of missing cells in the dense CSV")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--model-kind", default=model.GRADIENT_BOOSTING,
                         choices=model.MODEL_KINDS)
    p_synth.add_argument("--out-model", required=True)
    p_synth.add_argument("--out-csv", default=None)
    p_synth.add_argument("--out-libsvm", default=None)
    p_synth.set_defaults(func=_cmd_synth)

    p_inspect = sub.add_parser("inspect-model", help="summary and validation report")
    p_inspect.add_argument("--model", required=True)
    p_inspect.add_argument("--max-depth", type=int, default=model.DEFAULT_MAX_DEPTH)
    p_inspect.set_defaults(func=_cmd_inspect)

    p_compile = sub.add_parser("compile", help="emit decision-program text (.dfp)")
    p_compile.add_argument("--model", required=True)
    p_compile.add_argument("--out", required=True)
    p_compile.add_argument("--unit-size", type=int, default=8)
    p_compile.add_argument("--max-depth", type=int, default=model.DEFAULT_MAX_DEPTH)
    p_compile.set_defaults(func=_cmd_compile)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ForestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
