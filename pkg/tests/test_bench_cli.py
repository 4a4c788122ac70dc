"""Benchmark harness and CLI behavior."""

import dataclasses
import json

import pytest

from forestserve import bench, synth
from forestserve.bench import BenchConfig, hash_prediction_file, run, sweep
from forestserve.cli import main
from forestserve.errors import ConfigError


@pytest.fixture(scope="module")
def workload(tmp_path_factory):
    root = tmp_path_factory.mktemp("workload")
    model_path = root / "model.json"
    data_path = root / "data.csv"
    synth.write_model(synth.synth_forest(12, 6, 8, seed=1), str(model_path))
    synth.write_csv(str(data_path), 400, 8, missing_rate=0.05, seed=2)
    return {"model": str(model_path), "data": str(data_path), "root": root}


def config(workload, tmp_path, **kw):
    defaults = dict(model_path=workload["model"], data_path=workload["data"],
                    out_path=str(tmp_path / "preds.csv"), repeats=1)
    defaults.update(kw)
    return BenchConfig(**defaults)


class TestRun:
    def test_phases_present_and_positive(self, workload, tmp_path):
        report = run(config(workload, tmp_path,
                            report_path=str(tmp_path / "report.json")))
        [t] = report.repeats
        assert t.load_ms > 0 and t.infer_ms > 0 and t.write_ms > 0
        assert t.end_to_end_ms >= t.load_ms + t.infer_ms + t.write_ms - 1.0
        on_disk = json.loads((tmp_path / "report.json").read_text())
        assert on_disk["schema_version"] == 1
        assert set(on_disk["aggregate"]) == {"load_ms", "infer_ms", "write_ms",
                                             "end_to_end_ms"}
        assert on_disk["one_time_costs"]["model_parse_ms"] > 0
        assert on_disk["rows_written"] == 400

    def test_warmups_excluded_from_aggregate(self, workload, tmp_path):
        report = run(config(workload, tmp_path, repeats=5, warmups=1))
        assert len(report.repeats) == 5

    def test_same_config_same_predictions(self, workload, tmp_path):
        a = run(config(workload, tmp_path))
        b = run(config(workload, tmp_path))
        assert a.prediction_hash == b.prediction_hash

    def test_compiled_engine_reports_one_time_compile(self, workload, tmp_path):
        report = run(config(workload, tmp_path, engine="compiled"))
        assert report.one_time_costs["compile_ms"] > 0
        assert report.one_time_costs["compiled_bytes"] > 0
        assert "compile_ms" not in report.repeats[0].as_dict()

    def test_bad_engine_is_config_error(self, workload, tmp_path):
        with pytest.raises(ConfigError):
            run(config(workload, tmp_path, engine="magic"))

    def test_quickscorer_relation_plan_rejected(self, workload, tmp_path):
        with pytest.raises(ConfigError):
            run(config(workload, tmp_path, engine="quickscorer",
                       plan_kind="relation_centric"))


class TestSweep:
    def test_workers_sweep_hash_invariant(self, workload, tmp_path):
        table = tmp_path / "table.csv"
        reports = sweep(config(workload, tmp_path, engine="predicated"),
                        "workers", [1, 2, 4], str(table))
        hashes = {r.prediction_hash for r in reports}
        assert len(hashes) == 1
        lines = table.read_text().splitlines()
        assert lines[0] == "axis_value,load_ms,infer_ms,write_ms,end_to_end_ms,prediction_hash"
        assert len(lines) == 4

    def test_block_rows_sweep_runs_both(self, workload, tmp_path):
        reports = sweep(config(workload, tmp_path), "block_rows", [1, 256])
        assert reports[0].prediction_hash == reports[1].prediction_hash

    def test_engine_sweep_hashes_equal_on_dense_shallow_model(self, tmp_path):
        model_path = tmp_path / "m.json"
        data_path = tmp_path / "d.csv"
        synth.write_model(synth.synth_forest(6, 5, 6, seed=3), str(model_path))
        synth.write_csv(str(data_path), 200, 6, missing_rate=0.0, seed=4)
        cfg = BenchConfig(model_path=str(model_path), data_path=str(data_path),
                          out_path=str(tmp_path / "p.csv"), repeats=1)
        reports = sweep(cfg, "engine",
                        ["naive", "predicated", "quickscorer", "tensor", "compiled"])
        assert len({r.prediction_hash for r in reports}) == 1

    def test_empty_values_rejected(self, workload, tmp_path):
        with pytest.raises(ConfigError):
            sweep(config(workload, tmp_path), "workers", [])


class TestParallelismTrend:
    def test_records_both_plans_and_ratio(self, workload, tmp_path):
        out = bench.parallelism_trend(
            config(workload, tmp_path, engine="predicated", workers=2),
            str(tmp_path / "trend.json"))
        assert set(out["plans"]) == {"udf_centric", "relation_centric"}
        assert out["model_over_data_parallel_throughput_ratio"] > 0
        assert (out["plans"]["udf_centric"]["prediction_hash"]
                == out["plans"]["relation_centric"]["prediction_hash"])
        assert json.loads((tmp_path / "trend.json").read_text())["plans"]


class TestCli:
    def test_run_and_exit_zero(self, workload, tmp_path, capsys):
        code = main(["run", "--model", workload["model"], "--data", workload["data"],
                     "--out", str(tmp_path / "p.csv"), "--repeats", "1"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["rows"] == 400 and "prediction_hash" in out

    def test_missing_model_exits_one(self, workload, tmp_path, capsys):
        code = main(["run", "--model", str(tmp_path / "nope.json"),
                     "--data", workload["data"], "--out", str(tmp_path / "p.csv")])
        assert code == 1

    def test_bad_repeats_exits_two(self, workload, tmp_path):
        code = main(["run", "--model", workload["model"], "--data", workload["data"],
                     "--out", str(tmp_path / "p.csv"), "--repeats", "0"])
        assert code == 2

    def test_bad_flag_exits_two(self, workload, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["run", "--model", workload["model"], "--data", workload["data"],
                  "--out", str(tmp_path / "p.csv"), "--engine", "magic"])
        assert err.value.code == 2

    def test_synth_then_inspect(self, tmp_path, capsys):
        model_path = str(tmp_path / "m.json")
        assert main(["synth", "--trees", "4", "--depth", "5", "--num-features", "6",
                     "--seed", "5", "--out-model", model_path]) == 0
        assert main(["inspect-model", "--model", model_path]) == 0
        info = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert info["n_trees"] == 4 and info["violations"] == []

    def test_compile_writes_program(self, workload, tmp_path, capsys):
        out = str(tmp_path / "prog.dfp")
        assert main(["compile", "--model", workload["model"], "--out", out]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["emitted_bytes"] > 0
        text = open(out).read()
        assert text.startswith("model gradient_boosting")

    def test_inspect_reads_program_text_back(self, workload, tmp_path, capsys):
        out = str(tmp_path / "prog.dfp")
        assert main(["compile", "--model", workload["model"], "--out", out]) == 0
        capsys.readouterr()
        assert main(["inspect-model", "--model", out]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["n_trees"] == 12 and info["violations"] == []

    def test_sweep_writes_table(self, workload, tmp_path):
        table = str(tmp_path / "t.csv")
        assert main(["sweep", "--model", workload["model"], "--data", workload["data"],
                     "--out", str(tmp_path / "p.csv"), "--repeats", "1",
                     "--axis", "workers", "--values", "1,2", "--table", table]) == 0
        assert len(open(table).read().splitlines()) == 3


class TestPredictionHash:
    def test_hash_is_64_bit_hex(self, workload, tmp_path):
        report = run(config(workload, tmp_path))
        assert len(report.prediction_hash) == 16
        int(report.prediction_hash, 16)
        assert hash_prediction_file(report.config.out_path) == report.prediction_hash
