"""scikit-learn conversion: records, validation gate, agreement, missing values."""

import json
import pickle

import numpy as np
import pytest
from sklearn.ensemble import (
    GradientBoostingClassifier,
    GradientBoostingRegressor,
    RandomForestClassifier,
    RandomForestRegressor,
)

from forest_exporter.cli import main
from forest_exporter.errors import UnsupportedModelType
from forest_exporter.export import export
from forest_exporter.sklearn_convert import sklearn_raw_scores
from forest_exporter.verify import check_agreement, random_samples

from conftest import inspect_model, serve_raw, train_data


class TestExportRecord:
    def test_single_stump_is_three_nodes(self, tmp_path):
        X, y = train_data(seed=5)
        stump = GradientBoostingClassifier(n_estimators=1, max_depth=1,
                                           random_state=0).fit(X, y)
        out = str(tmp_path / "stump.json")
        record = export(stump, "sklearn", out, seed=1)
        assert record.tree_count == 1 and record.max_depth == 1
        doc = json.loads(open(out).read())
        assert len(doc["trees"][0]["nodes"]) == 3

    def test_record_matches_emitted_json(self, rf_model, tmp_path):
        out = str(tmp_path / "rf.json")
        record = export(rf_model, "sklearn", out, seed=2)
        doc = json.loads(open(out).read())
        assert record.tree_count == len(doc["trees"]) == 10
        assert record.max_depth <= 8
        assert record.model_kind == doc["model_kind"] == "random_forest"
        assert record.conversion_ms > 0 and record.verified


class TestValidationGate:
    @pytest.mark.parametrize("fixture", ["rf_model", "gb_model"])
    def test_emitted_json_has_zero_violations(self, request, fixture, tmp_path):
        estimator = request.getfixturevalue(fixture)
        out = str(tmp_path / "m.json")
        export(estimator, "sklearn", out, verify=False)
        assert inspect_model(out)["violations"] == []


class TestAgreement:
    def test_random_forest_10_trees_depth8(self, rf_model, tmp_path):
        out = str(tmp_path / "rf.json")
        record = export(rf_model, "sklearn", out, seed=7)
        assert record.verified and record.worst_relative_error <= 1e-6

    def test_gradient_boosting_10_trees_depth8(self, gb_model, tmp_path):
        out = str(tmp_path / "gb.json")
        record = export(gb_model, "sklearn", out, seed=8)
        assert record.verified and record.worst_relative_error <= 1e-6

    def test_regressors_agree(self, tmp_path):
        X, y = train_data(seed=9)
        target = X[:, 0] * 2.0 + np.sin(X[:, 1])
        for cls in (RandomForestRegressor, GradientBoostingRegressor):
            reg = cls(n_estimators=6, max_depth=5, random_state=0).fit(X, target)
            record = export(reg, "sklearn", str(tmp_path / "r.json"), seed=10)
            assert record.verified and record.worst_relative_error <= 1e-6


class TestMissingValues:
    def test_nan_routed_like_source_library(self, rf_nan_model, tmp_path):
        out = str(tmp_path / "rf_nan.json")
        export(rf_nan_model, "sklearn", out, verify=False)
        samples = random_samples(8, n=1000, seed=11, missing_rate=0.15)
        source = sklearn_raw_scores(rf_nan_model, samples)
        served = serve_raw(out, samples)
        check_agreement(source, served, "nan routing")

    def test_exported_defaults_are_explicit(self, rf_nan_model, tmp_path):
        out = tmp_path / "rf_nan.json"
        export(rf_nan_model, "sklearn", str(out), verify=False)
        doc = json.loads(out.read_text())
        defaults = {n["default"] for t in doc["trees"] for n in t["nodes"]
                    if n["kind"] == "internal"}
        assert defaults <= {"left", "right"} and defaults  # both sides occur in practice


class TestUnsupported:
    def test_multiclass_rejected(self, tmp_path):
        X, _ = train_data(seed=12)
        y3 = (X[:, 0] > 0.5).astype(int) + (X[:, 1] > 0).astype(int)
        clf = RandomForestClassifier(n_estimators=3, max_depth=3,
                                     random_state=0).fit(X, y3)
        with pytest.raises(UnsupportedModelType):
            export(clf, "sklearn", str(tmp_path / "m.json"), verify=False)

    def test_non_tree_model_rejected(self, tmp_path):
        from sklearn.linear_model import LogisticRegression
        X, y = train_data(seed=13)
        with pytest.raises(UnsupportedModelType):
            export(LogisticRegression().fit(X, y), "sklearn",
                   str(tmp_path / "m.json"), verify=False)


class TestCli:
    def test_pickle_roundtrip_through_cli(self, rf_model, tmp_path, capsys):
        pkl = tmp_path / "rf.pkl"
        pkl.write_bytes(pickle.dumps(rf_model))
        out = str(tmp_path / "rf.json")
        code = main(["export", "--in", str(pkl), "--format", "sklearn",
                     "--out", out, "--samples", "200"])
        assert code == 0
        record = json.loads(capsys.readouterr().out)
        assert record["tree_count"] == 10 and record["verified"]
        assert inspect_model(out)["violations"] == []

    def test_bad_input_exits_nonzero(self, tmp_path, capsys):
        bad = tmp_path / "bad.pkl"
        bad.write_bytes(pickle.dumps({"not": "a model"}))
        code = main(["export", "--in", str(bad), "--format", "sklearn",
                     "--out", str(tmp_path / "m.json")])
        assert code == 1
