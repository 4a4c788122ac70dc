"""Top-level export flow: convert, emit interchange JSON, validate it through
the serving CLI, and (when the source library can score) check agreement."""

from __future__ import annotations

import json
import pickle
import time
from dataclasses import asdict, dataclass

from .errors import ConversionMismatch, UnsupportedModelType
from .interchange import document, reindex_preorder
from .lightgbm_convert import (
    convert_lightgbm_json,
    lightgbm_raw_scores,
    load_lightgbm_file,
)
from .sklearn_convert import convert_sklearn, sklearn_raw_scores
from .verify import (
    check_agreement,
    random_samples,
    serve_raw_scores,
    validate_with_serving_cli,
)
from .xgboost_convert import (
    convert_xgboost_json,
    load_xgboost_file,
    xgboost_raw_scores,
)

FORMATS = ("sklearn", "xgboost", "lightgbm")


@dataclass
class ExportRecord:
    source_library: str
    source_version: str
    model_kind: str
    tree_count: int
    max_depth: int
    conversion_ms: float
    verified: bool
    worst_relative_error: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _source_version(fmt: str, doc) -> str:
    if fmt == "sklearn":
        import sklearn
        return sklearn.__version__
    if fmt == "xgboost":
        version = doc.get("version")
        return ".".join(str(v) for v in version) if version else "unknown"
    return str(doc.get("version", "unknown"))


def export(source, fmt: str, out_path: str, verify: bool = True,
           seed: int = 0, n_samples: int = 1000) -> ExportRecord:
    """Convert `source` (an estimator object, a pickle path for sklearn, or a
    model file path for xgboost/lightgbm) to interchange JSON at out_path.

    The emitted document is always validated through the serving CLI; the
    agreement check runs unless verify=False or the source cannot score.
    """
    if fmt not in FORMATS:
        raise UnsupportedModelType(f"unknown format {fmt!r}; choose from {FORMATS}")
    start = time.perf_counter()
    score_source = None
    if fmt == "sklearn":
        estimator = source
        if isinstance(source, str):
            with open(source, "rb") as fh:
                estimator = pickle.load(fh)
        trees, num_features, kind, base = convert_sklearn(estimator)
        version = _source_version(fmt, None)
        score_source = lambda samples: sklearn_raw_scores(estimator, samples)
    elif fmt == "xgboost":
        doc = load_xgboost_file(source)
        trees, num_features, kind, base = convert_xgboost_json(doc)
        version = _source_version(fmt, doc)
        if verify:
            score_source = _try_library_scorer(xgboost_raw_scores, source, "xgboost")
    else:
        doc = load_lightgbm_file(source)
        trees, num_features, kind, base = convert_lightgbm_json(doc)
        version = _source_version(fmt, doc)
        if verify:
            score_source = _try_library_scorer(lightgbm_raw_scores, source, "lightgbm")

    trees = [reindex_preorder(t) for t in trees]
    text = document(trees, num_features, kind, base)
    conversion_ms = (time.perf_counter() - start) * 1e3
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.write("\n")

    violations = validate_with_serving_cli(out_path)
    if violations:
        raise ConversionMismatch(f"emitted model fails validation: {violations}")

    worst = None
    verified = False
    if verify and score_source is not None:
        samples = random_samples(num_features, n=n_samples, seed=seed)
        worst = check_agreement(score_source(samples),
                                serve_raw_scores(out_path, samples),
                                context=f"{fmt} agreement")
        verified = True

    return ExportRecord(
        source_library=fmt,
        source_version=version,
        model_kind=kind,
        tree_count=len(trees),
        max_depth=max(t.max_depth() for t in trees),
        conversion_ms=conversion_ms,
        verified=verified,
        worst_relative_error=worst,
    )


def _try_library_scorer(scorer, path, name):
    try:
        __import__(name)
    except ImportError:
        return None
    return lambda samples: scorer(path, samples)
