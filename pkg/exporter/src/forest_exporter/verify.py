"""Agreement check: feed random samples through the serving CLI and compare
its raw scores with the source library's, within 1e-6 relative.

The serving side is driven strictly through its external surface: the model
JSON goes in via --model, samples via a CSV file (NaN cells spelled `nan`),
and raw scores come back as hex floats in the predictions CSV.
"""

from __future__ import annotations

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConversionMismatch, ExportError

RTOL = 1e-6


def serve_raw_scores(model_json: str, samples: np.ndarray) -> np.ndarray:
    """Run the serving CLI's reference engine over the samples."""
    with tempfile.TemporaryDirectory(prefix="forest_export_") as tmp:
        data = Path(tmp) / "samples.csv"
        with open(data, "w", encoding="utf-8", newline="\n") as fh:
            for row in samples:
                fh.write(",".join("nan" if np.isnan(v) else repr(float(v))
                                  for v in row))
                fh.write("\n")
        preds = Path(tmp) / "preds.csv"
        cmd = [sys.executable, "-m", "forestserve.cli", "run",
               "--model", model_json, "--data", str(data), "--engine", "naive",
               "--repeats", "1", "--out", str(preds)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExportError(
                f"serving CLI failed (exit {proc.returncode}): {proc.stderr.strip()}")
        raws = []
        with open(preds, "r", encoding="utf-8") as fh:
            next(fh)  # header
            for line in fh:
                raws.append(float.fromhex(line.split(",")[1]))
        return np.array(raws, dtype=np.float64)


def validate_with_serving_cli(model_json: str) -> list[str]:
    """The serving side's own validation verdict for the emitted document."""
    import json as _json

    cmd = [sys.executable, "-m", "forestserve.cli", "inspect-model",
           "--model", model_json]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ExportError(
            f"emitted model rejected by the serving CLI: {proc.stderr.strip()}")
    return _json.loads(proc.stdout)["violations"]


def check_agreement(source_raw: np.ndarray, served_raw: np.ndarray,
                    context: str) -> float:
    source_raw = np.asarray(source_raw, dtype=np.float64)
    err = np.abs(served_raw - source_raw)
    bound = RTOL * (1.0 + np.abs(source_raw))
    worst = float((err / bound).max()) * RTOL
    if (err > bound).any():
        bad = int(np.argmax(err - bound))
        raise ConversionMismatch(
            f"{context}: row {bad}: source {source_raw[bad]!r} vs served "
            f"{served_raw[bad]!r} (relative error {worst:.3e} > {RTOL})")
    return worst


def random_samples(num_features: int, n: int = 1000, seed: int = 0,
                   missing_rate: float = 0.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    samples = rng.normal(size=(n, num_features))
    if missing_rate > 0.0:
        samples[rng.random(samples.shape) < missing_rate] = np.nan
    return samples
