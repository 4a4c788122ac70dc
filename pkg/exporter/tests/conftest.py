"""Trained-model fixtures and serving-side helpers for exporter tests."""

from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest


def train_data(seed=0, rows=600, num_features=8, with_nan=False):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, num_features))
    y = (X[:, 0] * X[:, 1] + X[:, 2] > 0).astype(int)
    if with_nan:
        X = X.copy()
        X[rng.random(X.shape) < 0.1] = np.nan
    return X, y


@pytest.fixture(scope="session")
def rf_model():
    from sklearn.ensemble import RandomForestClassifier
    X, y = train_data(seed=1)
    return RandomForestClassifier(n_estimators=10, max_depth=8,
                                  random_state=0).fit(X, y)


@pytest.fixture(scope="session")
def gb_model():
    from sklearn.ensemble import GradientBoostingClassifier
    X, y = train_data(seed=2)
    return GradientBoostingClassifier(n_estimators=10, max_depth=8,
                                      random_state=0).fit(X, y)


@pytest.fixture(scope="session")
def rf_nan_model():
    from sklearn.ensemble import RandomForestClassifier
    X, y = train_data(seed=3, with_nan=True)
    return RandomForestClassifier(n_estimators=8, max_depth=6,
                                  random_state=0).fit(X, y)


def serve_raw(model_json: str, samples: np.ndarray) -> np.ndarray:
    """Raw scores from the serving CLI (the primary's external surface)."""
    from forest_exporter.verify import serve_raw_scores
    return serve_raw_scores(model_json, samples)


def inspect_model(model_json: str) -> dict:
    proc = subprocess.run(
        [sys.executable, "-m", "forestserve.cli", "inspect-model",
         "--model", model_json],
        capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)
