"""Sample and prediction blocks: the unit of batching and vectorization.

A sample block is a 2D slab of rows x features plus a parallel missing-value
bitmap. Missingness is always carried by the bitmap; the value array holds
NaN at missing positions purely as a tripwire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid_block(raw: np.ndarray) -> np.ndarray:
    """Vectorized stable sigmoid: exp only of non-positive arguments."""
    raw = np.asarray(raw, dtype=np.float64)
    out = np.empty_like(raw)
    pos = raw >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-raw[pos]))
    e = np.exp(raw[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class SampleBlock:
    block_id: int
    row_offset: int
    values: np.ndarray  # (rows, num_features) float64, C-contiguous
    missing: np.ndarray  # (rows, num_features) bool

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.missing = np.ascontiguousarray(self.missing, dtype=bool)
        if self.values.shape != self.missing.shape or self.values.ndim != 2:
            raise ValueError("values and missing must be 2D arrays of the same shape")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def num_features(self) -> int:
        return self.values.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(self.missing.any())


@dataclass
class PredictionBlock:
    block_id: int
    row_offset: int
    raw_score: np.ndarray  # (rows,) float64
    probability: np.ndarray  # (rows,) float64

    @property
    def n_rows(self) -> int:
        return self.raw_score.shape[0]


def dense_block(values: np.ndarray, block_id: int = 0, row_offset: int = 0) -> SampleBlock:
    values = np.asarray(values, dtype=np.float64)
    return SampleBlock(block_id=block_id, row_offset=row_offset, values=values,
                       missing=np.zeros(values.shape, dtype=bool))


def split_rows(values: np.ndarray, missing: np.ndarray, block_rows: int,
               first_block_id: int = 0, first_row: int = 0) -> list[SampleBlock]:
    """Chop a row matrix into blocks of at most block_rows rows, in row order."""
    blocks: list[SampleBlock] = []
    n = values.shape[0]
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        blocks.append(SampleBlock(
            block_id=first_block_id + len(blocks),
            row_offset=first_row + start,
            values=values[start:stop],
            missing=missing[start:stop],
        ))
    return blocks
