"""Dataset ingestion and output: dense CSV with missing values, LIBSVM sparse
rows, a paged binary block store standing in for native database storage, and
the prediction writer.

Missing vs zero: an empty CSV field or a nan token is a MISSING entry; a
column absent from a LIBSVM row is ZERO. The two must never be conflated.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .blocks import PredictionBlock, SampleBlock
from .errors import (
    IndexOutOfRange,
    IoFailure,
    NonMonotonicIndices,
    NonNumericField,
    RowWidthMismatch,
    StoreCorrupt,
)

DEFAULT_BLOCK_ROWS = 256
DEFAULT_PAGE_SIZE = 1 << 20

CSV_FORMAT = "csv"
LIBSVM_FORMAT = "libsvm"
NATIVE_FORMAT = "native"
DATA_FORMATS = (CSV_FORMAT, LIBSVM_FORMAT, NATIVE_FORMAT)

_MAGIC = b"FBLK"
_STORE_VERSION = 1
_FILE_HEADER = struct.Struct("<4sIIIQQ")  # magic, version, num_features, block_rows, page_size, page_count
_PAGE_HEADER = struct.Struct("<QII")  # payload_len, crc32, block_count
_BLOCK_HEADER = struct.Struct("<qqII")  # block_id, row_offset, n_rows, num_features


@dataclass(frozen=True)
class DatasetHandle:
    source: str  # csv | libsvm | native
    path: str
    num_features: int
    block_rows: int = DEFAULT_BLOCK_ROWS
    row_count: int | None = None

    def __post_init__(self):
        if self.source not in DATA_FORMATS:
            raise ValueError(f"unknown dataset source {self.source!r}")
        if self.num_features <= 0 and self.source != NATIVE_FORMAT:
            raise ValueError("num_features must be positive")

    def iter_blocks(self) -> Iterator[SampleBlock]:
        if self.source == CSV_FORMAT:
            return load_csv(self.path, self.num_features, self.block_rows)
        if self.source == LIBSVM_FORMAT:
            return (block for block, _ in load_libsvm(self.path, self.num_features,
                                                      self.block_rows))
        return load_native(self.path)

    def load_blocks(self) -> list[SampleBlock]:
        return list(self.iter_blocks())


@dataclass(frozen=True)
class SparseRow:
    """1-based (column, value) pairs with strictly increasing columns."""

    pairs: tuple[tuple[int, float], ...]
    label: float | None = None


def _parse_csv_field(token: str, line_no: int) -> tuple[float, bool]:
    token = token.strip()
    if token == "" or token.lower() == "nan":
        return np.nan, True
    try:
        return float(token), False
    except ValueError:
        raise NonNumericField(f"line {line_no}: cannot parse field {token!r}") from None


def load_csv(path: str, num_features: int, block_rows: int = DEFAULT_BLOCK_ROWS
             ) -> Iterator[SampleBlock]:
    """Stream dense CSV rows as sample blocks, in file order.

    Empty fields and the token nan (any case) are missing entries.
    """
    values = np.empty((block_rows, num_features), dtype=np.float64)
    missing = np.empty((block_rows, num_features), dtype=bool)
    fill = 0
    block_id = 0
    row_offset = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != num_features:
                raise RowWidthMismatch(
                    f"line {line_no}: {len(fields)} fields, expected {num_features}")
            for c, token in enumerate(fields):
                values[fill, c], missing[fill, c] = _parse_csv_field(token, line_no)
            fill += 1
            if fill == block_rows:
                yield SampleBlock(block_id, row_offset, values[:fill].copy(),
                                  missing[:fill].copy())
                row_offset += fill
                block_id += 1
                fill = 0
    if fill:
        yield SampleBlock(block_id, row_offset, values[:fill].copy(),
                          missing[:fill].copy())


def parse_libsvm_line(line: str, num_features: int, line_no: int) -> SparseRow:
    tokens = line.split()
    label = float(tokens[0])
    pairs: list[tuple[int, float]] = []
    prev = 0
    for token in tokens[1:]:
        try:
            col_text, val_text = token.split(":", 1)
            col = int(col_text)
            val = float(val_text)
        except ValueError:
            raise NonNumericField(f"line {line_no}: cannot parse pair {token!r}") from None
        if not (1 <= col <= num_features):
            raise IndexOutOfRange(
                f"line {line_no}: column {col} outside [1, {num_features}]")
        if col <= prev:
            raise NonMonotonicIndices(
                f"line {line_no}: column {col} after {prev}")
        prev = col
        if val != 0.0:
            pairs.append((col, val))
    return SparseRow(pairs=tuple(pairs), label=label)


def load_libsvm(path: str, num_features: int, block_rows: int = DEFAULT_BLOCK_ROWS
                ) -> Iterator[tuple[SampleBlock, np.ndarray]]:
    """Stream LIBSVM rows densified into blocks, with per-block label arrays.

    Absent columns densify to ZERO (format semantics), never to missing.
    """
    values = np.zeros((block_rows, num_features), dtype=np.float64)
    labels = np.empty(block_rows, dtype=np.float64)
    fill = 0
    block_id = 0
    row_offset = 0

    def emit(n: int) -> tuple[SampleBlock, np.ndarray]:
        block = SampleBlock(block_id, row_offset, values[:n].copy(),
                            np.zeros((n, num_features), dtype=bool))
        return block, labels[:n].copy()

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = parse_libsvm_line(line, num_features, line_no)
            values[fill] = 0.0
            for col, val in row.pairs:
                values[fill, col - 1] = val
            labels[fill] = row.label if row.label is not None else np.nan
            fill += 1
            if fill == block_rows:
                yield emit(fill)
                row_offset += fill
                block_id += 1
                fill = 0
    if fill:
        yield emit(fill)


# --- native paged store -------------------------------------------------------

def _encode_block(block: SampleBlock) -> bytes:
    head = _BLOCK_HEADER.pack(block.block_id, block.row_offset,
                              block.n_rows, block.num_features)
    bits = np.packbits(block.missing, axis=None).tobytes()
    return head + block.values.tobytes() + bits


def _decode_block(buf: memoryview, pos: int) -> tuple[SampleBlock, int]:
    block_id, row_offset, n_rows, nf = _BLOCK_HEADER.unpack_from(buf, pos)
    pos += _BLOCK_HEADER.size
    n_values = n_rows * nf
    values = np.frombuffer(buf, dtype=np.float64, count=n_values, offset=pos)
    pos += n_values * 8
    n_bits = (n_values + 7) // 8
    packed = np.frombuffer(buf, dtype=np.uint8, count=n_bits, offset=pos)
    pos += n_bits
    missing = np.unpackbits(packed, count=n_values).astype(bool)
    return SampleBlock(block_id, row_offset,
                       values.reshape(n_rows, nf).copy(),
                       missing.reshape(n_rows, nf)), pos


def store_native(blocks: Iterable[SampleBlock], path: str,
                 page_size: int = DEFAULT_PAGE_SIZE,
                 num_features: int | None = None,
                 block_rows: int = DEFAULT_BLOCK_ROWS) -> int:
    """Write blocks into fixed-size checksummed pages; returns page count.

    Whole blocks only: a page is flushed when the next block would overflow it.
    A single block larger than the page size gets a page of its own, padded to
    a multiple of page_size.
    """
    pages: list[bytes] = []
    payload = bytearray()
    count = 0

    def flush() -> None:
        nonlocal payload, count
        if not count:
            return
        head = _PAGE_HEADER.pack(len(payload), zlib.crc32(bytes(payload)), count)
        slot = max(page_size, _page_slot(len(payload) + _PAGE_HEADER.size, page_size))
        page = head + bytes(payload)
        pages.append(page + b"\0" * (slot - len(page)))
        payload = bytearray()
        count = 0

    for block in blocks:
        if num_features is None:
            num_features = block.num_features
        encoded = _encode_block(block)
        if count and _PAGE_HEADER.size + len(payload) + len(encoded) > page_size:
            flush()
        payload += encoded
        count += 1
    flush()

    header = _FILE_HEADER.pack(_MAGIC, _STORE_VERSION, num_features or 0,
                               block_rows, page_size, len(pages))
    with open(path, "wb") as fh:
        fh.write(header)
        for page in pages:
            fh.write(page)
    return len(pages)


def _page_slot(needed: int, page_size: int) -> int:
    return ((needed + page_size - 1) // page_size) * page_size


def read_native_header(path: str) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(_FILE_HEADER.size)
    if len(head) < _FILE_HEADER.size:
        raise StoreCorrupt(f"{path}: truncated header")
    magic, version, num_features, block_rows, page_size, page_count = _FILE_HEADER.unpack(head)
    if magic != _MAGIC:
        raise StoreCorrupt(f"{path}: bad magic {magic!r}")
    if version != _STORE_VERSION:
        raise StoreCorrupt(f"{path}: unsupported store version {version}")
    return {"num_features": num_features, "block_rows": block_rows,
            "page_size": page_size, "page_count": page_count}


def load_native(path: str) -> Iterator[SampleBlock]:
    """Stream blocks back from a paged store, verifying per-page checksums."""
    meta = read_native_header(path)
    page_size = meta["page_size"]
    with open(path, "rb") as fh:
        fh.seek(_FILE_HEADER.size)
        for p in range(meta["page_count"]):
            head = fh.read(_PAGE_HEADER.size)
            if len(head) < _PAGE_HEADER.size:
                raise StoreCorrupt(f"{path}: truncated page {p}")
            payload_len, crc, block_count = _PAGE_HEADER.unpack(head)
            slot = max(page_size, _page_slot(payload_len + _PAGE_HEADER.size, page_size))
            body = fh.read(slot - _PAGE_HEADER.size)
            if len(body) < payload_len:
                raise StoreCorrupt(f"{path}: truncated page {p}")
            payload = body[:payload_len]
            if zlib.crc32(payload) != crc:
                raise StoreCorrupt(f"{path}: checksum mismatch on page {p}")
            view = memoryview(payload)
            pos = 0
            for _ in range(block_count):
                block, pos = _decode_block(view, pos)
                yield block


# --- prediction output ---------------------------------------------------------

PREDICTIONS_HEADER = "row_index,raw_score,probability"


def write_predictions(blocks: Iterable[PredictionBlock], path: str) -> int:
    """CSV lines row_index,raw_score,probability; raw_score as hex-float so a
    re-read reproduces it bitwise. Returns rows written."""
    written = 0
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(PREDICTIONS_HEADER + "\n")
            for block in blocks:
                raw = block.raw_score
                prob = block.probability
                base = block.row_offset
                for i in range(block.n_rows):
                    fh.write(f"{base + i},{float(raw[i]).hex()},{float(prob[i])!r}\n")
                    written += 1
    except OSError as exc:
        raise IoFailure(f"cannot write predictions to {path}: {exc}") from exc
    return written


def read_predictions(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read back (row_index, raw_score, probability); raw scores are bitwise."""
    rows: list[int] = []
    raws: list[float] = []
    probs: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != PREDICTIONS_HEADER:
            raise IoFailure(f"{path}: unexpected header {header!r}")
        for line in fh:
            idx, raw_hex, prob = line.rstrip("\n").split(",")
            rows.append(int(idx))
            raws.append(float.fromhex(raw_hex))
            probs.append(float(prob))
    return (np.array(rows, dtype=np.int64), np.array(raws, dtype=np.float64),
            np.array(probs, dtype=np.float64))
