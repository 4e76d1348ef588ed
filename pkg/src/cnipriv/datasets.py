"""Example containers and dataset file formats.

CSV: one example per row, features first and the label last, no header.

Binary: a 16-byte little-endian header followed by the rows.

    offset  size  field
    0       4     magic b"CNID"
    4       4     d, uint32 (feature count)
    8       8     n, uint64 (example count)
    16      8*n*(d+1)  float64 rows, each d features then the label
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

MAGIC = b"CNID"
_HEADER = struct.Struct("<4sIQ")


@dataclass(frozen=True, eq=False)
class Example:
    features: np.ndarray
    label: float


class Dataset:
    """An ordered sequence of examples, stored as a feature matrix and labels.

    Order matters: the per-index privacy guarantees refer to positions.
    """

    def __init__(self, features, labels):
        x = np.asarray(features, dtype=float)
        y = np.asarray(labels, dtype=float)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValueError(f"need features (n, d) and labels (n,), got {x.shape} and {y.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        self.features = x
        self.labels = y

    @classmethod
    def from_examples(cls, examples) -> "Dataset":
        examples = list(examples)
        if not examples:
            raise ValueError("empty dataset")
        return cls(np.stack([e.features for e in examples]), [e.label for e in examples])

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.features[i], self.labels[i])
        return Example(self.features[i], float(self.labels[i]))

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self[i]

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.vstack([self.features, other.features]),
                       np.concatenate([self.labels, other.labels]))


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for x, y in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def read_csv(path) -> Dataset:
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    if rows.shape[1] < 2:
        raise ValueError("CSV rows need at least one feature and a label")
    return Dataset(rows[:, :-1], rows[:, -1])


def write_binary(data: Dataset, path) -> None:
    n, d = data.features.shape
    body = np.hstack([data.features, data.labels[:, None]]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, d, n))
        fh.write(body.tobytes())


def read_binary(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for header")
    magic, d, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    expected = _HEADER.size + 8 * n * (d + 1)
    if len(raw) != expected:
        raise ValueError(f"expected {expected} bytes for n={n}, d={d}, got {len(raw)}")
    rows = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, d + 1)
    return Dataset(rows[:, :-1].astype(float), rows[:, -1].astype(float))


def read_dataset(path) -> Dataset:
    """Reads CSV or binary, chosen by the file's magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    return read_binary(path) if head == MAGIC else read_csv(path)
