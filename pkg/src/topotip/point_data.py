"""Point-cloud containers, squared-distance kernels, resampling, and sequence CSV I/O.

Matrices are plain ``numpy.ndarray``; the structured containers below are
immutable after construction (their arrays are marked read-only), so they can
be shared freely across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

FLOAT_FMT = "%.17g"


class SequenceSchemaError(ValueError):
    """The CSV header or frame structure does not match the sequence schema."""


class SequenceParseError(ValueError):
    """A CSV row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of N points in R^d with optional frame parameter and labels."""

    coords: np.ndarray
    frame_param: Optional[float] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[0] < 1 or coords.shape[1] < 1:
            raise ValueError("coords must be a nonempty N x d matrix")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords must be finite")
        object.__setattr__(self, "coords", _freeze(coords))
        if self.frame_param is not None:
            object.__setattr__(self, "frame_param", float(self.frame_param))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (coords.shape[0],):
                raise ValueError("labels must have one integer entry per point")
            object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True)
class SequenceDataset:
    """An ordered list of frames sharing a common ambient dimension."""

    frames: tuple[PointCloud, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 1:
            raise ValueError("a sequence needs at least one frame")
        d = frames[0].dim
        if any(f.dim != d for f in frames):
            raise SequenceSchemaError("all frames must share the same dimension")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def dim(self) -> int:
        return self.frames[0].dim

    @property
    def params(self) -> list[Optional[float]]:
        return [f.frame_param for f in self.frames]


def pairwise_sq_dist(cloud: PointCloud) -> np.ndarray:
    """Squared Euclidean distance matrix of a cloud: D[i, j] = ||x_i - x_j||^2.

    Symmetric with an exactly-zero diagonal; output array is N x N float64.
    """
    d = cdist(cloud.coords, cloud.coords, "sqeuclidean")
    np.fill_diagonal(d, 0.0)
    return d


def resample(cloud: PointCloud, m: int, seed: int) -> PointCloud:
    """Resample a cloud to m points, deterministically for a given seed.

    m <= N draws uniformly without replacement, m > N with replacement.
    Labels travel with their points.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    n = cloud.n_points
    idx = rng.choice(n, size=m, replace=(m > n))
    labels = cloud.labels[idx] if cloud.labels is not None else None
    return PointCloud(cloud.coords[idx], cloud.frame_param, labels)


def standardize(cloud: PointCloud) -> PointCloud:
    """Shift and scale to zero mean and unit variance per coordinate (opt-in)."""
    x = cloud.coords
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    return PointCloud((x - mu) / sd, cloud.frame_param, cloud.labels)


# --- sequence CSV schema: frame,id,x0..x{d-1}[,label][,param] -----------------


def _parse_header(header: list[str]) -> tuple[int, bool, bool]:
    cols = [c.strip() for c in header]
    if len(cols) < 3 or cols[0] != "frame" or cols[1] != "id":
        raise SequenceSchemaError(
            f"header must start with 'frame,id,x0,...': got {cols[:3]}"
        )
    has_label = "label" in cols
    has_param = "param" in cols
    n_coord = len(cols) - 2 - int(has_label) - int(has_param)
    if n_coord < 1:
        raise SequenceSchemaError("no coordinate columns found")
    expected = ["frame", "id"] + [f"x{k}" for k in range(n_coord)]
    if has_label:
        expected.append("label")
    if has_param:
        expected.append("param")
    if cols != expected:
        raise SequenceSchemaError(f"unexpected header layout {cols}, want {expected}")
    return n_coord, has_label, has_param


def load_sequence(path, format: str = "csv") -> SequenceDataset:
    """Load a frame sequence from disk; only the CSV format is supported."""
    if format != "csv":
        raise ValueError(f"unsupported sequence format: {format!r}")
    groups: dict[int, list[tuple[int, list[float], Optional[int], Optional[float]]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SequenceSchemaError("empty file") from None
        d, has_label, has_param = _parse_header(header)
        n_fields = 2 + d + int(has_label) + int(has_param)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_fields:
                raise SequenceParseError(
                    line_no, f"expected {n_fields} fields, got {len(row)}"
                )
            try:
                frame = int(row[0])
                pid = int(row[1])
                coords = [float(v) for v in row[2 : 2 + d]]
                pos = 2 + d
                label = int(row[pos]) if has_label else None
                if has_label:
                    pos += 1
                param = float(row[pos]) if has_param else None
            except ValueError as exc:
                raise SequenceParseError(line_no, str(exc)) from None
            if not all(np.isfinite(coords)):
                raise SequenceParseError(line_no, "non-finite coordinate")
            groups.setdefault(frame, []).append((pid, coords, label, param))
    if not groups:
        raise SequenceSchemaError("no data rows")
    frames = []
    for frame in sorted(groups):
        rows = sorted(groups[frame], key=lambda r: r[0])
        coords = np.array([r[1] for r in rows], dtype=np.float64)
        labels = None
        if has_label:
            labels = np.array([r[2] for r in rows], dtype=np.int64)
        param = rows[0][3] if has_param else None
        frames.append(PointCloud(coords, param, labels))
    return SequenceDataset(tuple(frames))


def save_sequence(dataset: SequenceDataset, path) -> None:
    """Write a sequence as CSV with 17-significant-digit reals."""
    has_label = all(f.labels is not None for f in dataset.frames)
    has_param = all(f.frame_param is not None for f in dataset.frames)
    d = dataset.dim
    header = ["frame", "id"] + [f"x{k}" for k in range(d)]
    if has_label:
        header.append("label")
    if has_param:
        header.append("param")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for fi, frame in enumerate(dataset.frames):
            for pid in range(frame.n_points):
                row = [str(fi), str(pid)]
                row += [FLOAT_FMT % v for v in frame.coords[pid]]
                if has_label:
                    row.append(str(int(frame.labels[pid])))
                if has_param:
                    row.append(FLOAT_FMT % frame.frame_param)
                writer.writerow(row)


def save_table(table, path) -> None:
    """Write an indicator table as CSV (delegates to the table's writer)."""
    table.save(path)
