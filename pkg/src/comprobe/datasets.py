"""Dataset container, synthetic generators and the IDX image format parser."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadSpec, FormatError

__all__ = [
    "Dataset",
    "DatasetSpec",
    "generate_synthetic",
    "parse_idx",
    "save_dataset",
    "load_dataset",
    "halves_label_map",
    "parity_label_map",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SOURCES = ("gaussian_blobs", "two_moons", "mnist_idx")


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise BadSpec(f"inconsistent dataset shapes {self.x.shape} / {self.y.shape}")

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.n_classes)


@dataclass(frozen=True)
class DatasetSpec:
    source: str
    n_samples: int = 200
    dimension: int = 2
    n_classes: int = 2
    noise: float = 0.1
    separation: float = 3.0
    seed: int = 0
    label_map: dict | None = None
    images_path: str | None = None
    labels_path: str | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise BadSpec(f"unknown source {self.source!r}; expected one of {SOURCES}")
        if self.source != "mnist_idx" and self.n_samples < self.n_classes:
            raise BadSpec("need at least one sample per class")


def halves_label_map(n_classes: int) -> dict:
    """Low classes to 0, high classes to 1 (split at the midpoint)."""
    return {c: (0 if c < (n_classes + 1) // 2 else 1) for c in range(n_classes)}


def parity_label_map(n_classes: int) -> dict:
    return {c: c % 2 for c in range(n_classes)}


def _apply_label_map(y: np.ndarray, label_map: dict | None) -> tuple[np.ndarray, int]:
    if label_map is None:
        return y, int(y.max()) + 1 if y.size else 0
    mapped = np.array([label_map[int(v)] for v in y], dtype=np.int64)
    return mapped, int(mapped.max()) + 1


def generate_synthetic(spec: DatasetSpec) -> Dataset:
    """Deterministic per seed; classes are balanced up to rounding."""
    if spec.source == "mnist_idx":
        if not spec.images_path or not spec.labels_path:
            raise BadSpec("mnist_idx source needs images_path and labels_path")
        return parse_idx(spec.images_path, spec.labels_path, spec.label_map)
    rng = np.random.default_rng(spec.seed)
    if spec.source == "gaussian_blobs":
        c, d = spec.n_classes, spec.dimension
        means = rng.normal(size=(c, d))
        means /= np.linalg.norm(means, axis=1, keepdims=True)
        means *= spec.separation
        counts = [spec.n_samples // c + (1 if i < spec.n_samples % c else 0) for i in range(c)]
        xs, ys = [], []
        for ci, cnt in enumerate(counts):
            xs.append(means[ci] + spec.noise * rng.normal(size=(cnt, d)))
            ys.append(np.full(cnt, ci, dtype=np.int64))
        x = np.concatenate(xs)
        y = np.concatenate(ys)
    else:  # two_moons
        if spec.dimension != 2:
            raise BadSpec("two_moons is a 2-D dataset")
        if spec.n_classes != 2:
            raise BadSpec("two_moons has exactly 2 classes")
        n0 = spec.n_samples // 2
        n1 = spec.n_samples - n0
        t0 = np.linspace(0.0, np.pi, n0)
        t1 = np.linspace(0.0, np.pi, n1)
        outer = np.column_stack([np.cos(t0), np.sin(t0)])
        inner = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
        x = np.concatenate([outer, inner])
        x += spec.noise * rng.normal(size=x.shape)
        y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])

    perm = rng.permutation(len(y))
    y, n_classes = _apply_label_map(y[perm], spec.label_map)
    return Dataset(x[perm], y, n_classes)


def _read_header(payload: bytes, path: str, expected_magic: int, n_dims: int):
    head_len = 4 * (1 + n_dims)
    if len(payload) < head_len:
        raise FormatError(f"{path}: truncated IDX header")
    fields = struct.unpack(f">{1 + n_dims}I", payload[:head_len])
    if fields[0] != expected_magic:
        raise FormatError(
            f"{path}: bad IDX magic 0x{fields[0]:08x}, expected 0x{expected_magic:08x}"
        )
    return fields[1:], payload[head_len:]


def parse_idx(images_path: str, labels_path: str, label_map: dict | None = None) -> Dataset:
    """Parse big-endian IDX image/label files; pixels are scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        img_payload = fh.read()
    with open(labels_path, "rb") as fh:
        lab_payload = fh.read()

    (n, rows, cols), img_body = _read_header(
        img_payload, images_path, IDX_IMAGES_MAGIC, 3
    )
    if len(img_body) != n * rows * cols:
        raise FormatError(
            f"{images_path}: payload holds {len(img_body)} bytes, expected {n * rows * cols}"
        )
    (n_labels,), lab_body = _read_header(lab_payload, labels_path, IDX_LABELS_MAGIC, 1)
    if len(lab_body) != n_labels:
        raise FormatError(
            f"{labels_path}: payload holds {len(lab_body)} bytes, expected {n_labels}"
        )
    if n != n_labels:
        raise FormatError(f"image count {n} does not match label count {n_labels}")

    x = np.frombuffer(img_body, dtype=np.uint8).reshape(n, rows * cols) / 255.0
    y = np.frombuffer(lab_body, dtype=np.uint8).astype(np.int64)
    y, n_classes = _apply_label_map(y, label_map)
    return Dataset(x.astype(np.float64), y, n_classes)


def save_dataset(dataset: Dataset, path: str):
    np.savez(path, x=dataset.x, y=dataset.y, n_classes=np.int64(dataset.n_classes))


def load_dataset(path: str) -> Dataset:
    try:
        with np.load(path) as data:
            return Dataset(data["x"], data["y"], int(data["n_classes"]))
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"{path}: not a valid dataset file ({exc})") from exc
