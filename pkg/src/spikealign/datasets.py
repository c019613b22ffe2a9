"""IDX dataset ingestion and input scaling.

MNIST-style IDX files are parsed big-endian and flattened to (n, 784)
float vectors in [0, 255].  Inputs are then rescaled by a single global
factor so the training-split pixel mean hits the target input mean the
weight initialization assumes; the test split always reuses the factor
computed on the training split.
"""

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

DATA_DIR_ENV = "SPIKEALIGN_DATA_DIR"


def data_root() -> Path:
    """Dataset directory: $SPIKEALIGN_DATA_DIR, else ~/data."""
    return Path(os.environ.get(DATA_DIR_ENV, "~/data")).expanduser()


@dataclass
class Dataset:
    """Flattened image vectors with integer class labels."""

    images: np.ndarray  # (n, pixels) float64, finite, >= 0
    labels: np.ndarray  # (n,) int64 in [0, n_classes)
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2 or len(self.images) != len(self.labels):
            raise ValueError(
                f"images {self.images.shape} and labels {self.labels.shape} do not align"
            )

    def __len__(self):
        return len(self.labels)

    def subset(self, limit: int | None) -> "Dataset":
        if limit is None or limit >= len(self):
            return self
        return Dataset(self.images[:limit], self.labels[:limit], self.split)


def _read_exact(f, n, path, what):
    buf = f.read(n)
    if len(buf) != n:
        offset = f.tell() - len(buf)
        raise ValueError(
            f"{path}: truncated while reading {what}: expected {n} bytes at offset "
            f"{offset}, got {len(buf)}"
        )
    return buf


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Load an IDX image/label file pair, validating magic numbers and sizes."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, images_path, "header"))
        if magic != IMAGES_MAGIC:
            raise ValueError(
                f"{images_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IMAGES_MAGIC:08x}"
            )
        raw = _read_exact(f, count * rows * cols, images_path, f"{count} images")
        if f.read(1):
            raise ValueError(f"{images_path}: trailing bytes after {count} images")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    with open(labels_path, "rb") as f:
        magic, lcount = struct.unpack(">ii", _read_exact(f, 8, labels_path, "header"))
        if magic != LABELS_MAGIC:
            raise ValueError(
                f"{labels_path}: bad magic 0x{magic:08x} at offset 0, expected 0x{LABELS_MAGIC:08x}"
            )
        raw = _read_exact(f, lcount, labels_path, f"{lcount} labels")
        if f.read(1):
            raise ValueError(f"{labels_path}: trailing bytes after {lcount} labels")
        labels = np.frombuffer(raw, dtype=np.uint8)
    if count != lcount:
        raise ValueError(
            f"image count {count} ({images_path}) != label count {lcount} ({labels_path})"
        )
    return Dataset(images.astype(np.float64), labels.astype(np.int64), split)


def scale_inputs(ds: Dataset, target_mean: float) -> tuple[Dataset, float]:
    """Rescale pixels by one global factor so the dataset mean equals target_mean.

    Returns the scaled dataset and the factor, so the caller can apply the
    training-split factor to the test split.
    """
    if not (target_mean > 0):
        raise ValueError(f"target_mean must be > 0, got {target_mean}")
    mean = float(ds.images.mean())
    if mean <= 0:
        raise ValueError(f"dataset mean is {mean}; cannot scale to {target_mean}")
    factor = target_mean / mean
    return apply_scale(ds, factor), factor


def apply_scale(ds: Dataset, factor: float) -> Dataset:
    return Dataset(ds.images * factor, ds.labels, ds.split)


def load_pair(
    dataset_dir,
    target_mean: float = 8.0,
    train_limit: int | None = None,
    test_limit: int | None = None,
) -> tuple[Dataset, Dataset, dict]:
    """Load train+test splits from a dataset directory and scale both.

    The scale factor comes from the full training split (before any limit)
    and is reused verbatim for the test split.  Returns (train, test, info)
    with the factor and the post-scaling moments in ``info``.
    """
    dataset_dir = Path(dataset_dir)
    for split in _FILES:
        for name in _FILES[split]:
            if not (dataset_dir / name).exists():
                raise FileNotFoundError(f"missing IDX file {dataset_dir / name}")
    train = load_idx(dataset_dir / _FILES["train"][0], dataset_dir / _FILES["train"][1], "train")
    test = load_idx(dataset_dir / _FILES["test"][0], dataset_dir / _FILES["test"][1], "test")
    train, factor = scale_inputs(train, target_mean)
    test = apply_scale(test, factor)
    info = {
        "scale_factor": factor,
        "train_mean": float(train.images.mean()),
        "train_second_moment": float((train.images**2).mean()),
    }
    log.info(
        "scaled %s by %.6g: mean %.6g, second moment %.6g",
        dataset_dir,
        factor,
        info["train_mean"],
        info["train_second_moment"],
    )
    return train.subset(train_limit), test.subset(test_limit), info
