"""Dataset ingestion, synthesis, batching, and standardization.

Images live as (N,C,H,W) float32 in [0,1]. Per-channel standardization
statistics always come from the training split and ride along on both
splits so evaluation code never recomputes them.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DegenerateBatch
from .ops import DTYPE
from .rng import DOMAIN_SHUFFLE, DOMAIN_SYNTH, stream

CIFAR10_RECORD = 3073          # 1 label byte + 3 * 1024 channel bytes
CIFAR10_FILE_BYTES = 10000 * CIFAR10_RECORD
CIFAR100_RECORD = 3074         # coarse + fine label bytes + 3072 pixels
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"

SYNTH_NOISE_STD = 0.02
SYNTH_AMPLITUDE = 0.35


@dataclass
class Dataset:
    """One split plus the train-split standardization statistics."""

    images: np.ndarray   # (N,C,H,W) float32 in [0,1]
    labels: np.ndarray   # (N,) int64
    mean: np.ndarray     # (C,) float64, train-split per-channel mean
    std: np.ndarray      # (C,) float64, train-split per-channel std
    split: str
    num_classes: int

    def __len__(self):
        return self.images.shape[0]


def channel_stats(images: np.ndarray):
    """Per-channel mean and population std over all pixels of a split."""
    if images.shape[0] == 0:
        raise DegenerateBatch("cannot compute channel statistics of an empty split")
    c = images.shape[1]
    mean = np.empty(c)
    std = np.empty(c)
    for ch in range(c):
        x = images[:, ch]
        m = x.mean(dtype=np.float64)
        sq = np.mean(np.square(x, dtype=np.float64))
        mean[ch] = m
        std[ch] = np.sqrt(max(sq - m * m, 0.0))
    if np.any(std < 1e-6):
        bad = int(np.argmin(std))
        raise DataFormatError(f"channel {bad} is constant (std={std[bad]:.3g}), cannot standardize")
    return mean, std


def standardize(batch: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Map [0,1] pixels to zero-mean unit-std space, channelwise."""
    m = np.asarray(mean, dtype=DTYPE).reshape(1, -1, 1, 1)
    s = np.asarray(std, dtype=DTYPE).reshape(1, -1, 1, 1)
    return ((batch - m) / s).astype(DTYPE)


# ---------------------------------------------------------------------------
# CIFAR binary format
# ---------------------------------------------------------------------------

def _read_cifar_file(path, record_bytes, label_bytes, max_label):
    """Parse one CIFAR-style binary file into ((N,3,32,32) floats, labels)."""
    try:
        raw = np.fromfile(path, dtype=np.uint8)
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    size = raw.size
    expected = 10000 * record_bytes
    if size != expected:
        good = size - size % record_bytes
        raise DataFormatError(
            f"{path}: file is {size} bytes, expected {expected} "
            f"(malformed from byte offset {good if size % record_bytes else size})")
    records = raw.reshape(-1, record_bytes)
    labels = records[:, label_bytes - 1].astype(np.int64)
    bad = np.flatnonzero(labels > max_label)
    if bad.size:
        i = int(bad[0])
        offset = i * record_bytes + label_bytes - 1
        raise DataFormatError(
            f"{path}: label {labels[i]} > {max_label} at byte offset {offset} (record {i})")
    pixels = records[:, label_bytes:].reshape(-1, 3, 32, 32)
    images = pixels.astype(DTYPE) / DTYPE(255.0)
    return images, labels


def _assemble(train_parts, test_part, num_classes):
    train_images = np.concatenate([p[0] for p in train_parts], axis=0)
    train_labels = np.concatenate([p[1] for p in train_parts], axis=0)
    mean, std = channel_stats(train_images)
    train = Dataset(train_images, train_labels, mean, std, "train", num_classes)
    test = Dataset(test_part[0], test_part[1], mean, std, "test", num_classes)
    return train, test


def load_cifar10(directory):
    """Load the six binary batch files; returns (train, test) Datasets."""
    parts = []
    for name in TRAIN_FILES:
        parts.append(_read_cifar_file(os.path.join(directory, name),
                                      CIFAR10_RECORD, 1, 9))
    test = _read_cifar_file(os.path.join(directory, TEST_FILE), CIFAR10_RECORD, 1, 9)
    return _assemble(parts, test, 10)


def load_cifar100(directory):
    """Load train.bin/test.bin with coarse+fine label bytes; fine labels used."""
    def read(path, n_records):
        try:
            raw = np.fromfile(path, dtype=np.uint8)
        except OSError as exc:
            raise DataFormatError(f"cannot read {path}: {exc}") from exc
        expected = n_records * CIFAR100_RECORD
        if raw.size != expected:
            good = raw.size - raw.size % CIFAR100_RECORD
            raise DataFormatError(
                f"{path}: file is {raw.size} bytes, expected {expected} "
                f"(malformed from byte offset {good if raw.size % CIFAR100_RECORD else raw.size})")
        records = raw.reshape(-1, CIFAR100_RECORD)
        labels = records[:, 1].astype(np.int64)
        if np.any(labels > 99):
            i = int(np.flatnonzero(labels > 99)[0])
            raise DataFormatError(
                f"{path}: label {labels[i]} > 99 at byte offset {i * CIFAR100_RECORD + 1}")
        images = records[:, 2:].reshape(-1, 3, 32, 32).astype(DTYPE) / DTYPE(255.0)
        return images, labels

    train_part = read(os.path.join(directory, "train.bin"), 50000)
    test_part = read(os.path.join(directory, "test.bin"), 10000)
    return _assemble([train_part], test_part, 100)


def serialize_cifar10(images: np.ndarray, labels: np.ndarray) -> bytes:
    """Inverse of the reader: quantize to u8 and emit 3073-byte records."""
    n = images.shape[0]
    if labels.shape != (n,):
        raise DataFormatError(f"labels shape {labels.shape} does not match {n} images")
    if np.any(labels < 0) or np.any(labels > 9):
        raise DataFormatError("labels outside [0,9] cannot be serialized")
    records = np.empty((n, CIFAR10_RECORD), dtype=np.uint8)
    records[:, 0] = labels.astype(np.uint8)
    pixels = np.rint(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)
    records[:, 1:] = pixels.reshape(n, -1)
    return records.tobytes()


def export_cifar10(path, dataset_or_images, labels=None):
    """Write images/labels to one binary file in the CIFAR-10 layout."""
    if isinstance(dataset_or_images, Dataset):
        images, labels = dataset_or_images.images, dataset_or_images.labels
    else:
        images = dataset_or_images
    with open(path, "wb") as fh:
        fh.write(serialize_cifar10(images, labels))


# ---------------------------------------------------------------------------
# Synthetic desk-scale dataset
# ---------------------------------------------------------------------------

def _class_pattern(k, num_classes, size):
    """Deterministic flip-symmetric base pattern for class k, (3,H,W) in [0,1].

    Patterns alternate between axis-aligned gratings (symmetric cosine phase
    about the image center) and centered disks/rings, with class-specific
    frequency, radius, and per-channel gain.
    """
    h = w = size
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    kind = k % 4
    if kind == 0:
        freq = 1.5 + k
        base = np.cos(2.0 * np.pi * freq * (rr - cy) / h)
    elif kind == 1:
        freq = 2.5 + k
        base = np.cos(2.0 * np.pi * freq * np.abs(cc - cx) / w)
    elif kind == 2:
        radius = size * (0.18 + 0.06 * (k // 4))
        r = np.sqrt((rr - cy) ** 2 + (cc - cx) ** 2)
        base = np.where(r <= radius, 1.0, -1.0)
    else:
        freq = 1.0 + 0.5 * k
        r = np.sqrt((rr - cy) ** 2 + (cc - cx) ** 2)
        base = np.cos(2.0 * np.pi * freq * r / size)
    gains = np.array([1.0 - 0.25 * ((k + 1) % 3),
                      1.0 - 0.25 * ((k + 2) % 3),
                      1.0 - 0.25 * (k % 3)])
    pattern = 0.5 + SYNTH_AMPLITUDE * gains[:, None, None] * base[None]
    return np.clip(pattern, 0.0, 1.0)


def _synth_split(num_classes, n, size, seed, split_tag):
    images = np.empty((n, 3, size, size), dtype=DTYPE)
    labels = np.arange(n, dtype=np.int64) % num_classes
    patterns = [_class_pattern(k, num_classes, size) for k in range(num_classes)]
    tag = 0 if split_tag == "train" else 1
    for i in range(n):
        rng = stream(seed, DOMAIN_SYNTH, tag, i)
        amp = 1.0 + 0.1 * (2.0 * rng.random() - 1.0)
        img = 0.5 + (patterns[labels[i]] - 0.5) * amp
        img = img + rng.normal(0.0, SYNTH_NOISE_STD, size=img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
    return images, labels


def synth_dataset(num_classes=4, n_train=5000, n_test=1000, size=32, seed=0):
    """Deterministic separable toy dataset in the real data's geometry."""
    if num_classes < 2:
        raise DegenerateBatch(f"need at least 2 classes, got {num_classes}")
    train_images, train_labels = _synth_split(num_classes, n_train, size, seed, "train")
    test_images, test_labels = _synth_split(num_classes, n_test, size, seed, "test")
    if n_train > 0:
        mean, std = channel_stats(train_images)
    else:
        mean, std = np.full(3, 0.5), np.full(3, 0.25)
    train = Dataset(train_images, train_labels, mean, std, "train", num_classes)
    test = Dataset(test_images, test_labels, mean, std, "test", num_classes)
    return train, test


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def batches(dataset: Dataset, batch_size: int, epoch: int, seed: int):
    """Yield (indices, images, labels) under a per-epoch keyed permutation.

    The final short batch is kept. Standardization is left to the consumer
    so augmentation can run in [0,1] pixel space first.
    """
    if batch_size < 1:
        raise DegenerateBatch(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    perm = stream(seed, DOMAIN_SHUFFLE, epoch).permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        yield idx, dataset.images[idx], dataset.labels[idx]
