"""Dataset readers and spike encoders for MNIST and N-MNIST."""

from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rngs
from .errors import FormatError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

NMNIST_SENSOR = 34
NMNIST_UNITS = NMNIST_SENSOR * NMNIST_SENSOR * 2
NMNIST_DT_US = 5000
NMNIST_STEPS = 60


@dataclass
class ImageDataset:
    """Byte images with class labels, kept in the canonical file order."""

    images: np.ndarray  # (N, rows, cols) uint8
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if len(self.labels) and self.labels.max() > 9:
            raise ValueError(f"label {int(self.labels.max())} outside 0-9")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index) -> "ImageDataset":
        return ImageDataset(self.images[index], self.labels[index])

    def split(self, n_val: int = 10000) -> tuple["ImageDataset", "ImageDataset"]:
        """Train/validation partition; validation is the last ``n_val`` samples."""
        if not 0 <= n_val <= len(self):
            raise ValueError(f"cannot hold out {n_val} of {len(self)} samples")
        cut = len(self) - n_val
        return self.subset(slice(0, cut)), self.subset(slice(cut, len(self)))


def _read_idx(path, expected_magic: int, kind: str) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(
            f"{path}: expected {kind} magic {expected_magic}, found {magic}"
        )
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = int(np.prod(dims))
    payload = raw[header:]
    if len(payload) < need:
        raise FormatError(
            f"{path}: truncated payload, expected {need} bytes, found {len(payload)}"
        )
    return dims, payload[:need]


def load_mnist_idx(images_path, labels_path) -> ImageDataset:
    """Read an MNIST image/label file pair in the IDX container format."""
    dims, payload = _read_idx(images_path, IMAGE_MAGIC, "image")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(dims)
    ldims, lpayload = _read_idx(labels_path, LABEL_MAGIC, "label")
    labels = np.frombuffer(lpayload, dtype=np.uint8).reshape(ldims)
    if labels.shape[0] != images.shape[0]:
        raise FormatError(
            f"{images_path} holds {images.shape[0]} images but "
            f"{labels_path} holds {labels.shape[0]} labels"
        )
    return ImageDataset(images, labels)


def load_mnist(root, split: str = "train") -> ImageDataset:
    """Load ``train`` (60000) or ``test`` (10000) MNIST from a directory."""
    prefix = {"train": "train", "test": "t10k"}[split]
    root = Path(root)
    return load_mnist_idx(
        root / f"{prefix}-images-idx3-ubyte", root / f"{prefix}-labels-idx1-ubyte"
    )


def encode_poisson(image, T: int, rng: np.random.Generator) -> np.ndarray:
    """Rate-code an image: each pixel spikes per step with probability intensity/255.

    Returns a ``(T, pixels)`` uint8 array of zeros and ones.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    p = np.asarray(image, dtype=np.float64).reshape(-1) / 255.0
    return (rng.random((T, p.size)) < p).astype(np.uint8)


@dataclass
class EventList:
    """DVS events with integer pixel coordinates and microsecond timestamps."""

    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    t: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


def decode_nmnist(raw: bytes) -> EventList:
    """Decode the N-MNIST 40-bit event records."""
    if len(raw) % 5:
        raise FormatError(f"event stream length {len(raw)} is not a multiple of 5")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 5).astype(np.int64)
    x, y = rec[:, 0], rec[:, 1]
    p = rec[:, 2] >> 7
    t = ((rec[:, 2] & 0x7F) << 16) | (rec[:, 3] << 8) | rec[:, 4]
    bad = (x >= NMNIST_SENSOR) | (y >= NMNIST_SENSOR)
    if bad.any():
        k = int(np.argmax(bad))
        raise FormatError(
            f"event {k} at ({int(x[k])}, {int(y[k])}) outside the "
            f"{NMNIST_SENSOR}x{NMNIST_SENSOR} sensor"
        )
    order = np.argsort(t, kind="stable")
    return EventList(x[order], y[order], p[order], t[order])


def encode_nmnist(events: EventList) -> bytes:
    """Inverse of :func:`decode_nmnist`."""
    t = np.asarray(events.t, dtype=np.int64)
    if len(t) and (t.min() < 0 or t.max() >= 1 << 23):
        raise ValueError("timestamps must fit in 23 bits")
    rec = np.empty((len(t), 5), dtype=np.uint8)
    rec[:, 0] = events.x
    rec[:, 1] = events.y
    rec[:, 2] = (np.asarray(events.p, dtype=np.int64) << 7) | (t >> 16)
    rec[:, 3] = (t >> 8) & 0xFF
    rec[:, 4] = t & 0xFF
    return rec.tobytes()


def load_nmnist_sample(path) -> EventList:
    try:
        return decode_nmnist(Path(path).read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def bin_events(events: EventList, dt: int = NMNIST_DT_US, T: int = NMNIST_STEPS) -> np.ndarray:
    """Bin events into a ``(T, 2*34*34)`` binary spike train.

    Events at or after ``dt*T`` microseconds are dropped; several events in
    one bin and unit collapse to a single spike.
    """
    spikes = np.zeros((T, NMNIST_UNITS), dtype=np.uint8)
    t = np.asarray(events.t, dtype=np.int64)
    keep = t < dt * T
    unit = (
        np.asarray(events.p)[keep] * NMNIST_SENSOR * NMNIST_SENSOR
        + np.asarray(events.y)[keep] * NMNIST_SENSOR
        + np.asarray(events.x)[keep]
    )
    spikes[t[keep] // dt, unit] = 1
    return spikes


def list_nmnist(root, split: str = "train") -> tuple[list[Path], np.ndarray]:
    """Collect ``<root>/<Train|Test>/<digit>/<id>.bin`` files in sample-id order."""
    base = Path(root) / {"train": "Train", "test": "Test"}[split]
    entries = []
    for digit in range(10):
        folder = base / str(digit)
        if not folder.is_dir():
            continue
        for name in os.listdir(folder):
            m = re.fullmatch(r"(\d+)\.bin", name)
            if m:
                entries.append((int(m.group(1)), digit, folder / name))
    if not entries:
        raise FileNotFoundError(f"no N-MNIST .bin files under {base}")
    entries.sort()
    return [e[2] for e in entries], np.array([e[1] for e in entries], dtype=np.uint8)


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into batches; the last one may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if n <= 0:
        raise ValueError("cannot batch an empty dataset")
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


class PoissonSource:
    """Spike-train provider for static images.

    Each sample gets its own generator keyed by (seed, pass key, sample index),
    so an encoding never depends on batching or on which worker produced it.
    """

    def __init__(self, dataset: ImageDataset, T: int, offset: int = 0):
        self.images = dataset.images.reshape(len(dataset), -1)
        self.labels = dataset.labels.astype(np.int64)
        self.T = T
        self.offset = offset  # keeps sample keys distinct across splits
        self.n_inputs = self.images.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def encode(self, index: Sequence[int], seed: int, key: int) -> np.ndarray:
        out = np.empty((len(index), self.T, self.n_inputs), dtype=np.uint8)
        for k, i in enumerate(index):
            g = rngs.stream(seed, "poisson-encode", key, self.offset + int(i))
            out[k] = encode_poisson(self.images[i], self.T, g)
        return out


class EventSource:
    """Spike-train provider for N-MNIST files; deterministic, so seeds are ignored."""

    def __init__(self, paths: Sequence, labels, T: int = NMNIST_STEPS,
                 dt: int = NMNIST_DT_US, cache: bool = True):
        self.paths = list(paths)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.T = T
        self.dt = dt
        self.n_inputs = NMNIST_UNITS
        self._cache: dict[int, np.ndarray] | None = {} if cache else None

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index) -> "EventSource":
        index = np.arange(len(self))[index]
        return EventSource([self.paths[i] for i in index], self.labels[index],
                           self.T, self.dt, self._cache is not None)

    def _train(self, i: int) -> np.ndarray:
        if self._cache is not None and i in self._cache:
            return np.unpackbits(self._cache[i], axis=1, count=self.n_inputs)
        spikes = bin_events(load_nmnist_sample(self.paths[i]), self.dt, self.T)
        if self._cache is not None:
            self._cache[i] = np.packbits(spikes, axis=1)
        return spikes

    def encode(self, index: Sequence[int], seed: int = 0, key: int = 0) -> np.ndarray:
        return np.stack([self._train(int(i)) for i in index])
