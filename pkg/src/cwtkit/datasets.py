"""Desk-scale dataset helpers for demos and experiments.

The bundled scikit-learn handwritten digits (1797 real 8x8 scans) stand in
for a full-size digit corpus: they are bilinearly upscaled to 28x28 and can
be serialized through genuine IDX files so the loaders see real data.
scikit-learn is imported lazily; the core library does not need it.
"""

from __future__ import annotations

import os

import numpy as np

from . import data, transforms
from .tensor import DEFAULT_DTYPE


def digits_arrays(image_size: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """All digit scans as u8 [B, S, S] plus labels, upscaled bilinearly."""
    from sklearn.datasets import load_digits

    raw = load_digits()
    images = raw.images.astype(np.float64) / 16.0
    out = np.empty((images.shape[0], image_size, image_size), dtype=np.uint8)
    for i, img in enumerate(images):
        big = transforms.resize(img[None], image_size, image_size, transforms.BILINEAR)[0]
        out[i] = np.round(255.0 * np.clip(big, 0.0, 1.0)).astype(np.uint8)
    return out, raw.target.astype(np.int64)


def write_digits_idx(directory: str, train_count: int = 1200,
                     image_size: int = 28) -> dict[str, tuple[str, str]]:
    """Write train/test IDX pairs under `directory`; returns the path pairs."""
    os.makedirs(directory, exist_ok=True)
    images, labels = digits_arrays(image_size)
    paths = {}
    splits = {"train": (0, train_count), "test": (train_count, images.shape[0])}
    for split, (lo, hi) in splits.items():
        ipath = os.path.join(directory, f"digits-{split}-images.idx")
        lpath = os.path.join(directory, f"digits-{split}-labels.idx")
        data.write_mnist_idx(images[lo:hi], labels[lo:hi], ipath, lpath)
        paths[split] = (ipath, lpath)
    return paths


def digits_dataset(split: str = "train", train_count: int = 1200,
                   image_size: int = 28) -> data.Dataset:
    """In-memory digits split, same quantization as the IDX round-trip."""
    images, labels = digits_arrays(image_size)
    lo, hi = (0, train_count) if split == "train" else (train_count, images.shape[0])
    imgs = images[lo:hi, None].astype(DEFAULT_DTYPE) / DEFAULT_DTYPE(255.0)
    return data.Dataset(imgs, labels[lo:hi], 10, split)
