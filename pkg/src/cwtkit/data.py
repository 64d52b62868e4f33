"""Dataset loading and binary file round-tripping.

Formats:
  - IDX image/label pairs (big-endian, as mandated by the format)
  - CIFAR-10 binary batches (3073-byte records, channel-major R,G,B)
  - TNSR: magic ``TNSR``, u32 LE rank, rank x u32 LE dims, float32 LE payload
  - Checkpoint: magic ``CWTM``, layer records with type tags and float32 LE
    payloads, trailing UTF-8 key=value metadata
  - NetPBM P5/P6, binary, maxval 255

Pixel values are kept in [0,1] (u8/255); no per-channel standardization, so
perturbation budgets stay in raw pixel units.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .tensor import DEFAULT_DTYPE

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073


@dataclass
class Dataset:
    images: np.ndarray  # [B, C, H, W] in [0, 1]
    labels: np.ndarray  # [B] ints
    classes: int
    split: str = ""

    def __len__(self) -> int:
        return int(self.images.shape[0])

    def take(self, count: int) -> "Dataset":
        return Dataset(self.images[:count], self.labels[:count], self.classes, self.split)


# ---------------------------------------------------------------------------
# IDX


def load_mnist_idx(images_path: str, labels_path: str) -> Dataset:
    with open(images_path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise ValueError(f"{images_path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{images_path}: bad IDX image magic 0x{magic:08x}")
        payload = fh.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise ValueError(f"{images_path}: truncated IDX payload "
                             f"({len(payload)} of {count * rows * cols} bytes)")
    with open(labels_path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise ValueError(f"{labels_path}: truncated IDX header")
        magic, lcount = struct.unpack(">II", head)
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{labels_path}: bad IDX label magic 0x{magic:08x}")
        raw = fh.read(lcount)
        if len(raw) != lcount:
            raise ValueError(f"{labels_path}: truncated IDX payload")
    if lcount != count:
        raise ValueError(f"image/label count mismatch: {count} images vs {lcount} labels")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(count, 1, rows, cols)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    return Dataset(images.astype(DEFAULT_DTYPE) / DEFAULT_DTYPE(255.0), labels, 10, "idx")


def write_mnist_idx(images_u8: np.ndarray, labels: np.ndarray,
                    images_path: str, labels_path: str) -> None:
    """Write a [B,H,W] u8 stack plus labels as an IDX pair."""
    count, rows, cols = images_u8.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(np.ascontiguousarray(images_u8, dtype=np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, count))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# CIFAR-10 binary


def load_cifar10_bin(path: str) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD != 0:
        raise ValueError(
            f"{path}: length {len(raw)} is not a positive multiple of {CIFAR_RECORD}"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    images = records[:, 1:].reshape(-1, 3, 32, 32)
    return Dataset(images.astype(DEFAULT_DTYPE) / DEFAULT_DTYPE(255.0), labels, 10, "cifar10")


# ---------------------------------------------------------------------------
# correct-classification filtering


def filter_correct(dataset: Dataset, models) -> Dataset:
    """Subset classified correctly by every listed model, order preserved."""
    if not models:
        raise ValueError("filter_correct needs at least one model")
    keep = np.ones(len(dataset), dtype=bool)
    for model in models:
        keep &= nn.predict(model, dataset.images) == dataset.labels
    if not keep.any():
        raise ValueError(
            "no image is classified correctly by every model; supply a larger dataset"
        )
    return Dataset(dataset.images[keep], dataset.labels[keep], dataset.classes, dataset.split)


# ---------------------------------------------------------------------------
# TNSR


def write_tnsr(array: np.ndarray, path: str) -> None:
    if not 1 <= array.ndim <= 4:
        raise ValueError(f"TNSR stores rank 1-4 tensors, got rank {array.ndim}")
    with open(path, "wb") as fh:
        fh.write(b"TNSR")
        fh.write(struct.pack("<I", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def read_tnsr(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != b"TNSR":
            raise ValueError(f"{path}: bad TNSR magic")
        (rank,) = struct.unpack("<I", fh.read(4))
        if not 1 <= rank <= 4:
            raise ValueError(f"{path}: TNSR rank {rank} outside 1-4")
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        expected = 4 * int(np.prod(dims))
        payload = fh.read(expected)
        if len(payload) != expected:
            raise ValueError(f"{path}: truncated TNSR payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


# ---------------------------------------------------------------------------
# NetPBM (binary P5/P6, maxval 255)


def write_netpbm(image: np.ndarray, path: str) -> None:
    """[H,W] -> P5; [3,H,W] -> P6.  Values in [0,1] quantized to 8 bits."""
    data = np.round(255.0 * np.clip(image, 0.0, 1.0)).astype(np.uint8)
    with open(path, "wb") as fh:
        if image.ndim == 2:
            fh.write(b"P5\n%d %d\n255\n" % (image.shape[1], image.shape[0]))
            fh.write(data.tobytes())
        elif image.ndim == 3 and image.shape[0] == 3:
            fh.write(b"P6\n%d %d\n255\n" % (image.shape[2], image.shape[1]))
            fh.write(data.transpose(1, 2, 0).tobytes())
        else:
            raise ValueError(f"expected [H,W] or [3,H,W], got {image.shape}")


def _read_pbm_tokens(fh, count: int) -> list[bytes]:
    tokens: list[bytes] = []
    while len(tokens) < count:
        ch = fh.read(1)
        if not ch:
            raise ValueError("truncated NetPBM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            continue
        tok = ch
        while True:
            ch = fh.read(1)
            if not ch or ch.isspace():
                break
            tok += ch
        tokens.append(tok)
    return tokens


def read_netpbm(path: str) -> np.ndarray:
    """P5 -> [H,W], P6 -> [3,H,W]; values scaled to [0,1]."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise ValueError(f"{path}: bad NetPBM magic {magic!r}")
        w, h, maxval = (int(t) for t in _read_pbm_tokens(fh, 3))
        if maxval != 255:
            raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
        channels = 1 if magic == b"P5" else 3
        payload = fh.read(h * w * channels)
        if len(payload) != h * w * channels:
            raise ValueError(f"{path}: truncated NetPBM payload")
    data = np.frombuffer(payload, dtype=np.uint8).astype(DEFAULT_DTYPE) / DEFAULT_DTYPE(255.0)
    if channels == 1:
        return data.reshape(h, w)
    return data.reshape(h, w, 3).transpose(2, 0, 1)


# ---------------------------------------------------------------------------
# checkpoints


_LAYER_TAGS = {nn.Conv: 1, nn.Relu: 2, nn.MaxPool: 3, nn.GlobalAvgPool: 4,
               nn.Flatten: 5, nn.Dense: 6}


def _write_param(fh, array: np.ndarray) -> None:
    fh.write(struct.pack("<I", array.ndim))
    fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read_param(fh) -> np.ndarray:
    (ndim,) = struct.unpack("<I", fh.read(4))
    dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
    payload = fh.read(4 * int(np.prod(dims)))
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def save_checkpoint(ckpt: nn.Checkpoint, path: str) -> None:
    model = ckpt.model
    with open(path, "wb") as fh:
        fh.write(b"CWTM")
        fh.write(struct.pack("<I", len(model.spec.layers)))
        fh.write(struct.pack("<III", *model.spec.input_shape))
        for layer, p in zip(model.spec.layers, model.params):
            fh.write(struct.pack("<B", _LAYER_TAGS[type(layer)]))
            if isinstance(layer, nn.Conv):
                fh.write(struct.pack("<IIII", layer.out_channels, layer.kernel,
                                     layer.stride, layer.padding))
                _write_param(fh, p["w"])
                _write_param(fh, p["b"])
            elif isinstance(layer, nn.Dense):
                fh.write(struct.pack("<I", layer.out_features))
                _write_param(fh, p["w"])
                _write_param(fh, p["b"])
        meta = dict(ckpt.metadata)
        meta.setdefault("spec_sha", nn.spec_sha(model.spec))
        meta.setdefault("name", model.name)
        blob = "".join(f"{k}={v}\n" for k, v in meta.items()).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_checkpoint(path: str) -> nn.Checkpoint:
    tag_to_layer = {v: k for k, v in _LAYER_TAGS.items()}
    with open(path, "rb") as fh:
        if fh.read(4) != b"CWTM":
            raise ValueError(f"{path}: bad checkpoint magic")
        (layer_count,) = struct.unpack("<I", fh.read(4))
        input_shape = struct.unpack("<III", fh.read(12))
        layers: list = []
        params: list[dict[str, np.ndarray]] = []
        for _ in range(layer_count):
            (tag,) = struct.unpack("<B", fh.read(1))
            if tag not in tag_to_layer:
                raise ValueError(f"{path}: unknown layer tag {tag}")
            kind = tag_to_layer[tag]
            if kind is nn.Conv:
                oc, k, s, pad = struct.unpack("<IIII", fh.read(16))
                layers.append(nn.Conv(oc, k, s, pad))
                params.append({"w": _read_param(fh), "b": _read_param(fh)})
            elif kind is nn.Dense:
                (out,) = struct.unpack("<I", fh.read(4))
                layers.append(nn.Dense(out))
                params.append({"w": _read_param(fh), "b": _read_param(fh)})
            else:
                layers.append(kind())
                params.append({})
        (meta_len,) = struct.unpack("<I", fh.read(4))
        blob = fh.read(meta_len).decode("utf-8")
    spec = nn.ModelSpec(input_shape, tuple(layers))
    # dims must match the spec exactly
    for i, (have, want) in enumerate(zip(params, nn.param_shapes(spec))):
        for key in want:
            if have[key].shape != want[key]:
                raise ValueError(
                    f"{path}: layer {i} param {key} has shape {have[key].shape}, "
                    f"spec wants {want[key]}"
                )
    metadata = {}
    for line in blob.splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            metadata[key] = val
    model = nn.Model(spec, params, name=metadata.get("name", ""))
    return nn.Checkpoint(model, metadata)
