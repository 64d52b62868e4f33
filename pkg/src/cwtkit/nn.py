"""Minimal differentiable convnet stack.

Forward, backward to parameters and to inputs, cross-entropy, SGD training.
Deliberately tiny layer zoo (conv / relu / 2x2 maxpool / global-average-pool
/ flatten / dense): enough to build several architecturally distinct small
classifiers without any external ML framework.  Arrays are [B, C, H, W]
batches; float32 by default, float64 for verification-grade gradient checks.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng
from .tensor import DEFAULT_DTYPE

# ---------------------------------------------------------------------------
# layer descriptors and model spec


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class MaxPool:
    """2x2 window, stride 2; odd trailing rows/cols are dropped."""


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    out_features: int


Layer = Conv | Relu | MaxPool | GlobalAvgPool | Flatten | Dense


def infer_shapes(input_shape: tuple[int, int, int], layers: tuple[Layer, ...]) -> list[tuple]:
    """Shape after each layer; raises naming the offending layer."""
    shape: tuple = tuple(input_shape)
    shapes = []
    for i, layer in enumerate(layers):
        where = f"layer {i} ({type(layer).__name__})"
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise ValueError(f"{where}: expects [C,H,W] input, got {shape}")
            c, h, w = shape
            k, s, p = layer.kernel, layer.stride, layer.padding
            oh = (h + 2 * p - k) // s + 1
            ow = (w + 2 * p - k) // s + 1
            if oh < 1 or ow < 1:
                raise ValueError(f"{where}: kernel {k} too large for {h}x{w} input")
            shape = (layer.out_channels, oh, ow)
        elif isinstance(layer, Relu):
            pass
        elif isinstance(layer, MaxPool):
            if len(shape) != 3:
                raise ValueError(f"{where}: expects [C,H,W] input, got {shape}")
            c, h, w = shape
            if h < 2 or w < 2:
                raise ValueError(f"{where}: spatial dims {h}x{w} too small to pool")
            shape = (c, h // 2, w // 2)
        elif isinstance(layer, GlobalAvgPool):
            if len(shape) != 3:
                raise ValueError(f"{where}: expects [C,H,W] input, got {shape}")
            shape = (shape[0],)
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Dense):
            if len(shape) != 1:
                raise ValueError(f"{where}: expects a flat vector, got {shape}; add flatten/gap first")
            shape = (layer.out_features,)
        else:
            raise ValueError(f"{where}: unsupported layer type")
        shapes.append(shape)
    return shapes


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, int, int]
    layers: tuple[Layer, ...]

    def __post_init__(self):
        shapes = infer_shapes(self.input_shape, self.layers)
        if not shapes or len(shapes[-1]) != 1:
            raise ValueError(
                f"spec must end in a logits vector, final shape is {shapes[-1] if shapes else None}"
            )

    @property
    def classes(self) -> int:
        return infer_shapes(self.input_shape, self.layers)[-1][0]


def spec_to_text(spec: ModelSpec) -> str:
    """Canonical one-layer-per-line text form (also the spec-file format)."""
    lines = ["input %d %d %d" % spec.input_shape]
    for layer in spec.layers:
        if isinstance(layer, Conv):
            lines.append(f"conv {layer.out_channels} {layer.kernel} {layer.stride} {layer.padding}")
        elif isinstance(layer, Relu):
            lines.append("relu")
        elif isinstance(layer, MaxPool):
            lines.append("maxpool")
        elif isinstance(layer, GlobalAvgPool):
            lines.append("gap")
        elif isinstance(layer, Flatten):
            lines.append("flatten")
        elif isinstance(layer, Dense):
            lines.append(f"dense {layer.out_features}")
    return "\n".join(lines) + "\n"


def parse_spec_text(text: str) -> ModelSpec:
    input_shape = None
    layers: list[Layer] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        if kind == "input":
            if len(args) != 3:
                raise ValueError(f"input line needs 'input C H W', got {line!r}")
            input_shape = tuple(int(a) for a in args)
        elif kind == "conv":
            if not 2 <= len(args) <= 4:
                raise ValueError(f"conv needs 'conv OUT K [STRIDE [PAD]]', got {line!r}")
            vals = [int(a) for a in args] + [1, 0][len(args) - 2 :]
            layers.append(Conv(*vals))
        elif kind == "relu":
            layers.append(Relu())
        elif kind == "maxpool":
            layers.append(MaxPool())
        elif kind == "gap":
            layers.append(GlobalAvgPool())
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "dense":
            if len(args) != 1:
                raise ValueError(f"dense needs 'dense OUT', got {line!r}")
            layers.append(Dense(int(args[0])))
        else:
            raise ValueError(f"unknown layer kind {kind!r} in spec line {line!r}")
    if input_shape is None:
        raise ValueError("spec is missing the 'input C H W' line")
    return ModelSpec(input_shape, tuple(layers))


def spec_sha(spec: ModelSpec) -> str:
    return hashlib.sha256(spec_to_text(spec).encode()).hexdigest()


# four architecturally distinct 28x28 single-channel presets
PRESETS: dict[str, str] = {
    "convnet_a": """\
input 1 28 28
conv 8 3 1 1
relu
maxpool
conv 16 3 1 1
relu
maxpool
flatten
dense 10
""",
    "convnet_b": """\
input 1 28 28
conv 12 5 1 2
relu
maxpool
conv 24 3 1 1
relu
gap
dense 10
""",
    "convnet_c": """\
input 1 28 28
conv 6 3 2 1
relu
conv 12 3 2 1
relu
flatten
dense 10
""",
    "convnet_d": """\
input 1 28 28
conv 4 7 1 3
relu
maxpool
conv 8 5 1 2
relu
maxpool
flatten
dense 64
relu
dense 10
""",
}


def preset_spec(name: str) -> ModelSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return parse_spec_text(PRESETS[name])


def param_shapes(spec: ModelSpec) -> list[dict[str, tuple[int, ...]]]:
    """Expected weight/bias shapes per layer ({} for unparameterized ones)."""
    shapes = infer_shapes(spec.input_shape, spec.layers)
    shape: tuple = spec.input_shape
    out: list[dict[str, tuple[int, ...]]] = []
    for layer, nxt in zip(spec.layers, shapes):
        if isinstance(layer, Conv):
            out.append({"w": (layer.out_channels, shape[0], layer.kernel, layer.kernel),
                        "b": (layer.out_channels,)})
        elif isinstance(layer, Dense):
            out.append({"w": (layer.out_features, shape[0]), "b": (layer.out_features,)})
        else:
            out.append({})
        shape = nxt
    return out


# ---------------------------------------------------------------------------
# model container and init


@dataclass
class Model:
    spec: ModelSpec
    params: list[dict[str, np.ndarray]]  # one dict per layer; {} when unparameterized
    name: str = ""

    @property
    def dtype(self):
        for p in self.params:
            if "w" in p:
                return p["w"].dtype
        return DEFAULT_DTYPE


def init_model(spec: ModelSpec, seed: int = 0, dtype=DEFAULT_DTYPE, name: str = "") -> Model:
    """He-style uniform init (bound sqrt(6/fan_in)) from a SplitMix64 stream;
    biases start at zero."""
    rng = Rng(seed)
    shapes = infer_shapes(spec.input_shape, spec.layers)
    params: list[dict[str, np.ndarray]] = []
    shape = spec.input_shape
    for layer, out_shape in zip(spec.layers, shapes):
        if isinstance(layer, Conv):
            fan_in = shape[0] * layer.kernel * layer.kernel
            bound = math.sqrt(6.0 / fan_in)
            w = np.array(
                [rng.uniform(-bound, bound)
                 for _ in range(layer.out_channels * fan_in)],
                dtype=dtype,
            ).reshape(layer.out_channels, shape[0], layer.kernel, layer.kernel)
            params.append({"w": w, "b": np.zeros(layer.out_channels, dtype=dtype)})
        elif isinstance(layer, Dense):
            fan_in = shape[0]
            bound = math.sqrt(6.0 / fan_in)
            w = np.array(
                [rng.uniform(-bound, bound)
                 for _ in range(layer.out_features * fan_in)],
                dtype=dtype,
            ).reshape(layer.out_features, fan_in)
            params.append({"w": w, "b": np.zeros(layer.out_features, dtype=dtype)})
        else:
            params.append({})
        shape = out_shape
    return Model(spec, params, name=name)


# ---------------------------------------------------------------------------
# per-layer forward/backward


def _conv_forward(x, layer: Conv, p, need_cache):
    k, s, pad = layer.kernel, layer.stride, layer.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    bsz, c, hp, wp = xp.shape
    oh = (hp - k) // s + 1
    ow = (wp - k) // s + 1
    cols = np.empty((bsz, c, k, k, oh, ow), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + s * oh : s, kj : kj + s * ow : s]
    cols2 = cols.reshape(bsz, c * k * k, oh * ow)
    w2 = p["w"].reshape(layer.out_channels, c * k * k)
    out = np.matmul(w2, cols2).reshape(bsz, layer.out_channels, oh, ow)
    out += p["b"][:, None, None]
    cache = (cols2, x.shape, xp.shape) if need_cache else None
    return out, cache


def _conv_backward(dout, layer: Conv, p, cache, want_params):
    cols2, x_shape, xp_shape = cache
    k, s, pad = layer.kernel, layer.stride, layer.padding
    bsz, oc, oh, ow = dout.shape
    c = x_shape[1]
    d2 = dout.reshape(bsz, oc, oh * ow)
    grads = None
    if want_params:
        dw = np.tensordot(d2, cols2, axes=([0, 2], [0, 2]))
        grads = {"w": dw.reshape(p["w"].shape), "b": dout.sum(axis=(0, 2, 3))}
    w2 = p["w"].reshape(oc, c * k * k)
    dcols = np.matmul(w2.T, d2).reshape(bsz, c, k, k, oh, ow)
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki : ki + s * oh : s, kj : kj + s * ow : s] += dcols[:, :, ki, kj]
    dx = dxp[:, :, pad : pad + x_shape[2], pad : pad + x_shape[3]] if pad else dxp
    return dx, grads


def _maxpool_forward(x, need_cache):
    bsz, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    xc = x[:, :, : 2 * oh, : 2 * ow]
    win = xc.reshape(bsz, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, oh, ow, 4)
    idx = win.argmax(axis=-1)  # first max in row-major window order (tie-break)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, ((idx, x.shape) if need_cache else None)


def _maxpool_backward(dout, cache):
    idx, x_shape = cache
    bsz, c, oh, ow = dout.shape
    dwin = np.zeros((bsz, c, oh, ow, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, : 2 * oh, : 2 * ow] = (
        dwin.reshape(bsz, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, 2 * oh, 2 * ow)
    )
    return dx


def _forward_cached(model: Model, x: np.ndarray, need_cache: bool):
    if x.ndim != 4 or x.shape[1:] != model.spec.input_shape:
        raise ValueError(
            f"batch shape {x.shape} does not match spec input {model.spec.input_shape}"
        )
    caches = []
    for i, (layer, p) in enumerate(zip(model.spec.layers, model.params)):
        if isinstance(layer, Conv):
            x, cache = _conv_forward(x, layer, p, need_cache)
        elif isinstance(layer, Relu):
            cache = (x > 0) if need_cache else None
            x = np.maximum(x, 0)
        elif isinstance(layer, MaxPool):
            x, cache = _maxpool_forward(x, need_cache)
        elif isinstance(layer, GlobalAvgPool):
            cache = x.shape if need_cache else None
            x = x.mean(axis=(2, 3))
        elif isinstance(layer, Flatten):
            cache = x.shape if need_cache else None
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            cache = x if need_cache else None
            x = x @ p["w"].T + p["b"]
        caches.append(cache)
    return x, caches


def _backward(model: Model, caches, dlogits, want_params: bool, capture_at: int | None = None):
    """Walk the chain in reverse.  Returns (dx, per-layer param grads,
    gradient w.r.t. the output of layer `capture_at` if requested)."""
    d = dlogits
    grads: list[dict | None] = [None] * len(model.spec.layers)
    captured = None
    for i in range(len(model.spec.layers) - 1, -1, -1):
        if capture_at == i:
            captured = d.copy()
        layer, p, cache = model.spec.layers[i], model.params[i], caches[i]
        if isinstance(layer, Conv):
            d, g = _conv_backward(d, layer, p, cache, want_params)
            grads[i] = g
        elif isinstance(layer, Relu):
            d = d * cache
        elif isinstance(layer, MaxPool):
            d = _maxpool_backward(d, cache)
        elif isinstance(layer, GlobalAvgPool):
            bsz, c, h, w = cache
            d = np.broadcast_to((d / (h * w))[:, :, None, None], cache).astype(d.dtype).copy()
        elif isinstance(layer, Flatten):
            d = d.reshape(cache)
        elif isinstance(layer, Dense):
            if want_params:
                grads[i] = {"w": d.T @ cache, "b": d.sum(axis=0)}
            d = d @ p["w"]
    return d, grads, captured


# ---------------------------------------------------------------------------
# public ops


def forward(model: Model, batch: np.ndarray) -> np.ndarray:
    """[B,C,H,W] -> logits [B,classes]; deterministic, no randomness."""
    logits, _ = _forward_cached(model, batch, need_cache=False)
    return logits


def cross_entropy_with_grad(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch (log-sum-exp stabilized) and its
    gradient w.r.t. the logits."""
    bsz, classes = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels must lie in [0, {classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    denom = e.sum(axis=1, keepdims=True)
    logp = z - np.log(denom)
    loss = float(-logp[np.arange(bsz), labels].mean())
    d = e / denom
    d[np.arange(bsz), labels] -= 1
    d /= bsz
    return loss, d.astype(logits.dtype)


def loss_and_input_grad(model: Model, batch: np.ndarray, labels) -> tuple[float, np.ndarray]:
    logits, caches = _forward_cached(model, batch, need_cache=True)
    loss, dlogits = cross_entropy_with_grad(logits, labels)
    dx, _, _ = _backward(model, caches, dlogits, want_params=False)
    return loss, dx


def loss_and_param_grads(model: Model, batch: np.ndarray, labels) -> tuple[float, list[dict | None]]:
    logits, caches = _forward_cached(model, batch, need_cache=True)
    loss, dlogits = cross_entropy_with_grad(logits, labels)
    _, grads, _ = _backward(model, caches, dlogits, want_params=True)
    return loss, grads


def logit_input_grad_with_capture(model: Model, batch: np.ndarray, class_index: int,
                                  capture_at: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of one logit w.r.t. a chosen layer's output, plus that
    layer's activations (forward values).  Used by the heatmap module."""
    logits, caches = _forward_cached(model, batch, need_cache=True)
    if not (0 <= class_index < logits.shape[1]):
        raise ValueError(f"class index {class_index} outside [0, {logits.shape[1]})")
    dlogits = np.zeros_like(logits)
    dlogits[:, class_index] = 1
    _, _, captured = _backward(model, caches, dlogits, want_params=False, capture_at=capture_at)
    # replay forward up to the capture point for the activations
    x = batch
    for layer, p in zip(model.spec.layers[: capture_at + 1], model.params[: capture_at + 1]):
        if isinstance(layer, Conv):
            x, _ = _conv_forward(x, layer, p, need_cache=False)
        elif isinstance(layer, Relu):
            x = np.maximum(x, 0)
        elif isinstance(layer, MaxPool):
            x, _ = _maxpool_forward(x, need_cache=False)
        elif isinstance(layer, GlobalAvgPool):
            x = x.mean(axis=(2, 3))
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            x = x @ p["w"].T + p["b"]
    return captured, x


# ---------------------------------------------------------------------------
# training and evaluation


@dataclass
class Checkpoint:
    model: Model
    metadata: dict[str, str] = field(default_factory=dict)


def train(spec: ModelSpec, dataset, epochs: int, lr: float, momentum: float = 0.9,
          seed: int = 0, batch_size: int = 64, dtype=DEFAULT_DTYPE, name: str = "") -> Checkpoint:
    """Plain SGD with momentum; shuffle order is fixed by the seed, so the
    returned checkpoint is deterministic for fixed inputs."""
    images = np.asarray(dataset.images, dtype=dtype)
    labels = np.asarray(dataset.labels)
    if images.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    model = init_model(spec, seed=seed, dtype=dtype, name=name)
    velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in model.params]
    shuffle_rng = Rng(seed).split(1)
    count = images.shape[0]
    for epoch in range(epochs):
        erng = shuffle_rng.split(epoch)
        order = list(range(count))
        for i in range(count - 1):
            j = i + erng.below(count - i)
            order[i], order[j] = order[j], order[i]
        for start in range(0, count, batch_size):
            sel = order[start : start + batch_size]
            _, grads = loss_and_param_grads(model, images[sel], labels[sel])
            for p, v, g in zip(model.params, velocity, grads):
                if not g:
                    continue
                for key in p:
                    v[key] = momentum * v[key] + g[key]
                    p[key] -= dtype(lr) * v[key]
    meta = {
        "dataset": getattr(dataset, "split", ""),
        "epochs": str(epochs),
        "seed": str(seed),
        "lr": repr(lr),
        "spec_sha": spec_sha(spec),
        "name": name,
    }
    return Checkpoint(model, meta)


def accuracy(model: Model, dataset, batch_size: int = 256) -> float:
    """Fraction of argmax-correct predictions (ties -> lowest class index)."""
    images = np.asarray(dataset.images, dtype=model.dtype)
    labels = np.asarray(dataset.labels)
    if images.shape[0] == 0:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    hits = 0
    for start in range(0, images.shape[0], batch_size):
        logits = forward(model, images[start : start + batch_size])
        hits += int((logits.argmax(axis=1) == labels[start : start + batch_size]).sum())
    return hits / images.shape[0]


def predict(model: Model, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Argmax class per image, [B] int array."""
    out = np.empty(images.shape[0], dtype=np.int64)
    images = np.asarray(images, dtype=model.dtype)
    for start in range(0, images.shape[0], batch_size):
        logits = forward(model, images[start : start + batch_size])
        out[start : start + logits.shape[0]] = logits.argmax(axis=1)
    return out


def last_conv_index(spec: ModelSpec) -> int:
    for i in range(len(spec.layers) - 1, -1, -1):
        if isinstance(spec.layers[i], Conv):
            return i
    raise ValueError("model has no conv layer")
