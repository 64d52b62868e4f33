"""Grad-CAM heatmaps over the built-in convnets.

Channel weights are the spatial mean of the chosen logit's gradient at a
conv layer's output; the heatmap is relu of the weighted activation sum,
bilinearly upsampled to the input size and max-normalized (an identically
zero map stays zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, transforms


@dataclass(frozen=True)
class Heatmap:
    values: np.ndarray  # [H, W] in [0, 1]
    layer: int          # index of the conv layer used
    class_index: int


def grad_cam(model: nn.Model, image: np.ndarray, class_index: int,
             layer: int | None = None) -> Heatmap:
    """Build the class-activation heatmap for one [C,H,W] image.

    `layer` indexes into the model's layer list and must name a conv layer;
    the default is the last conv layer.
    """
    if layer is None:
        layer = nn.last_conv_index(model.spec)
    if not (0 <= layer < len(model.spec.layers)) or not isinstance(model.spec.layers[layer], nn.Conv):
        raise ValueError(f"layer {layer} is not a conv layer of this model")
    grad, acts = nn.logit_input_grad_with_capture(
        model, image[None].astype(model.dtype), class_index, capture_at=layer
    )
    weights = grad[0].mean(axis=(1, 2))                       # [K]
    cam = np.maximum((weights[:, None, None] * acts[0]).sum(axis=0), 0)
    h, w = image.shape[1:]
    cam = transforms.resize(cam[None].astype(np.float64), h, w, transforms.BILINEAR)[0]
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    return Heatmap(cam, layer, class_index)


def export_heatmap(heatmap: Heatmap, path: str, image: np.ndarray | None = None) -> None:
    """Write the map as 8-bit binary NetPBM.

    Without `image`: grayscale P5, byte = round(255 * value).  With `image`
    (the [C,H,W] input in [0,1]): P6 overlay whose red channel is the image
    blended toward full red by the heatmap value; green/blue stay put.
    """
    v = np.clip(heatmap.values, 0.0, 1.0)
    if image is None:
        payload = np.round(255.0 * v).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (v.shape[1], v.shape[0]))
            fh.write(payload.tobytes())
        return
    if image.shape[1:] != v.shape:
        raise ValueError(f"overlay image {image.shape[1:]} does not match heatmap {v.shape}")
    rgb = np.repeat(image, 3, axis=0)[:3] if image.shape[0] == 1 else image[:3].copy()
    rgb = np.clip(rgb.astype(np.float64), 0.0, 1.0)
    rgb[0] = rgb[0] * (1.0 - v) + v
    payload = np.round(255.0 * rgb).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (v.shape[1], v.shape[0]))
        fh.write(payload.tobytes())
