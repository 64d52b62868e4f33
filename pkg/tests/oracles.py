"""Independent straight-line reference implementations used as test oracles.

Everything here is deliberately naive (scalar loops, direct formula
evaluation) and shares no code with the library paths it checks.
"""

import math

import numpy as np


def bilinear_sample(plane: np.ndarray, sy: float, sx: float) -> float:
    """Direct bilinear evaluation with zero outside the plane."""
    h, w = plane.shape
    y0, x0 = math.floor(sy), math.floor(sx)
    total = 0.0
    for dy, wy in ((0, 1.0 - (sy - y0)), (1, sy - y0)):
        for dx, wx in ((0, 1.0 - (sx - x0)), (1, sx - x0)):
            yy, xx = y0 + dy, x0 + dx
            if 0 <= yy < h and 0 <= xx < w:
                total += wy * wx * float(plane[yy, xx])
    return total


def nearest_sample(plane: np.ndarray, sy: float, sx: float) -> float:
    h, w = plane.shape
    yy, xx = math.floor(sy + 0.5), math.floor(sx + 0.5)
    if 0 <= yy < h and 0 <= xx < w:
        return float(plane[yy, xx])
    return 0.0


def naive_resize(block: np.ndarray, out_h: int, out_w: int, kernel: str = "bilinear") -> np.ndarray:
    """Half-pixel-center resize, one output pixel at a time.  Source
    coordinates are clamped into the plane, so the zero-outside branch of the
    samplers never fires here."""
    c, h, w = block.shape
    out = np.zeros((c, out_h, out_w), dtype=np.float64)
    for ch in range(c):
        for dy in range(out_h):
            for dx in range(out_w):
                sy = min(max((dy + 0.5) * h / out_h - 0.5, 0.0), h - 1.0)
                sx = min(max((dx + 0.5) * w / out_w - 0.5, 0.0), w - 1.0)
                if kernel == "bilinear":
                    out[ch, dy, dx] = bilinear_sample(block[ch], sy, sx)
                else:
                    out[ch, dy, dx] = nearest_sample(block[ch], sy, sx)
    return out


def naive_rotate(block: np.ndarray, angle_deg: float, kernel: str = "bilinear") -> np.ndarray:
    """Inverse-mapping rotation about the center, zero padding."""
    c, h, w = block.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    t = math.radians(angle_deg)
    cos_t, sin_t = math.cos(t), math.sin(t)
    out = np.zeros((c, h, w), dtype=np.float64)
    for ch in range(c):
        for y in range(h):
            for x in range(w):
                sy = cos_t * (y - cy) - sin_t * (x - cx) + cy
                sx = sin_t * (y - cy) + cos_t * (x - cx) + cx
                if kernel == "bilinear":
                    out[ch, y, x] = bilinear_sample(block[ch], sy, sx)
                else:
                    out[ch, y, x] = nearest_sample(block[ch], sy, sx)
    return out


def naive_cwt(image: np.ndarray, trace, params) -> np.ndarray:
    """Unoptimized five-stage composition applied block by block."""
    n = params.n
    _, h, w = image.shape
    base_h, base_w = h // n, w // n
    out = np.zeros_like(image, dtype=np.float64)
    for i in range(n):
        for j in range(n):
            b = i * n + j
            y0, x0 = i * base_h, j * base_w
            bh = h - y0 if i == n - 1 else base_h
            bw = w - x0 if j == n - 1 else base_w
            blk = image[:, y0 : y0 + bh, x0 : x0 + bw].astype(np.float64)
            if params.pre_interpolation:
                ph, pw = trace.pre_sizes[b]
                blk = naive_resize(blk, ph, pw, params.kernel)
            uh, uw = trace.up_sizes[b]
            blk = naive_resize(blk, uh, uw, params.kernel)
            if b in trace.rotated:
                angle = trace.angles[trace.rotated.index(b)]
                blk = naive_rotate(blk, angle, params.kernel)
            oy, ox = trace.offsets[b]
            out[:, y0 : y0 + bh, x0 : x0 + bw] = blk[:, oy : oy + bh, ox : ox + bw]
    return out


def fgsm_iterative(loss_and_input_grad, model, x, label, eps, iters, alpha):
    """Plain iterative FGSM (no momentum), straight-line."""
    x_adv = x.copy()
    for _ in range(iters):
        _, grad = loss_and_input_grad(model, x_adv[None], [label])
        grad = grad[0]
        l1 = np.abs(grad).sum()
        step = grad / l1 if l1 > 0 else np.zeros_like(grad)
        g = step  # mu = 0: momentum is just the normalized gradient
        x_adv = x_adv + x.dtype.type(alpha) * np.sign(g)
        x_adv = x + np.clip(x_adv - x, -eps, eps)
        x_adv = np.clip(x_adv, 0.0, 1.0)
    return x_adv


def mifgsm_straight_line(loss_and_input_grad, model, x, label, eps, iters, alpha, mu):
    """Momentum iterative FGSM, straight-line, single copy."""
    x_adv = x.copy()
    g = np.zeros_like(x)
    for _ in range(iters):
        _, grad = loss_and_input_grad(model, x_adv[None], [label])
        grad = grad[0]
        l1 = np.abs(grad).sum()
        step = grad / l1 if l1 > 0 else np.zeros_like(grad)
        g = x.dtype.type(mu) * g + step
        x_adv = x_adv + x.dtype.type(alpha) * np.sign(g)
        x_adv = x + np.clip(x_adv - x, -eps, eps)
        x_adv = np.clip(x_adv, 0.0, 1.0)
    return x_adv


def naive_conv2d(x, w, b, stride, pad):
    """Direct nested-loop convolution (cross-correlation), zero padding."""
    bsz, c, h, wid = x.shape
    oc, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wid + 2 * pad - k) // stride + 1
    out = np.zeros((bsz, oc, oh, ow), dtype=np.float64)
    for bi in range(bsz):
        for o in range(oc):
            for y in range(oh):
                for xx in range(ow):
                    acc = 0.0
                    for ch in range(c):
                        for ky in range(k):
                            for kx in range(k):
                                acc += float(xp[bi, ch, y * stride + ky, xx * stride + kx]) \
                                       * float(w[o, ch, ky, kx])
                    out[bi, o, y, xx] = acc + float(b[o])
    return out


def central_difference(loss_fn, array, index, h):
    """(J(a+h) - J(a-h)) / 2h at one coordinate, restoring the array."""
    orig = array[index]
    array[index] = orig + h
    lp = loss_fn()
    array[index] = orig - h
    lm = loss_fn()
    array[index] = orig
    return (lp - lm) / (2.0 * h)
