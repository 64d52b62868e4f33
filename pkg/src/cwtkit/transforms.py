"""Differentiable image transformations and their adjoints.

The central pipeline partitions an image into an n-by-n block grid and runs
each block through shrink-interpolate / enlarge-interpolate / selective
rotation / random crop before reassembling the image.  The classic input
diversity (resize-and-pad), scale-copy, and block shuffle-and-rotate
baselines live here too.

Every transform is linear in the image once its sampled randomness is fixed.
The randomness is captured in a trace object, so a forward pass can be
replayed and its exact adjoint (vector-Jacobian product) evaluated.  Images
and blocks are [C, H, W] arrays; transforms adopt the input dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng, sample_without_replacement

BILINEAR = "bilinear"
NEAREST = "nearest"
_KERNELS = (BILINEAR, NEAREST)

# ---------------------------------------------------------------------------
# block grid


@dataclass(frozen=True)
class BlockGrid:
    """Offsets/sizes of an n-by-n partition; remainder goes to the last
    row/column so the blocks tile the image exactly."""

    height: int
    width: int
    n: int
    row_edges: tuple[int, ...]  # n+1 offsets, row_edges[-1] == height
    col_edges: tuple[int, ...]

    def block_box(self, index: int) -> tuple[int, int, int, int]:
        """(y, x, h, w) of block `index` in row-major order."""
        i, j = divmod(index, self.n)
        y0, y1 = self.row_edges[i], self.row_edges[i + 1]
        x0, x1 = self.col_edges[j], self.col_edges[j + 1]
        return y0, x0, y1 - y0, x1 - x0


def make_grid(height: int, width: int, n: int) -> BlockGrid:
    if n < 1:
        raise ValueError(f"grid needs n >= 1, got {n}")
    if n > min(height, width):
        raise ValueError(
            f"cannot partition a {height}x{width} image into {n}x{n} blocks"
        )
    base_h, base_w = height // n, width // n
    row_edges = tuple(min(i * base_h, height) if i < n else height for i in range(n + 1))
    col_edges = tuple(min(j * base_w, width) if j < n else width for j in range(n + 1))
    return BlockGrid(height, width, n, row_edges, col_edges)


def partition(image: np.ndarray, n: int) -> tuple[BlockGrid, list[np.ndarray]]:
    """Split [C,H,W] into n*n row-major blocks; exact inverse of reassemble."""
    _, h, w = image.shape
    grid = make_grid(h, w, n)
    blocks = []
    for b in range(n * n):
        y, x, bh, bw = grid.block_box(b)
        blocks.append(image[:, y : y + bh, x : x + bw].copy())
    return grid, blocks


def reassemble(grid: BlockGrid, blocks: list[np.ndarray]) -> np.ndarray:
    if len(blocks) != grid.n * grid.n:
        raise ValueError(f"expected {grid.n * grid.n} blocks, got {len(blocks)}")
    c = blocks[0].shape[0]
    out = np.empty((c, grid.height, grid.width), dtype=blocks[0].dtype)
    for b, blk in enumerate(blocks):
        y, x, bh, bw = grid.block_box(b)
        if blk.shape != (c, bh, bw):
            raise ValueError(
                f"block {b} has shape {blk.shape}, grid cell wants {(c, bh, bw)}"
            )
        out[:, y : y + bh, x : x + bw] = blk
    return out


# ---------------------------------------------------------------------------
# resize (separable, half-pixel centers)


def _resize_matrix(n_in: int, n_out: int, kernel: str, dtype) -> np.ndarray:
    """[n_out, n_in] interpolation weights along one axis.

    Half-pixel-center convention: src = (dst + 0.5) * n_in/n_out - 0.5,
    clamped to [0, n_in - 1].  Same-size resize yields the identity matrix
    exactly, so it is a bit-exact no-op.
    """
    if kernel not in _KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}, expected one of {_KERNELS}")
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for d in range(n_out):
        s = min(max((d + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        if kernel == NEAREST:
            m[d, min(int(math.floor(s + 0.5)), n_in - 1)] = 1.0
        else:
            i0 = int(math.floor(s))
            f = s - i0
            i1 = min(i0 + 1, n_in - 1)
            m[d, i0] += 1.0 - f
            m[d, i1] += f
    return m.astype(dtype)


def resize(block: np.ndarray, out_h: int, out_w: int, kernel: str = BILINEAR) -> np.ndarray:
    """Interpolate [C,h,w] to [C,out_h,out_w]."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize target must be >= 1x1, got {out_h}x{out_w}")
    _, h, w = block.shape
    my = _resize_matrix(h, out_h, kernel, block.dtype)
    mx = _resize_matrix(w, out_w, kernel, block.dtype)
    return np.einsum("yh,chw,xw->cyx", my, block, mx, optimize=True)


def resize_vjp(upstream: np.ndarray, in_h: int, in_w: int, kernel: str = BILINEAR) -> np.ndarray:
    """Adjoint of resize: pulls [C,out_h,out_w] back to [C,in_h,in_w]."""
    _, out_h, out_w = upstream.shape
    my = _resize_matrix(in_h, out_h, kernel, upstream.dtype)
    mx = _resize_matrix(in_w, out_w, kernel, upstream.dtype)
    return np.einsum("yh,cyx,xw->chw", my, upstream, mx, optimize=True)


# ---------------------------------------------------------------------------
# rotation about the block center, zero padding


def _rotation_stencil(h: int, w: int, angle_deg: float, kernel: str):
    """Gather indices and weights mapping a source block to its rotation.

    Inverse mapping about the center ((h-1)/2, (w-1)/2); source samples that
    fall outside the block carry zero weight.  Returns a list of
    (rows, cols, weights) triples, one per interpolation tap.
    """
    if kernel not in _KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}, expected one of {_KERNELS}")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = ys - cy, xs - cx
    sy = cos_t * dy - sin_t * dx + cy
    sx = sin_t * dy + cos_t * dx + cx

    taps = []
    if kernel == NEAREST:
        ry = np.floor(sy + 0.5).astype(np.int64)
        rx = np.floor(sx + 0.5).astype(np.int64)
        valid = (ry >= 0) & (ry < h) & (rx >= 0) & (rx < w)
        taps.append((np.clip(ry, 0, h - 1), np.clip(rx, 0, w - 1),
                     valid.astype(np.float64)))
        return taps

    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    fy, fx = sy - y0, sx - x0
    for oy, wy in ((0, 1.0 - fy), (1, fy)):
        for ox, wx in ((0, 1.0 - fx), (1, fx)):
            ry, rx = y0 + oy, x0 + ox
            valid = (ry >= 0) & (ry < h) & (rx >= 0) & (rx < w)
            taps.append((np.clip(ry, 0, h - 1), np.clip(rx, 0, w - 1),
                         (wy * wx) * valid))
    return taps


def rotate(block: np.ndarray, angle_deg: float, kernel: str = BILINEAR) -> np.ndarray:
    """Rotate [C,h,w] about its center; padding regions are zero."""
    _, h, w = block.shape
    out = np.zeros_like(block)
    for rows, cols, weights in _rotation_stencil(h, w, angle_deg, kernel):
        out += block[:, rows, cols] * weights.astype(block.dtype)
    return out


def rotate_vjp(upstream: np.ndarray, angle_deg: float, kernel: str = BILINEAR) -> np.ndarray:
    """Adjoint of rotate for the same angle: scatter along the stencil."""
    c, h, w = upstream.shape
    grad = np.zeros_like(upstream)
    for rows, cols, weights in _rotation_stencil(h, w, angle_deg, kernel):
        contrib = upstream * weights.astype(upstream.dtype)
        flat = (rows * w + cols).ravel()
        for ch in range(c):
            np.add.at(grad[ch].reshape(-1), flat, contrib[ch].ravel())
    return grad


# ---------------------------------------------------------------------------
# crop / zero-scatter pair


def crop(block: np.ndarray, oy: int, ox: int, out_h: int, out_w: int) -> np.ndarray:
    _, h, w = block.shape
    if oy < 0 or ox < 0 or oy + out_h > h or ox + out_w > w:
        raise ValueError(
            f"crop window ({oy},{ox})+{out_h}x{out_w} exceeds block {h}x{w}"
        )
    return block[:, oy : oy + out_h, ox : ox + out_w].copy()


def crop_vjp(upstream: np.ndarray, oy: int, ox: int, in_h: int, in_w: int) -> np.ndarray:
    """Place upstream into the crop window of a zero [C,in_h,in_w] tensor."""
    c, out_h, out_w = upstream.shape
    if oy < 0 or ox < 0 or oy + out_h > in_h or ox + out_w > in_w:
        raise ValueError(
            f"crop window ({oy},{ox})+{out_h}x{out_w} exceeds block {in_h}x{in_w}"
        )
    grad = np.zeros((c, in_h, in_w), dtype=upstream.dtype)
    grad[:, oy : oy + out_h, ox : ox + out_w] = upstream
    return grad


# ---------------------------------------------------------------------------
# the block-wise pipeline


@dataclass(frozen=True)
class CwtParams:
    """Configuration of the block-wise transformation.

    n by n blocks; each block is shrunk by a per-block random factor
    s in [s_min, s_max] (when pre_interpolation is on), enlarged by the same
    factor, k blocks are rotated by random angles up to r_max_deg, and every
    block is randomly cropped back to its cell size.  num_copies transformed
    copies are averaged per attack iteration.
    """

    n: int = 2
    num_copies: int = 20
    s_min: float = 1.0
    s_max: float = 1.3
    r_max_deg: float = 26.0
    k: int = 2
    kernel: str = BILINEAR
    pre_interpolation: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.num_copies < 1:
            raise ValueError(f"num_copies must be >= 1, got {self.num_copies}")
        if not (1.0 <= self.s_min <= self.s_max):
            raise ValueError(
                f"scale bounds need 1.0 <= s_min <= s_max, got [{self.s_min}, {self.s_max}]"
            )
        if self.r_max_deg < 0:
            raise ValueError(f"r_max_deg must be >= 0, got {self.r_max_deg}")
        if not (0 <= self.k <= self.n * self.n):
            raise ValueError(f"k must be in [0, n^2={self.n * self.n}], got {self.k}")
        if self.kernel not in _KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}, expected one of {_KERNELS}")


@dataclass(frozen=True)
class CwtTrace:
    """Sampled randomness for one transformed copy (replayable)."""

    height: int
    width: int
    n: int
    scales: tuple[float, ...]              # per block, row-major
    pre_sizes: tuple[tuple[int, int], ...]  # floor(block/s), clamped to >= 1
    up_sizes: tuple[tuple[int, int], ...]   # floor(block*s)
    rotated: tuple[int, ...]               # sorted block indices, len == k
    angles: tuple[float, ...]              # aligned with `rotated`
    offsets: tuple[tuple[int, int], ...]   # per-block crop origin (oy, ox)


def cwt_sample(params: CwtParams, image_dims: tuple[int, int], rng: Rng) -> CwtTrace:
    """Draw one copy's randomness.

    Draw order is part of the determinism contract: block scales row-major,
    then the rotated index set, then angles in ascending block order, then
    per-block crop offsets row-major (oy before ox; a draw is consumed even
    when the offset is forced to 0).
    """
    h, w = image_dims
    grid = make_grid(h, w, params.n)
    nblocks = params.n * params.n

    scales, pre_sizes, up_sizes = [], [], []
    for b in range(nblocks):
        _, _, bh, bw = grid.block_box(b)
        s = rng.uniform(params.s_min, params.s_max)
        scales.append(s)
        pre_sizes.append((max(1, math.floor(bh / s)), max(1, math.floor(bw / s))))
        up_sizes.append((math.floor(bh * s), math.floor(bw * s)))

    rotated = tuple(sample_without_replacement(rng, nblocks, params.k))
    angles = tuple(rng.uniform(-params.r_max_deg, params.r_max_deg) for _ in rotated)

    offsets = []
    for b in range(nblocks):
        _, _, bh, bw = grid.block_box(b)
        uh, uw = up_sizes[b]
        offsets.append((rng.below(uh - bh + 1), rng.below(uw - bw + 1)))

    return CwtTrace(h, w, params.n, tuple(scales), tuple(pre_sizes),
                    tuple(up_sizes), rotated, angles, tuple(offsets))


def _check_trace(trace: CwtTrace, params: CwtParams, c_h_w: tuple[int, int, int]) -> BlockGrid:
    _, h, w = c_h_w
    if (trace.height, trace.width) != (h, w) or trace.n != params.n:
        raise ValueError(
            f"trace was sampled for {trace.height}x{trace.width} n={trace.n}, "
            f"got image {h}x{w} n={params.n}"
        )
    return make_grid(h, w, params.n)


def cwt_forward(image: np.ndarray, trace: CwtTrace, params: CwtParams) -> np.ndarray:
    """Apply one sampled copy of the block-wise pipeline to [C,H,W]."""
    grid = _check_trace(trace, params, image.shape)
    rot_angle = dict(zip(trace.rotated, trace.angles))
    blocks = []
    for b in range(params.n * params.n):
        y, x, bh, bw = grid.block_box(b)
        blk = image[:, y : y + bh, x : x + bw]
        if params.pre_interpolation:
            ph, pw = trace.pre_sizes[b]
            blk = resize(blk, ph, pw, params.kernel)
        uh, uw = trace.up_sizes[b]
        blk = resize(blk, uh, uw, params.kernel)
        if b in rot_angle:
            blk = rotate(blk, rot_angle[b], params.kernel)
        oy, ox = trace.offsets[b]
        blocks.append(crop(blk, oy, ox, bh, bw))
    return reassemble(grid, blocks)


def cwt_vjp(upstream: np.ndarray, trace: CwtTrace, params: CwtParams) -> np.ndarray:
    """Adjoint of cwt_forward for the same trace."""
    grid = _check_trace(trace, params, upstream.shape)
    rot_angle = dict(zip(trace.rotated, trace.angles))
    grad = np.zeros_like(upstream)
    for b in range(params.n * params.n):
        y, x, bh, bw = grid.block_box(b)
        g = upstream[:, y : y + bh, x : x + bw]
        uh, uw = trace.up_sizes[b]
        oy, ox = trace.offsets[b]
        g = crop_vjp(g, oy, ox, uh, uw)
        if b in rot_angle:
            g = rotate_vjp(g, rot_angle[b], params.kernel)
        if params.pre_interpolation:
            ph, pw = trace.pre_sizes[b]
            g = resize_vjp(g, ph, pw, params.kernel)
        g = resize_vjp(g, bh, bw, params.kernel)
        grad[:, y : y + bh, x : x + bw] += g
    return grad


# ---------------------------------------------------------------------------
# resize-and-pad diversity baseline


DIM_PROB = 0.5
DIM_RATIO = 1.1


@dataclass(frozen=True)
class DimTrace:
    height: int
    width: int
    applied: bool
    resized: tuple[int, int] = (0, 0)   # random intermediate size
    pad: tuple[int, int] = (0, 0)       # top/left zero-pad offsets


def dim_sample(image_dims: tuple[int, int], rng: Rng) -> DimTrace:
    h, w = image_dims
    if rng.uniform(0.0, 1.0) >= DIM_PROB:
        return DimTrace(h, w, applied=False)
    hp, wp = math.ceil(DIM_RATIO * h), math.ceil(DIM_RATIO * w)
    rh = h + rng.below(hp - h + 1)
    rw = w + rng.below(wp - w + 1)
    top = rng.below(hp - rh + 1)
    left = rng.below(wp - rw + 1)
    return DimTrace(h, w, True, (rh, rw), (top, left))


def dim_forward(image: np.ndarray, trace: DimTrace) -> np.ndarray:
    if not trace.applied:
        return image.copy()
    h, w = trace.height, trace.width
    hp, wp = math.ceil(DIM_RATIO * h), math.ceil(DIM_RATIO * w)
    rh, rw = trace.resized
    top, left = trace.pad
    out = resize(image, rh, rw, BILINEAR)
    out = crop_vjp(out, top, left, hp, wp)  # zero-pad into the big canvas
    # resizing back to the model's fixed input size; the classic formulation
    # leaves the padded canvas as-is, which fixed-input models cannot accept
    return resize(out, h, w, BILINEAR)


def dim_vjp(upstream: np.ndarray, trace: DimTrace) -> np.ndarray:
    if not trace.applied:
        return upstream.copy()
    h, w = trace.height, trace.width
    hp, wp = math.ceil(DIM_RATIO * h), math.ceil(DIM_RATIO * w)
    rh, rw = trace.resized
    top, left = trace.pad
    g = resize_vjp(upstream, hp, wp, BILINEAR)
    g = crop(g, top, left, rh, rw)
    return resize_vjp(g, h, w, BILINEAR)


def dim_transform(image: np.ndarray, rng: Rng) -> tuple[np.ndarray, DimTrace]:
    trace = dim_sample(image.shape[1:], rng)
    return dim_forward(image, trace), trace


# ---------------------------------------------------------------------------
# scale-copy baseline


def sim_scale(image: np.ndarray, index: int) -> np.ndarray:
    """Copy `index` of the scale series: image * 2^-index."""
    if index < 0:
        raise ValueError(f"scale copy index must be >= 0, got {index}")
    return image * image.dtype.type(2.0 ** -index)


def sim_vjp(upstream: np.ndarray, index: int) -> np.ndarray:
    if index < 0:
        raise ValueError(f"scale copy index must be >= 0, got {index}")
    return upstream * upstream.dtype.type(2.0 ** -index)


def sim_copies(image: np.ndarray, m: int) -> list[np.ndarray]:
    if m < 1:
        raise ValueError(f"need at least one scale copy, got m={m}")
    return [sim_scale(image, i) for i in range(m)]


# ---------------------------------------------------------------------------
# block shuffle-and-rotate baseline


@dataclass(frozen=True)
class BsrTrace:
    height: int
    width: int
    n: int
    perm: tuple[int, ...]     # perm[dest_cell] = source block index
    angles: tuple[float, ...]  # per dest cell, row-major


def bsr_sample(image_dims: tuple[int, int], n: int, r_max_deg: float, rng: Rng) -> BsrTrace:
    h, w = image_dims
    grid = make_grid(h, w, n)
    nblocks = n * n
    # shuffle only within groups of identical block size so every block
    # lands in a cell it fits exactly
    groups: dict[tuple[int, int], list[int]] = {}
    for b in range(nblocks):
        _, _, bh, bw = grid.block_box(b)
        groups.setdefault((bh, bw), []).append(b)
    perm = list(range(nblocks))
    for cells in groups.values():
        shuffled = list(cells)
        for i in range(len(shuffled) - 1):
            j = i + rng.below(len(shuffled) - i)
            shuffled[i], shuffled[j] = shuffled[j], shuffled[i]
        for dest, src in zip(cells, shuffled):
            perm[dest] = src
    angles = tuple(rng.uniform(-r_max_deg, r_max_deg) for _ in range(nblocks))
    return BsrTrace(h, w, n, tuple(perm), angles)


def bsr_forward(image: np.ndarray, trace: BsrTrace) -> np.ndarray:
    if image.shape[1:] != (trace.height, trace.width):
        raise ValueError(
            f"trace was sampled for {trace.height}x{trace.width}, got {image.shape[1:]}"
        )
    grid, blocks = partition(image, trace.n)
    out_blocks = []
    for dest in range(trace.n * trace.n):
        blk = blocks[trace.perm[dest]]
        out_blocks.append(rotate(blk, trace.angles[dest], BILINEAR))
    return reassemble(grid, out_blocks)


def bsr_vjp(upstream: np.ndarray, trace: BsrTrace) -> np.ndarray:
    grid = make_grid(trace.height, trace.width, trace.n)
    grad = np.zeros_like(upstream)
    for dest in range(trace.n * trace.n):
        y, x, bh, bw = grid.block_box(dest)
        g = rotate_vjp(upstream[:, y : y + bh, x : x + bw], trace.angles[dest], BILINEAR)
        sy, sx, _, _ = grid.block_box(trace.perm[dest])
        grad[:, sy : sy + bh, sx : sx + bw] += g
    return grad


def bsr_transform(image: np.ndarray, n: int, r_max_deg: float, rng: Rng) -> tuple[np.ndarray, BsrTrace]:
    trace = bsr_sample(image.shape[1:], n, r_max_deg, rng)
    return bsr_forward(image, trace), trace


# ---------------------------------------------------------------------------
# diagnostics


def trace_debug_text(trace) -> str:
    """key=value dump of any trace dataclass; debugging aid, not a stable format."""
    lines = [f"type={type(trace).__name__}"]
    for name in trace.__dataclass_fields__:
        lines.append(f"{name}={getattr(trace, name)}")
    return "\n".join(lines) + "\n"
