"""Built-in invariant suite: adjoint identities, finite-difference gradient
checks, identity-degeneracy of the transforms, and the report-aggregation
oracle.  Grouped so the CLI can print one pass/fail line per group; budgeted
to finish in well under a minute on a laptop CPU.
"""

from __future__ import annotations

import math

import numpy as np

from . import nn, transforms
from .evaluate import aggregate
from .rng import Rng, sample_without_replacement


def _rand_image(rng: Rng, c: int, h: int, w: int, dtype=np.float32) -> np.ndarray:
    flat = np.array([rng.uniform(0.0, 1.0) for _ in range(c * h * w)], dtype=dtype)
    return flat.reshape(c, h, w)


def _rel_adjoint_error(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / (abs(lhs) + 1e-12)


def check_rng() -> tuple[bool, str]:
    a, b = Rng(12345), Rng(12345)
    if [a.next_u64() for _ in range(64)] != [b.next_u64() for _ in range(64)]:
        return False, "equal seeds diverged"
    if Rng(1).split(0).next_u64() == Rng(1).split(1).next_u64():
        return False, "split streams collide"
    r = Rng(7)
    mean = sum(r.uniform(0.0, 1.0) for _ in range(20000)) / 20000
    if abs(mean - 0.5) > 0.02:
        return False, f"uniform mean off: {mean:.4f}"
    counts = [0] * 4
    r = Rng(9)
    for _ in range(2000):
        for i in sample_without_replacement(r, 4, 2):
            counts[i] += 1
    freqs = [c / 2000 for c in counts]
    if any(abs(f - 0.5) > 0.05 for f in freqs):
        return False, f"subset sampling skewed: {freqs}"
    return True, "determinism, uniform mean, subset uniformity"


def check_tensor_ops() -> tuple[bool, str]:
    from . import tensor

    ok = (
        np.array_equal(tensor.add(np.array([1.0, 2.0]), np.array([3.0, 4.0])), [4.0, 6.0])
        and np.array_equal(tensor.clamp(np.array([-0.2, 0.5, 1.3]), 0, 1), [0.0, 0.5, 1.0])
        and np.array_equal(tensor.sign(np.array([-0.5, 0.0, 2.0])), [-1.0, 0.0, 1.0])
        and tensor.l1_norm(np.array([1.0, -2.0, 3.0])) == 6.0
    )
    return ok, "elementwise/sign/l1 examples"


def check_identity_degeneracy(images: int = 10) -> tuple[bool, str]:
    params = transforms.CwtParams(n=2, s_min=1.0, s_max=1.0, k=0)
    rng = Rng(2024)
    for i in range(images):
        img = _rand_image(rng.split(i), 3, 16, 16)
        trace = transforms.cwt_sample(params, (16, 16), rng.split(1000 + i))
        out = transforms.cwt_forward(img, trace, params)
        if not np.array_equal(out, img):
            return False, f"degenerate pipeline is not the bit-exact identity (image {i})"
    blk = _rand_image(rng.split(5000), 2, 7, 9)
    if not np.array_equal(transforms.rotate(blk, 0.0), blk):
        return False, "zero-angle rotation is not the identity"
    if not np.array_equal(transforms.crop(blk, 0, 0, 7, 9), blk):
        return False, "full-extent crop is not the identity"
    return True, f"{images} images, scale-1/k-0 pipeline bit-exact"


def _adjoint_cases(rng: Rng, trials: int):
    """(name, forward, vjp, in_shape, out_shape) closures over fresh traces."""
    cases = []
    for ki, kernel in enumerate((transforms.BILINEAR, transforms.NEAREST)):
        for t in range(trials):
            r = rng.split(1000 * ki + t)
            h, w = 3 + r.below(10), 3 + r.below(10)
            oh, ow = 1 + r.below(14), 1 + r.below(14)
            cases.append((
                f"resize-{kernel}",
                (lambda x, oh=oh, ow=ow, k=kernel: transforms.resize(x, oh, ow, k)),
                (lambda y, h=h, w=w, k=kernel: transforms.resize_vjp(y, h, w, k)),
                (2, h, w), (2, oh, ow),
            ))
    for t in range(trials):
        r = rng.split(31337 + t)
        h, w = 3 + r.below(10), 3 + r.below(10)
        angle = r.uniform(-180.0, 180.0)
        cases.append((
            "rotate",
            (lambda x, a=angle: transforms.rotate(x, a)),
            (lambda y, a=angle: transforms.rotate_vjp(y, a)),
            (2, h, w), (2, h, w),
        ))
    for t in range(trials):
        r = rng.split(52000 + t)
        h, w = 4 + r.below(8), 4 + r.below(8)
        out_h, out_w = 1 + r.below(h), 1 + r.below(w)
        oy, ox = r.below(h - out_h + 1), r.below(w - out_w + 1)
        cases.append((
            "crop",
            (lambda x, oy=oy, ox=ox, out_h=out_h, out_w=out_w:
             transforms.crop(x, oy, ox, out_h, out_w)),
            (lambda y, oy=oy, ox=ox, h=h, w=w: transforms.crop_vjp(y, oy, ox, h, w)),
            (2, h, w), (2, out_h, out_w),
        ))
    for t in range(trials):
        r = rng.split(64000 + t)
        params = transforms.CwtParams(n=2, s_max=1.0 + r.uniform(0.0, 0.5),
                                      k=r.below(5), r_max_deg=45.0,
                                      pre_interpolation=bool(r.below(2)))
        h = w = 12 + r.below(9)
        trace = transforms.cwt_sample(params, (h, w), r)
        cases.append((
            "cwt",
            (lambda x, tr=trace, p=params: transforms.cwt_forward(x, tr, p)),
            (lambda y, tr=trace, p=params: transforms.cwt_vjp(y, tr, p)),
            (3, h, w), (3, h, w),
        ))
    for t in range(trials):
        r = rng.split(77000 + t)
        h = w = 10 + r.below(12)
        trace = transforms.dim_sample((h, w), r)
        cases.append((
            "dim",
            (lambda x, tr=trace: transforms.dim_forward(x, tr)),
            (lambda y, tr=trace: transforms.dim_vjp(y, tr)),
            (3, h, w), (3, h, w),
        ))
    for t in range(trials):
        r = rng.split(88000 + t)
        n = 2 + r.below(2)
        h = w = n * (4 + r.below(4)) + r.below(3)
        trace = transforms.bsr_sample((h, w), n, 30.0, r)
        cases.append((
            "bsr",
            (lambda x, tr=trace: transforms.bsr_forward(x, tr)),
            (lambda y, tr=trace: transforms.bsr_vjp(y, tr)),
            (3, h, w), (3, h, w),
        ))
    return cases


def check_adjoints(trials: int = 20, tol: float = 1e-4) -> tuple[bool, str]:
    rng = Rng(555)
    worst = 0.0
    worst_name = ""
    for case_id, (name, fwd, vjp, in_shape, out_shape) in enumerate(_adjoint_cases(rng, trials)):
        r = rng.split(100000 + case_id)
        x = _rand_image(r, *in_shape)
        y = _rand_image(r, *out_shape)
        lhs = float((fwd(x) * y).sum())
        rhs = float((x * vjp(y)).sum())
        err = _rel_adjoint_error(lhs, rhs)
        if err > worst:
            worst, worst_name = err, name
        if err > tol:
            return False, f"{name}: adjoint identity violated, rel err {err:.2e}"
    return True, f"worst rel err {worst:.2e} ({worst_name})"


def _tiny_spec() -> nn.ModelSpec:
    return nn.ModelSpec((2, 8, 8), (
        nn.Conv(3, 3, 1, 1), nn.Relu(), nn.MaxPool(),
        nn.Conv(4, 3, 1, 0), nn.Relu(), nn.Flatten(), nn.Dense(5),
    ))


def check_gradients(coords: int = 30) -> tuple[bool, str]:
    spec = _tiny_spec()
    model = nn.init_model(spec, seed=3, dtype=np.float64)
    rng = Rng(42)
    x = _rand_image(rng, 2, 8, 8, dtype=np.float64)[None]
    labels = [2]
    h = 1e-6

    _, dx = nn.loss_and_input_grad(model, x, labels)
    worst = 0.0
    for t in range(coords):
        idx = np.unravel_index(rng.below(x.size), x.shape)
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd = (nn.loss_and_input_grad(model, xp, labels)[0]
              - nn.loss_and_input_grad(model, xm, labels)[0]) / (2 * h)
        # denominator floor at the finite-difference noise scale
        err = abs(fd - dx[idx]) / (abs(fd) + abs(dx[idx]) + 1e-4)
        worst = max(worst, err)
        if err > 1e-5:
            return False, f"input grad at {idx}: rel err {err:.2e}"

    _, grads = nn.loss_and_param_grads(model, x, labels)
    for t in range(coords):
        li = rng.below(len(model.params))
        if not model.params[li]:
            continue
        key = "w" if rng.below(2) else "b"
        arr = model.params[li][key]
        idx = np.unravel_index(rng.below(arr.size), arr.shape)
        orig = arr[idx]
        arr[idx] = orig + h
        lp = nn.loss_and_param_grads(model, x, labels)[0]
        arr[idx] = orig - h
        lm = nn.loss_and_param_grads(model, x, labels)[0]
        arr[idx] = orig
        fd = (lp - lm) / (2 * h)
        g = grads[li][key][idx]
        err = abs(fd - g) / (abs(fd) + abs(g) + 1e-4)
        worst = max(worst, err)
        if err > 1e-5:
            return False, f"param grad layer {li} {key}{idx}: rel err {err:.2e}"
    return True, f"float64 central differences, worst rel err {worst:.2e}"


def check_aggregation() -> tuple[bool, str]:
    mean, std = aggregate([100.0, 90.2, 93.7, 99.4, 55.9, 68.8, 84.1, 83.6])
    if abs(mean - 84.5) > 0.05 or abs(std - 14.3) > 0.05:
        return False, f"reference row aggregation off: mean={mean:.3f} std={std:.3f}"
    mean, std = aggregate([42.0])
    if mean != 42.0 or std != 0.0:
        return False, "single-value aggregation wrong"
    vals = [Rng(3).uniform(0, 100) for _ in range(9)]
    mean, std = aggregate(vals)
    if not (math.isclose(mean, float(np.mean(vals)))
            and math.isclose(std, float(np.std(vals)))):
        return False, "aggregation disagrees with the population convention"
    return True, "reference row, single value, population convention"


GROUPS = (
    ("rng", check_rng),
    ("tensor-ops", check_tensor_ops),
    ("identity-degeneracy", check_identity_degeneracy),
    ("adjoints", check_adjoints),
    ("gradient-checks", check_gradients),
    ("aggregation", check_aggregation),
)


def run_selfcheck() -> dict[str, tuple[bool, str]]:
    return {name: fn() for name, fn in GROUPS}
