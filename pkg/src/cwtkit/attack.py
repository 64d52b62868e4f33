"""Momentum sign-gradient attack engine with pluggable input transforms.

The engine maximizes cross-entropy under an L-infinity budget: per iteration
it averages the input gradient over N independently transformed copies of
the current iterate (each transform supplies forward and adjoint passes),
l1-normalizes the average into a momentum accumulator, steps by
alpha * sign(momentum), projects back into the epsilon-ball, and clamps to
the valid pixel range [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, transforms
from .rng import Rng

PLUGIN_NAMES = ("identity", "cwt", "dim", "sim", "bsr")


@dataclass(frozen=True)
class AttackConfig:
    eps: float = 16 / 255
    iters: int = 10
    alpha: float | None = None  # None -> eps / iters
    mu: float = 1.0
    num_copies: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.num_copies < 1:
            raise ValueError(f"num_copies must be >= 1, got {self.num_copies}")

    @property
    def step_size(self) -> float:
        return self.alpha if self.alpha is not None else self.eps / self.iters


@dataclass
class AttackState:
    x_clean: np.ndarray
    x_adv: np.ndarray
    g: np.ndarray
    t: int = 0


# ---------------------------------------------------------------------------
# transform plugins: sample / forward / vjp triples over the trace


class IdentityTransform:
    name = "identity"

    def sample(self, rng: Rng, image_dims, copy_index: int):
        return None

    def forward(self, image, trace):
        return image

    def vjp(self, upstream, trace):
        return upstream


class CwtTransform:
    name = "cwt"

    def __init__(self, params: transforms.CwtParams | None = None):
        self.params = params or transforms.CwtParams()

    def sample(self, rng, image_dims, copy_index):
        return transforms.cwt_sample(self.params, image_dims, rng)

    def forward(self, image, trace):
        return transforms.cwt_forward(image, trace, self.params)

    def vjp(self, upstream, trace):
        return transforms.cwt_vjp(upstream, trace, self.params)


class DimTransform:
    name = "dim"

    def sample(self, rng, image_dims, copy_index):
        return transforms.dim_sample(image_dims, rng)

    def forward(self, image, trace):
        return transforms.dim_forward(image, trace)

    def vjp(self, upstream, trace):
        return transforms.dim_vjp(upstream, trace)


class SimTransform:
    """Scale-copy series: copy i is image * 2^-i (no randomness)."""

    name = "sim"

    def sample(self, rng, image_dims, copy_index):
        return copy_index

    def forward(self, image, trace):
        return transforms.sim_scale(image, trace)

    def vjp(self, upstream, trace):
        return transforms.sim_vjp(upstream, trace)


class BsrTransform:
    name = "bsr"

    def __init__(self, n: int = 2, r_max_deg: float = 24.0):
        self.n = n
        self.r_max_deg = r_max_deg

    def sample(self, rng, image_dims, copy_index):
        return transforms.bsr_sample(image_dims, self.n, self.r_max_deg, rng)

    def forward(self, image, trace):
        return transforms.bsr_forward(image, trace)

    def vjp(self, upstream, trace):
        return transforms.bsr_vjp(upstream, trace)


def make_plugin(name: str, *, cwt_params: transforms.CwtParams | None = None,
                bsr_n: int = 2, bsr_r_max_deg: float = 24.0):
    if name in ("identity", "mifgsm"):
        return IdentityTransform()
    if name == "cwt":
        return CwtTransform(cwt_params)
    if name == "dim":
        return DimTransform()
    if name == "sim":
        return SimTransform()
    if name == "bsr":
        return BsrTransform(bsr_n, bsr_r_max_deg)
    raise ValueError(f"unknown transform plugin {name!r}; have {PLUGIN_NAMES}")


# ---------------------------------------------------------------------------
# engine


def _averaged_gradient(model, x_adv, label, plugin, num_copies, rng):
    """Mean over copies of the pulled-back input gradient, plus the mean loss.

    All copies go through the model as one batch; the batch-mean loss already
    carries the 1/N factor, so summing the per-copy adjoints yields the
    average.  Copies are reduced in ascending index order.
    """
    h, w = x_adv.shape[1:]
    traces = []
    copies = np.empty((num_copies,) + x_adv.shape, dtype=x_adv.dtype)
    for i in range(num_copies):
        trace = plugin.sample(rng.split(i), (h, w), i)
        traces.append(trace)
        copies[i] = plugin.forward(x_adv, trace)
    loss, grads = nn.loss_and_input_grad(model, copies, [label] * num_copies)
    g_bar = np.zeros_like(x_adv)
    for i in range(num_copies):
        g_bar += plugin.vjp(grads[i], traces[i])
    return g_bar, loss


def averaged_gradient(model, x_adv, label, plugin, num_copies, rng) -> np.ndarray:
    g_bar, _ = _averaged_gradient(model, x_adv, label, plugin, num_copies, rng)
    return g_bar


def mifgsm_step(state: AttackState, config: AttackConfig, g_bar: np.ndarray) -> AttackState:
    """One momentum update: g <- mu*g + g_bar/||g_bar||_1 (zero gradient
    contributes zero), step by alpha*sign(g), project into the eps-ball
    around the clean image, clamp to [0, 1]."""
    if g_bar.shape != state.x_adv.shape:
        raise ValueError(f"gradient shape {g_bar.shape} != image shape {state.x_adv.shape}")
    dtype = state.x_adv.dtype
    l1 = np.abs(g_bar).sum()
    normalized = g_bar / l1 if l1 > 0 else np.zeros_like(g_bar)
    g = dtype.type(config.mu) * state.g + normalized
    x = state.x_adv + dtype.type(config.step_size) * np.sign(g)
    x = state.x_clean + np.clip(x - state.x_clean, -config.eps, config.eps)
    x = np.clip(x, 0.0, 1.0)
    return AttackState(state.x_clean, x, g, state.t + 1)


def attack(model, x: np.ndarray, label: int, config: AttackConfig, plugin,
           rng: Rng | None = None, iter_log: list | None = None) -> np.ndarray:
    """Run the full attack on one [C,H,W] image in [0,1]; returns the final
    iterate, which satisfies the budget and pixel-range invariants.

    `iter_log`, when given, collects (iteration, loss, linf) rows.
    """
    if x.min() < 0 or x.max() > 1:
        raise ValueError("input image must lie in [0, 1]")
    root = rng if rng is not None else Rng(config.seed)
    state = AttackState(x, x.copy(), np.zeros_like(x))
    for t in range(config.iters):
        g_bar, loss = _averaged_gradient(model, state.x_adv, label, plugin,
                                         config.num_copies, root.split(t))
        state = mifgsm_step(state, config, g_bar)
        if iter_log is not None:
            linf = float(np.abs(state.x_adv - x).max())
            iter_log.append((t + 1, loss, linf))
    return state.x_adv


def attack_batch(model, images: np.ndarray, labels, config: AttackConfig, plugin,
                 rng: Rng | None = None) -> np.ndarray:
    """Attack each image independently; image i uses child stream split(i) so
    results do not depend on evaluation order."""
    root = rng if rng is not None else Rng(config.seed)
    out = np.empty_like(images)
    for i in range(images.shape[0]):
        out[i] = attack(model, images[i], int(labels[i]), config, plugin, rng=root.split(i))
    return out
