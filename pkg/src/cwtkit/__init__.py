"""cwtkit: block-wise image-transformation attack toolkit.

Differentiable block transforms (shrink/enlarge interpolation, selective
rotation, random crop) with exact adjoints, a momentum sign-gradient attack
engine with transformation-averaged gradients, baseline transforms
(resize-and-pad diversity, scale copies, block shuffle-and-rotate), a small
trainable convnet stack, Grad-CAM heatmaps, and a transferability
evaluation harness.  Everything is deterministic under a seed.
"""

__version__ = "0.1.0"

# the attack() entry point itself lives at cwtkit.attack.attack; re-exporting
# it here would shadow the submodule
from .attack import AttackConfig, attack_batch, averaged_gradient, make_plugin, mifgsm_step
from .data import Dataset, filter_correct, load_cifar10_bin, load_mnist_idx, read_tnsr, write_tnsr
from .evaluate import AsrReport, aggregate, attack_success_rate, evaluate_transfer, sweep
from .explain import Heatmap, export_heatmap, grad_cam
from .nn import Checkpoint, Model, ModelSpec, accuracy, forward, init_model, preset_spec, train
from .rng import Rng, sample_without_replacement
from .transforms import (
    BILINEAR,
    NEAREST,
    BlockGrid,
    BsrTrace,
    CwtParams,
    CwtTrace,
    DimTrace,
    bsr_transform,
    crop,
    crop_vjp,
    cwt_forward,
    cwt_sample,
    cwt_vjp,
    dim_transform,
    partition,
    reassemble,
    resize,
    resize_vjp,
    rotate,
    rotate_vjp,
    sim_copies,
)
