"""Dual-branch training step, SGD with momentum, and the epoch loop.

The dual step runs two sequential forward/backward passes over the same
underlying images (main policy on the Main branch, auxiliary policy on
the Auxiliary branch), each backward scaled by 0.5, so the accumulated
gradient equals the gradient of (L_main + L_aux) / 2. One optimizer
update follows. A single-branch step is the dual step minus the
auxiliary pass, with unit loss scale.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .augment import AlternatingPolicy, AugmentPolicy, apply_policy, policy_preset
from .batchnorm import BranchId
from .data import Dataset, batches, standardize
from .errors import ConfigError, ContractViolation
from .model import ModelConfig, Network
from .rng import BRANCH_KEY_AUX, BRANCH_KEY_MAIN, augment_stream


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 10
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    dual_enabled: bool = False
    main_policy: object = field(default_factory=lambda: policy_preset("flip_crop"))
    aux_policy: object = field(default_factory=lambda: policy_preset("randaugment"))
    seed: int = 0
    decay_norm_and_bias: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0,1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class StepLog:
    step: int
    epoch: int
    lr: float
    loss_main: float
    loss_aux: float  # nan when the step had no auxiliary pass
    loss_total: float


LOG_COLUMNS = ("step", "epoch", "lr", "loss_main", "loss_aux", "loss_total")


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    if total_steps <= 0:
        raise ContractViolation(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ContractViolation(f"step {step} outside [0, {total_steps}]")
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * step / total_steps))


def sgd_update(params, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
               decay_norm_and_bias: bool = False):
    """v <- momentum*v + (g + wd*theta); theta <- theta - lr*v, in place."""
    for p in params:
        g = p.grad
        if weight_decay > 0.0 and (p.weight_decay or decay_norm_and_bias):
            g = g + np.float32(weight_decay) * p.value
        p.velocity *= np.float32(momentum)
        p.velocity += g
        p.value -= np.float32(lr) * p.velocity


def _select(policy, step: int) -> AugmentPolicy:
    if isinstance(policy, AlternatingPolicy):
        return policy.select(step)
    return policy


def _branch_pass(net: Network, clean, labels, policy, rngs, train_ds_stats,
                 branch: BranchId, loss_scale: float):
    """Augment, standardize, forward, backward. Returns the branch loss."""
    mean, std = train_ds_stats
    x = standardize(apply_policy(clean, policy, rngs), mean, std)
    logits, cache = net.forward(x, branch, train=True)
    loss, _, ce_cache = ops.softmax_cross_entropy(logits, labels)
    dlogits = ops.softmax_cross_entropy_backward(ce_cache, dloss=loss_scale)
    net.backward(cache, dlogits, branch)
    return float(loss)


def train_step(net: Network, clean, labels, image_indices, cfg: TrainConfig,
               step: int, epoch: int, lr: float) -> StepLog:
    """One optimizer update; dual variant routes a second pass through Auxiliary."""
    net.zero_grads()
    stats = (np.asarray(net.stand_mean), np.asarray(net.stand_std))
    main_policy = _select(cfg.main_policy, step)
    scale = 0.5 if cfg.dual_enabled else 1.0
    rngs_m = [augment_stream(cfg.seed, epoch, int(i), BRANCH_KEY_MAIN) for i in image_indices]
    loss_m = _branch_pass(net, clean, labels, main_policy, rngs_m, stats,
                          BranchId.MAIN, scale)
    if cfg.dual_enabled:
        rngs_a = [augment_stream(cfg.seed, epoch, int(i), BRANCH_KEY_AUX)
                  for i in image_indices]
        loss_a = _branch_pass(net, clean, labels, _select(cfg.aux_policy, step), rngs_a,
                              stats, BranchId.AUXILIARY, scale)
        total = 0.5 * (loss_m + loss_a)
    else:
        loss_a = float("nan")
        total = loss_m
    sgd_update(net.params(), lr, cfg.momentum, cfg.weight_decay, cfg.decay_norm_and_bias)
    return StepLog(step, epoch, lr, loss_m, loss_a, total)


def train_model(net: Network, train_ds: Dataset, cfg: TrainConfig,
                on_epoch_end=None) -> list:
    """Run the full schedule; mutates net, returns the per-step log.

    Standardization statistics are pinned onto the net (stand_mean/stand_std)
    so checkpoints and evaluation stay self-contained.
    """
    net.stand_mean = np.asarray(train_ds.mean, dtype=np.float64)
    net.stand_std = np.asarray(train_ds.std, dtype=np.float64)
    n = len(train_ds)
    steps_per_epoch = math.ceil(n / cfg.batch_size) if n else 0
    total_steps = cfg.epochs * steps_per_epoch
    log = []
    step = 0
    for epoch in range(cfg.epochs):
        for idx, images, labels in batches(train_ds, cfg.batch_size, epoch, cfg.seed):
            lr = cosine_lr(step, total_steps, cfg.lr)
            log.append(train_step(net, images, labels, idx, cfg, step, epoch, lr))
            step += 1
        if on_epoch_end is not None:
            on_epoch_end(epoch, net, log)
    return log
