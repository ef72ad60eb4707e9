"""Pre-activation wide residual network with branch-routed normalization.

Layout: 3x3 conv stem, three groups of pre-activation basic blocks at
widths 16k/32k/64k (stride 2 entering groups 2 and 3, 1x1 projection
shortcut whenever width or stride changes), then a final BN-ReLU,
global average pool, and a dense head. Every normalization layer is a
DualBatchNorm, so forward/backward carry an explicit BranchId.

Convs are bias-free (affine BN follows each one); the head keeps a bias.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .batchnorm import BnMode, BranchId, DualBatchNorm
from .errors import ConfigError, ContractViolation
from .ops import DTYPE, Param
from .rng import DOMAIN_INIT, stream


@dataclass(frozen=True)
class ModelConfig:
    depth: int = 10
    width: int = 1
    in_channels: int = 3
    num_classes: int = 10
    bn_mode: BnMode = BnMode.SINGLE
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.depth < 10 or (self.depth - 4) % 6 != 0:
            raise ConfigError(f"depth must be 6n+4 with n >= 1, got {self.depth}")
        if self.width < 1:
            raise ConfigError(f"width multiplier must be >= 1, got {self.width}")
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")

    @property
    def blocks_per_group(self) -> int:
        return (self.depth - 4) // 6

    @property
    def group_widths(self):
        return (16 * self.width, 32 * self.width, 64 * self.width)


def _he_conv(rng, c_out, c_in, k, name):
    std = np.sqrt(2.0 / (c_in * k * k))
    w = rng.normal(0.0, std, size=(c_out, c_in, k, k))
    return Param(w.astype(DTYPE), name=name)


class _Block:
    """BN-ReLU-conv3x3 twice, plus identity or 1x1 projection shortcut."""

    def __init__(self, rng, c_in, c_out, stride, mode, momentum, eps, name):
        self.stride = stride
        self.project = stride != 1 or c_in != c_out
        self.bn1 = DualBatchNorm(c_in, mode, momentum, eps, name=f"{name}.bn1")
        self.conv1 = _he_conv(rng, c_out, c_in, 3, f"{name}.conv1")
        self.bn2 = DualBatchNorm(c_out, mode, momentum, eps, name=f"{name}.bn2")
        self.conv2 = _he_conv(rng, c_out, c_out, 3, f"{name}.conv2")
        self.proj = _he_conv(rng, c_out, c_in, 1, f"{name}.proj") if self.project else None

    def bn_layers(self):
        return [self.bn1, self.bn2]

    def params(self):
        out = self.bn1.params() + [self.conv1] + self.bn2.params() + [self.conv2]
        if self.proj is not None:
            out.append(self.proj)
        return out

    def forward(self, x, branch, train):
        if train:
            h, c_bn1 = self.bn1.forward_train(x, branch)
        else:
            h, c_bn1 = self.bn1.forward_eval(x, branch), None
        a1, c_relu1 = ops.relu(h)
        h, c_conv1 = ops.conv2d(a1, self.conv1.value, stride=self.stride, pad=1)
        if train:
            h, c_bn2 = self.bn2.forward_train(h, branch)
        else:
            h, c_bn2 = self.bn2.forward_eval(h, branch), None
        a2, c_relu2 = ops.relu(h)
        h, c_conv2 = ops.conv2d(a2, self.conv2.value, stride=1, pad=1)
        if self.project:
            s, c_proj = ops.conv2d(a1, self.proj.value, stride=self.stride, pad=0)
        else:
            s, c_proj = x, None
        cache = (c_bn1, c_relu1, c_conv1, c_bn2, c_relu2, c_conv2, c_proj) if train else None
        return h + s, cache

    def backward(self, cache, dy, branch):
        c_bn1, c_relu1, c_conv1, c_bn2, c_relu2, c_conv2, c_proj = cache
        da2, dw2 = ops.conv2d_backward(c_conv2, dy)
        self.conv2.grad += dw2
        dh2 = ops.relu_backward(c_relu2, da2)
        dh2 = self.bn2.backward(c_bn2, dh2, branch)
        da1, dw1 = ops.conv2d_backward(c_conv1, dh2)
        self.conv1.grad += dw1
        if self.project:
            da1_proj, dwp = ops.conv2d_backward(c_proj, dy)
            self.proj.grad += dwp
            da1 = da1 + da1_proj
            dx_shortcut = 0.0
        else:
            dx_shortcut = dy
        dh1 = ops.relu_backward(c_relu1, da1)
        dx = self.bn1.backward(c_bn1, dh1, branch)
        return dx + dx_shortcut


class Network:
    """The full model: stem, residual groups, final BN-ReLU-pool-dense head."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = seed
        rng = stream(seed, DOMAIN_INIT)
        mode, mom, eps = config.bn_mode, config.bn_momentum, config.bn_eps
        w16, w32, w64 = config.group_widths

        self.stem = _he_conv(rng, 16, config.in_channels, 3, "stem")
        self.blocks = []
        c_in = 16
        for gi, (width, first_stride) in enumerate(((w16, 1), (w32, 2), (w64, 2))):
            for bi in range(config.blocks_per_group):
                stride = first_stride if bi == 0 else 1
                name = f"group{gi + 1}.block{bi + 1}"
                self.blocks.append(_Block(rng, c_in, width, stride, mode, mom, eps, name))
                c_in = width
        self.bn_final = DualBatchNorm(w64, mode, mom, eps, name="final.bn")
        std = np.sqrt(2.0 / w64)
        self.head_w = Param(rng.normal(0.0, std, size=(w64, config.num_classes)).astype(DTYPE),
                            name="head.w")
        self.head_b = Param(np.zeros(config.num_classes, DTYPE), name="head.b",
                            weight_decay=False)
        # train-split standardization stats; train_model pins the real ones
        self.stand_mean = np.zeros(config.in_channels, dtype=np.float64)
        self.stand_std = np.ones(config.in_channels, dtype=np.float64)

    # -- registries ----------------------------------------------------------

    def bn_layers(self):
        out = []
        for blk in self.blocks:
            out.extend(blk.bn_layers())
        out.append(self.bn_final)
        return out

    def params(self):
        out = [self.stem]
        for blk in self.blocks:
            out.extend(blk.params())
        out.extend(self.bn_final.params())
        out.extend([self.head_w, self.head_b])
        return out

    def param_dict(self):
        d = {}
        for p in self.params():
            if p.name in d:
                raise ContractViolation(f"duplicate parameter name '{p.name}'")
            d[p.name] = p
        return d

    def zero_grads(self):
        for p in self.params():
            p.zero_grad()

    # -- forward / backward ----------------------------------------------------

    def forward(self, x, branch: BranchId, train: bool):
        """Returns (logits, cache); cache is None in eval phase."""
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ContractViolation(
                f"input {x.shape} does not carry {self.config.in_channels} channels")
        if not np.issubdtype(x.dtype, np.floating):
            x = x.astype(DTYPE)
        h, c_stem = ops.conv2d(x, self.stem.value, stride=1, pad=1)
        block_caches = []
        for blk in self.blocks:
            h, c = blk.forward(h, branch, train)
            block_caches.append(c)
        if train:
            h, c_bnf = self.bn_final.forward_train(h, branch)
        else:
            h, c_bnf = self.bn_final.forward_eval(h, branch), None
        a, c_reluf = ops.relu(h)
        pooled, c_pool = ops.global_avg_pool(a)
        logits, c_head = ops.dense(pooled, self.head_w.value, self.head_b.value)
        if not train:
            return logits, None
        cache = {
            "branch": branch,
            "stem": c_stem,
            "blocks": block_caches,
            "bn_final": c_bnf,
            "relu_final": c_reluf,
            "pool": c_pool,
            "head": c_head,
        }
        return logits, cache

    def backward(self, cache, dlogits, branch: BranchId):
        """Accumulates parameter gradients for the routed branch; returns dx."""
        if cache is None:
            raise ContractViolation("backward needs the cache from a train-phase forward")
        if cache["branch"] is not branch:
            raise ContractViolation(
                f"backward branch {branch.value} does not match cached "
                f"{cache['branch'].value}")
        dpool, dwh, dbh = ops.dense_backward(cache["head"], dlogits)
        self.head_w.grad += dwh
        self.head_b.grad += dbh
        da = ops.global_avg_pool_backward(cache["pool"], dpool)
        dh = ops.relu_backward(cache["relu_final"], da)
        dh = self.bn_final.backward(cache["bn_final"], dh, branch)
        for blk, c in zip(reversed(self.blocks), reversed(cache["blocks"])):
            dh = blk.backward(c, dh, branch)
        dx, dws = ops.conv2d_backward(cache["stem"], dh)
        self.stem.grad += dws
        return dx


def build_network(config: ModelConfig, seed: int) -> Network:
    return Network(config, seed)


def parameter_count(net: Network) -> int:
    return int(sum(p.value.size for p in net.params()))
