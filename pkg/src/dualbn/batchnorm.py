"""BatchNorm with two routable statistic branches.

A DualBatchNorm owns per-channel affine parameters and per-branch running
statistics.  Three sharing modes:

  SINGLE          one set of everything; BranchId is ignored (both branch
                  views alias the same storage).
  SHARED_AFFINE   gamma/beta shared, running statistics per branch.
  FULLY_SEPARATE  nothing shared.

Normalization uses biased (population) batch variance over the N,H,W axes,
and the same convention feeds the running averages:
r <- (1-m)*r + m*batch_stat.
"""

import enum

import numpy as np

from .errors import ContractViolation, DegenerateBatch, UninitializedStatistics
from .ops import DTYPE, Param


class BranchId(enum.Enum):
    MAIN = "main"
    AUXILIARY = "auxiliary"


class BnMode(enum.Enum):
    SINGLE = "single"
    SHARED_AFFINE = "shared_affine"
    FULLY_SEPARATE = "fully_separate"


BRANCHES = (BranchId.MAIN, BranchId.AUXILIARY)


# ---------------------------------------------------------------------------
# Pure transform cores (no state); shared by the layer and by gradient tests
# ---------------------------------------------------------------------------

def bn_train_core(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    """Normalize x (N,C,H,W) by its own batch statistics; returns (y, cache).

    Batch mean and biased variance are accumulated in float64.
    """
    if x.ndim != 4:
        raise ContractViolation(f"batchnorm wants NCHW, got {x.shape}")
    n, c, h, w = x.shape
    m = n * h * w
    if m < 2:
        raise DegenerateBatch(f"batch variance undefined for N*H*W = {m}")
    mean = np.mean(x, axis=(0, 2, 3), dtype=np.float64)
    var = np.mean((x.astype(np.float64) - mean[None, :, None, None]) ** 2, axis=(0, 2, 3))
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x - mean.astype(x.dtype)[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv_std, gamma, m)
    return y, mean.astype(DTYPE), var.astype(DTYPE), cache


def bn_backward_core(cache, dy: np.ndarray):
    """Full batch-coupled gradient (includes dmean/dx and dvar/dx terms)."""
    xhat, inv_std, gamma, m = cache
    dt = dy.dtype
    dgamma = np.sum(dy * xhat, axis=(0, 2, 3), dtype=np.float64).astype(dt)
    dbeta = np.sum(dy, axis=(0, 2, 3), dtype=np.float64).astype(dt)
    dxhat = dy * gamma[None, :, None, None]
    sum_dxhat = np.sum(dxhat, axis=(0, 2, 3), dtype=np.float64)
    sum_dxhat_xhat = np.sum(dxhat * xhat, axis=(0, 2, 3), dtype=np.float64)
    dx = (inv_std[None, :, None, None] / np.float64(m).astype(dt)) * (
        m * dxhat
        - sum_dxhat.astype(dt)[None, :, None, None]
        - xhat * sum_dxhat_xhat.astype(dt)[None, :, None, None]
    )
    return dx.astype(dt), dgamma, dbeta


def bn_eval_core(x: np.ndarray, gamma, beta, running_mean, running_var, eps: float):
    inv_std = (1.0 / np.sqrt(running_var.astype(np.float64) + eps)).astype(x.dtype)
    return (gamma * inv_std)[None, :, None, None] * x + \
        (beta - gamma * running_mean * inv_std)[None, :, None, None]


# ---------------------------------------------------------------------------
# Stateful layer
# ---------------------------------------------------------------------------

class DualBatchNorm:
    """Per-channel BatchNorm with branch-routed statistics.

    Mutation (running-stat updates, gradient accumulation) belongs to the
    single training thread; eval forwards are read-only.
    """

    def __init__(self, channels: int, mode: BnMode, momentum: float = 0.1,
                 eps: float = 1e-5, name: str = "bn"):
        if not 0.0 < momentum < 1.0:
            raise ContractViolation(f"momentum must be in (0,1), got {momentum}")
        if eps <= 0.0:
            raise ContractViolation(f"eps must be positive, got {eps}")
        self.channels = channels
        self.mode = mode
        self.momentum = momentum
        self.eps = eps
        self.name = name

        def affine(branch_tag):
            return (
                Param(np.ones(channels, DTYPE), name=f"{name}.gamma{branch_tag}", weight_decay=False),
                Param(np.zeros(channels, DTYPE), name=f"{name}.beta{branch_tag}", weight_decay=False),
            )

        if mode is BnMode.FULLY_SEPARATE:
            gm, bm = affine(".main")
            ga, ba = affine(".aux")
            self._gamma = {BranchId.MAIN: gm, BranchId.AUXILIARY: ga}
            self._beta = {BranchId.MAIN: bm, BranchId.AUXILIARY: ba}
        else:
            g, b = affine("")
            self._gamma = {BranchId.MAIN: g, BranchId.AUXILIARY: g}
            self._beta = {BranchId.MAIN: b, BranchId.AUXILIARY: b}

        def stats():
            return {"mean": np.zeros(channels, DTYPE), "var": np.ones(channels, DTYPE),
                    "count": 0}

        if mode is BnMode.SINGLE:
            shared = stats()
            self._stats = {BranchId.MAIN: shared, BranchId.AUXILIARY: shared}
        else:
            self._stats = {BranchId.MAIN: stats(), BranchId.AUXILIARY: stats()}

    # -- views ------------------------------------------------------------

    def gamma(self, branch: BranchId) -> Param:
        return self._gamma[branch]

    def beta(self, branch: BranchId) -> Param:
        return self._beta[branch]

    def running_mean(self, branch: BranchId) -> np.ndarray:
        return self._stats[branch]["mean"]

    def running_var(self, branch: BranchId) -> np.ndarray:
        return self._stats[branch]["var"]

    def update_count(self, branch: BranchId) -> int:
        return self._stats[branch]["count"]

    def params(self):
        """Unique affine Params (deduplicated across aliased branches)."""
        seen = []
        for br in BRANCHES:
            for p in (self._gamma[br], self._beta[br]):
                if not any(p is q for q in seen):
                    seen.append(p)
        return seen

    def branch_params(self, branch: BranchId):
        return [self._gamma[branch], self._beta[branch]]

    # -- forward / backward ------------------------------------------------

    def forward_train(self, x: np.ndarray, branch: BranchId):
        """Batch-statistic forward; updates this branch's running stats."""
        self._check_channels(x)
        g = self._gamma[branch].value
        b = self._beta[branch].value
        y, mean, var, core_cache = bn_train_core(x, g, b, self.eps)
        st = self._stats[branch]
        m = DTYPE(self.momentum)
        st["mean"] = ((1 - m) * st["mean"] + m * mean).astype(DTYPE)
        st["var"] = ((1 - m) * st["var"] + m * var).astype(DTYPE)
        st["count"] += 1
        return y, (branch, core_cache)

    def forward_eval(self, x: np.ndarray, branch: BranchId) -> np.ndarray:
        """Running-statistic forward; no state mutation."""
        self._check_channels(x)
        st = self._stats[branch]
        if st["count"] == 0:
            raise UninitializedStatistics(
                f"{self.name}: branch {branch.value} has never been updated"
            )
        return bn_eval_core(x, self._gamma[branch].value, self._beta[branch].value,
                            st["mean"], st["var"], self.eps).astype(x.dtype)

    def backward(self, cache, dy: np.ndarray, branch: BranchId):
        """Returns dx; accumulates dgamma/dbeta into the routed branch's params."""
        cached_branch, core_cache = cache
        if cached_branch is not branch:
            raise ContractViolation(
                f"{self.name}: backward branch {branch.value} does not match "
                f"forward cache branch {cached_branch.value}"
            )
        dx, dgamma, dbeta = bn_backward_core(core_cache, dy)
        self._gamma[branch].grad += dgamma
        self._beta[branch].grad += dbeta
        return dx

    # -- misc ---------------------------------------------------------------

    def _check_channels(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ContractViolation(
                f"{self.name}: input {x.shape} does not carry {self.channels} channels"
            )

    def load_stats(self, branch: BranchId, mean, var, count: int):
        """Overwrite one branch's running statistics (checkpoint restore)."""
        st = self._stats[branch]
        st["mean"][...] = np.asarray(mean, dtype=DTYPE)
        st["var"][...] = np.asarray(var, dtype=DTYPE)
        st["count"] = int(count)

    def state_snapshot(self, branch: BranchId):
        """Deep copy of everything observable through one branch."""
        st = self._stats[branch]
        return {
            "gamma": self._gamma[branch].value.copy(),
            "beta": self._beta[branch].value.copy(),
            "mean": st["mean"].copy(),
            "var": st["var"].copy(),
            "count": st["count"],
        }
