import numpy as np
import pytest

from conftest import upcast_net
from dualbn.batchnorm import BnMode, BranchId
from dualbn.errors import ConfigError, ContractViolation
from dualbn.gradcheck import finite_difference_grad, max_relative_error
from dualbn.model import ModelConfig, build_network, parameter_count
from dualbn.ops import softmax_cross_entropy, softmax_cross_entropy_backward
from dualbn.rng import stream


def batch(seed=0, n=4, c=3, s=8):
    return stream(seed, 99).standard_normal((n, c, s, s)).astype(np.float32)


# ---------------------------------------------------------------------------
# configuration and construction
# ---------------------------------------------------------------------------

def test_depth_must_fit_block_pattern():
    ModelConfig(depth=10)
    ModelConfig(depth=16)
    ModelConfig(depth=28)
    for bad in (8, 12, 18, 9):
        with pytest.raises(ConfigError):
            ModelConfig(depth=bad)


def test_group_widths_scale_with_width_multiplier():
    assert ModelConfig(depth=10, width=1).group_widths == (16, 32, 64)
    assert ModelConfig(depth=10, width=4).group_widths == (64, 128, 256)
    assert ModelConfig(depth=10).blocks_per_group == 1
    assert ModelConfig(depth=28).blocks_per_group == 4


def count_by_hand(depth, width, num_classes, separate_affine=False):
    """Closed-form parameter count, independent of the builder."""
    n = (depth - 4) // 6
    widths = [16 * width, 32 * width, 64 * width]
    total = 3 * 3 * 3 * 16  # stem conv
    bn_channels = 0
    c_in = 16
    for g, c_out in enumerate(widths):
        for b in range(n):
            stride_changes = (g > 0 and b == 0)
            total += 9 * c_in * c_out + 9 * c_out * c_out
            bn_channels += c_in + c_out
            if c_in != c_out or stride_changes:
                total += c_in * c_out  # 1x1 projection
            c_in = c_out
    bn_channels += widths[-1]  # final pre-head normalization
    total += (2 if separate_affine else 1) * 2 * bn_channels
    total += widths[-1] * num_classes + num_classes
    return total


@pytest.mark.parametrize("depth,width,classes,expect", [
    (10, 1, 10, 77850),
    (10, 1, 4, 77460),
    (16, 1, 10, None),
    (10, 2, 10, None),
    (16, 2, 100, None),
])
def test_parameter_count_matches_closed_form(depth, width, classes, expect):
    cfg = ModelConfig(depth=depth, width=width, num_classes=classes)
    net = build_network(cfg, seed=0)
    assert parameter_count(net) == count_by_hand(depth, width, classes)
    if expect is not None:
        assert parameter_count(net) == expect


def test_fully_separate_mode_doubles_affine_parameters():
    shared = build_network(ModelConfig(depth=10, num_classes=10), seed=0)
    split = build_network(
        ModelConfig(depth=10, num_classes=10, bn_mode=BnMode.FULLY_SEPARATE), seed=0)
    extra = parameter_count(split) - parameter_count(shared)
    assert extra == count_by_hand(10, 1, 10, separate_affine=True) - 77850


def test_build_is_seed_deterministic():
    a = build_network(ModelConfig(depth=10, num_classes=4), seed=11)
    b = build_network(ModelConfig(depth=10, num_classes=4), seed=11)
    c = build_network(ModelConfig(depth=10, num_classes=4), seed=12)
    for pa, pb in zip(a.params(), b.params()):
        assert pa.name == pb.name
        assert np.array_equal(pa.value, pb.value)
    assert any(not np.array_equal(pa.value, pc.value)
               for pa, pc in zip(a.params(), c.params()))


def test_parameter_names_unique_and_flagged():
    net = build_network(ModelConfig(depth=16, num_classes=10), seed=0)
    names = [p.name for p in net.params()]
    assert len(names) == len(set(names))
    for p in net.params():
        is_norm_or_bias = ("gamma" in p.name or "beta" in p.name
                           or p.name.endswith(".b"))
        assert p.weight_decay == (not is_norm_or_bias), p.name


# ---------------------------------------------------------------------------
# forward behavior
# ---------------------------------------------------------------------------

def test_forward_shapes_and_finiteness(tiny_net):
    net = tiny_net(num_classes=4)
    for seed in range(5):
        x = batch(seed)
        logits, cache = net.forward(x, BranchId.MAIN, train=True)
        assert logits.shape == (4, 4)
        assert np.all(np.isfinite(logits))
        assert cache is not None


def test_forward_rejects_wrong_channels(tiny_net):
    net = tiny_net()
    with pytest.raises(ContractViolation):
        net.forward(np.zeros((2, 4, 8, 8), np.float32), BranchId.MAIN, train=True)


def test_eval_forward_is_pure(tiny_net):
    net = tiny_net(num_classes=4)
    x = batch(1)
    net.forward(x, BranchId.MAIN, train=True)
    branches = (BranchId.MAIN, BranchId.AUXILIARY)
    snap = [{b: layer.state_snapshot(b) for b in branches}
            for layer in net.bn_layers()]
    y1, cache = net.forward(x, BranchId.MAIN, train=False)
    y2, _ = net.forward(x, BranchId.MAIN, train=False)
    assert cache is None
    assert np.array_equal(y1, y2)
    for layer, before in zip(net.bn_layers(), snap):
        for b in branches:
            after = layer.state_snapshot(b)
            for field in ("mean", "var", "count"):
                assert np.array_equal(np.asarray(before[b][field]),
                                      np.asarray(after[field]))


def test_single_mode_branches_identical(tiny_net):
    net = tiny_net(num_classes=4, mode=BnMode.SINGLE)
    x = batch(2)
    ym, _ = net.forward(x, BranchId.MAIN, train=True)
    net2 = tiny_net(num_classes=4, mode=BnMode.SINGLE)
    ya, _ = net2.forward(x, BranchId.AUXILIARY, train=True)
    assert np.array_equal(ym, ya)


def test_branch_neutral_until_statistics_diverge(tiny_net):
    # with fresh identical affine and per-branch stats untouched, the two
    # branches of a separate-stats net agree on the first training batch
    net = tiny_net(num_classes=4, mode=BnMode.SHARED_AFFINE)
    x = batch(3)
    ym, _ = net.forward(x, BranchId.MAIN, train=True)
    ya, _ = net.forward(x, BranchId.AUXILIARY, train=True)
    assert np.allclose(ym, ya, atol=1e-5)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_backward_zero_upstream_gives_zero_grads(tiny_net):
    net = tiny_net(num_classes=4)
    x = batch(4)
    logits, cache = net.forward(x, BranchId.MAIN, train=True)
    net.zero_grads()
    net.backward(cache, np.zeros_like(logits), BranchId.MAIN)
    for p in net.params():
        assert np.all(p.grad == 0.0), p.name


def test_aux_branch_gradients_stay_on_aux_params(tiny_net):
    net = tiny_net(num_classes=4, mode=BnMode.FULLY_SEPARATE)
    x = batch(5)
    logits, cache = net.forward(x, BranchId.AUXILIARY, train=True)
    net.zero_grads()
    loss, _, lcache = softmax_cross_entropy(logits, np.array([0, 1, 2, 3]))
    net.backward(cache, softmax_cross_entropy_backward(lcache), BranchId.AUXILIARY)
    main_affine = [p for p in net.params() if p.name.endswith(".main")]
    aux_affine = [p for p in net.params() if p.name.endswith(".aux")]
    assert main_affine and aux_affine
    for p in main_affine:
        assert np.all(p.grad == 0.0), p.name
    assert any(np.any(p.grad != 0.0) for p in aux_affine)


@pytest.mark.parametrize("seed", [3, 11, 42])
def test_end_to_end_gradient_against_finite_differences(tiny_net, seed):
    # composed ReLU networks cross activation kinks under coarse probes, so
    # the whole-model check runs in float64 at a small step; per-op checks
    # elsewhere cover the coarse-step contract
    net = upcast_net(tiny_net(seed=seed, num_classes=2))
    rng = stream(seed, 7)
    x = rng.standard_normal((2, 3, 8, 8))
    labels = np.array([0, 1])

    def loss_at(params_flat):
        offset = 0
        for p in net.params():
            p.value = params_flat[offset:offset + p.value.size].reshape(p.value.shape)
            offset += p.value.size
        logits, _ = net.forward(x, BranchId.MAIN, train=True)
        loss, _, _ = softmax_cross_entropy(logits, labels)
        return loss

    theta = np.concatenate([p.value.ravel() for p in net.params()])
    logits, cache = net.forward(x, BranchId.MAIN, train=True)
    loss, _, lcache = softmax_cross_entropy(logits, labels)
    net.zero_grads()
    net.backward(cache, softmax_cross_entropy_backward(lcache), BranchId.MAIN)
    analytic = np.concatenate([p.grad.ravel() for p in net.params()])

    idx = stream(seed, 8).choice(theta.size, size=60, replace=False)
    fd = finite_difference_grad(loss_at, theta, h=1e-5, indices=idx)
    err = max_relative_error(fd[idx], analytic[idx])
    assert err <= 1e-4, f"worst relative error {err:.3g}"


def test_backward_requires_matching_cache(tiny_net):
    net = tiny_net(num_classes=4)
    x = batch(6)
    logits, cache = net.forward(x, BranchId.MAIN, train=True)
    with pytest.raises(ContractViolation):
        net.backward(cache, np.zeros_like(logits), BranchId.AUXILIARY)
    with pytest.raises(ContractViolation):
        net.backward(None, np.zeros_like(logits), BranchId.MAIN)
