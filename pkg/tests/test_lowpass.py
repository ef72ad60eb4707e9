import numpy as np
import pytest

from dualbn import evaluation
from dualbn.batchnorm import BranchId
from dualbn.data import Dataset
from dualbn.errors import ContractViolation
from dualbn.rng import stream


def rand_img(seed=0, c=3, h=32, w=32):
    return stream(seed, 70).random((c, h, w)).astype(np.float32)


def test_full_bandwidth_is_identity():
    img = rand_img()
    out = evaluation.low_pass(img, 32)
    assert np.max(np.abs(out - img)) <= 1e-4


def test_bandwidth_one_keeps_channel_means():
    img = rand_img(1)
    out = evaluation.low_pass(img, 1)
    for ch in range(3):
        want = img[ch].mean(dtype=np.float64)
        assert np.max(np.abs(out[ch] - want)) <= 1e-5


def test_filter_is_idempotent_projection():
    img = rand_img(2)
    once = evaluation.low_pass(img, 9)
    twice = evaluation.low_pass(once, 9)
    assert np.max(np.abs(twice - once)) <= 1e-5


def test_nested_bandwidths_compose():
    img = rand_img(3)
    via_wide = evaluation.low_pass(evaluation.low_pass(img, 17), 5)
    direct = evaluation.low_pass(img, 5)
    assert np.max(np.abs(via_wide - direct)) <= 1e-5


def test_retained_energy_grows_with_bandwidth():
    img = rand_img(4)
    energies = [evaluation.spectral_energy(img, b) for b in (1, 3, 7, 15, 31, 32)]
    assert all(a < b for a, b in zip(energies, energies[1:]))
    # and the filtered image's total energy matches the retained fraction
    for b in (3, 9, 21):
        filtered = evaluation.low_pass(img, b)
        parseval = np.sum(filtered.astype(np.float64) ** 2) * 32 * 32
        assert parseval == pytest.approx(evaluation.spectral_energy(img, b), rel=1e-6)


def test_bandwidth_bounds_enforced():
    img = rand_img(5)
    with pytest.raises(ContractViolation):
        evaluation.low_pass(img, 0)
    with pytest.raises(ContractViolation):
        evaluation.low_pass(img, 33)
    evaluation.low_pass(img, 1)
    evaluation.low_pass(img, 32)


def test_low_pass_preserves_flat_images_exactly():
    img = np.full((3, 16, 16), 0.6, np.float32)
    for b in (1, 4, 16):
        out = evaluation.low_pass(img, b)
        assert np.max(np.abs(out - 0.6)) <= 1e-6


class MeanReader:
    """Predicts from the image mean so low-pass filtering barely moves it."""

    def __init__(self, num_classes=4):
        self.stand_mean = np.zeros(3)
        self.stand_std = np.ones(3)
        self.k = num_classes

    def forward(self, x, branch, train):
        m = np.asarray(x).mean(axis=(1, 2, 3))
        k = np.clip(np.rint(m * 10.0) - 1, 0, self.k - 1).astype(int)
        logits = np.zeros((x.shape[0], self.k))
        logits[np.arange(x.shape[0]), k] = 1.0
        return logits, None


def mean_coded_ds(n=20, size=16):
    labels = (np.arange(n) % 4).astype(np.int64)
    images = np.empty((n, 3, size, size), np.float32)
    for i in range(n):
        images[i] = (labels[i] + 1) / 10.0
    return Dataset(images=images, labels=labels, mean=np.zeros(3), std=np.ones(3),
                   split="test", num_classes=4)


def test_sweep_returns_pairs_and_does_not_mutate_input():
    ds = mean_coded_ds()
    before = ds.images.copy()
    curve = evaluation.low_pass_sweep(MeanReader(), ds, [1, 4, 16], n_images=12)
    assert [b for b, _ in curve] == [1, 4, 16]
    # DC carries the class mean, so even the narrowest filter preserves it
    assert all(acc == 1.0 for _, acc in curve)
    assert np.array_equal(ds.images, before)


def test_sweep_respects_image_budget():
    ds = mean_coded_ds(n=20)
    seen = []

    class CountingNet(MeanReader):
        def forward(self, x, branch, train):
            seen.append(x.shape[0])
            return super().forward(x, branch, train)

    evaluation.low_pass_sweep(CountingNet(), ds, [4], n_images=7)
    assert sum(seen) == 7
