import numpy as np
import pytest

from dualbn import evaluation
from dualbn.augment import policy_preset
from dualbn.batchnorm import BranchId
from dualbn.corruptions import all_specs
from dualbn.data import Dataset
from dualbn.errors import ConfigError, ContractViolation
from dualbn.rng import stream

K = 4


def label_coded_dataset(n=40, size=8, seed=0, num_classes=K):
    """Images whose (0,0,0) pixel encodes the label; stats are identity."""
    rng = stream(seed, 50)
    images = rng.random((n, 3, size, size)).astype(np.float32) * 0.2 + 0.4
    labels = (np.arange(n) % num_classes).astype(np.int64)
    images[:, 0, 0, 0] = (labels + 1) / 10.0
    return Dataset(images=images, labels=labels, mean=np.zeros(3), std=np.ones(3),
                   split="test", num_classes=num_classes)


class StubNet:
    """Forward-only net substitute; logits come from a scripted function."""

    def __init__(self, fn_main, fn_aux=None):
        self.stand_mean = np.zeros(3)
        self.stand_std = np.ones(3)
        self.fn_main = fn_main
        self.fn_aux = fn_aux or fn_main

    def forward(self, x, branch, train):
        assert train is False
        fn = self.fn_main if branch is BranchId.MAIN else self.fn_aux
        return fn(np.asarray(x)), None


def edge_reader(x):
    """Decode the label embedded at pixel (0,0,0) into one-hot logits."""
    k = np.clip(np.rint(x[:, 0, 0, 0] * 10.0) - 1, 0, K - 1).astype(int)
    logits = np.full((x.shape[0], K), -10.0)
    logits[np.arange(x.shape[0]), k] = 10.0
    return logits


class ScriptedPredictor:
    """probs() that is wrong for a preset fraction of each batch, in call order."""

    def __init__(self, labels, fractions, num_classes=K):
        self.labels = labels
        self.fractions = list(fractions)
        self.k = num_classes
        self.calls = 0

    def probs(self, x):
        n = x.shape[0]
        frac = self.fractions[self.calls % len(self.fractions)]
        self.calls += 1
        wrong = int(round(frac * n))
        pred = self.labels[:n].copy()
        pred[:wrong] = (pred[:wrong] + 1) % self.k
        out = np.zeros((n, self.k))
        out[np.arange(n), pred] = 1.0
        return out


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def test_accuracy_of_perfect_and_inverted_readers():
    ds = label_coded_dataset()
    assert evaluation.evaluate(StubNet(edge_reader), ds) == 1.0

    def inverted(x):
        logits = edge_reader(x)
        return np.roll(logits, 1, axis=1)
    assert evaluation.evaluate(StubNet(inverted), ds) == 0.0


def test_accuracy_of_constant_predictor_is_class_frequency():
    ds = label_coded_dataset(n=400)

    def always_zero(x):
        logits = np.zeros((x.shape[0], K))
        logits[:, 0] = 1.0
        return logits
    assert evaluation.evaluate(StubNet(always_zero), ds) == pytest.approx(0.25)


def test_accuracy_batching_invariance():
    ds = label_coded_dataset(n=30)
    net = StubNet(edge_reader)
    assert evaluation.evaluate(net, ds, batch=7) == evaluation.evaluate(net, ds, batch=30)


def test_accuracy_rejects_empty():
    ds = label_coded_dataset(n=0)
    with pytest.raises(ContractViolation):
        evaluation.evaluate(StubNet(edge_reader), ds)


# ---------------------------------------------------------------------------
# branch interpolation
# ---------------------------------------------------------------------------

def probs_net(p_main, p_aux):
    """Net whose branch softmax outputs are the given constant rows."""
    def make(p):
        def fn(x):
            return np.log(np.tile(np.asarray(p, np.float64), (x.shape[0], 1)))
        return fn
    return StubNet(make(p_main), make(p_aux))


def test_interpolation_endpoints_are_pure_branches():
    net = probs_net([0.8, 0.2, 0.0 + 1e-9, 0.2 - 1e-9], [0.1, 0.1, 0.7, 0.1])
    x = np.zeros((3, 3, 8, 8), np.float32)
    p0 = evaluation.interpolate_predict(net, x, 0.0)
    p1 = evaluation.interpolate_predict(net, x, 1.0)
    pm = evaluation.Predictor(net, branch=BranchId.MAIN).probs(x)
    pa = evaluation.Predictor(net, branch=BranchId.AUXILIARY).probs(x)
    assert np.array_equal(p0, pm)
    assert np.array_equal(p1, pa)


def test_interpolation_midpoint_known_blend():
    net = probs_net([0.8, 0.2], [0.2, 0.8])
    x = np.zeros((2, 3, 8, 8), np.float32)
    p = evaluation.interpolate_predict(net, x, 0.5)
    assert np.allclose(p, 0.5, atol=1e-9)
    p_quarter = evaluation.interpolate_predict(net, x, 0.25)
    assert np.allclose(p_quarter[:, 0], 0.75 * 0.8 + 0.25 * 0.2, atol=1e-9)


def test_interpolation_rows_still_sum_to_one():
    net = probs_net([0.5, 0.3, 0.1, 0.1], [0.25, 0.25, 0.25, 0.25])
    x = np.zeros((2, 3, 8, 8), np.float32)
    for lam in (0.0, 0.3, 0.7, 1.0):
        p = evaluation.interpolate_predict(net, x, lam)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_interpolation_lambda_range_enforced():
    net = probs_net([1.0, 0.0], [0.0, 1.0])
    for lam in (-0.1, 1.1):
        with pytest.raises(ContractViolation):
            evaluation.Predictor(net, lam=lam)


def test_logit_space_blend_differs_and_matches_formula():
    net = probs_net([0.8, 0.2], [0.2, 0.8])
    x = np.zeros((1, 3, 8, 8), np.float32)
    zm = np.log([0.8, 0.2])
    za = np.log([0.2, 0.8])
    blended = 0.7 * zm + 0.3 * za
    want = np.exp(blended) / np.exp(blended).sum()
    got = evaluation.Predictor(net, lam=0.3, logit_space=True).probs(x)
    assert np.allclose(got[0], want, atol=1e-9)
    prob_blend = evaluation.Predictor(net, lam=0.3).probs(x)
    assert not np.allclose(got, prob_blend, atol=1e-3)


# ---------------------------------------------------------------------------
# corruption suite bookkeeping
# ---------------------------------------------------------------------------

def test_uce_means_scripted_error_rows_exactly():
    ds = label_coded_dataset(n=20)
    fractions = [0.1, 0.2, 0.3, 0.4, 0.5]  # repeats for each family
    pred = ScriptedPredictor(ds.labels, fractions)
    report = evaluation.corruption_suite(None, ds, predictor=pred, seed=0)
    assert report.errors.shape == (7, 5)
    for i, name in enumerate(report.names):
        assert np.allclose(report.errors[i], fractions, atol=1e-12)
        assert abs(report.uce[name] - 0.3) <= 1e-12
    assert abs(report.mean_uce - 0.3) <= 1e-12


def test_suite_matches_brute_force_recomputation():
    ds = label_coded_dataset(n=10)
    specs = all_specs()[:10]  # two families
    pred = ScriptedPredictor(ds.labels, [0.0, 0.1, 0.2, 0.3, 0.4])
    report = evaluation.corruption_suite(None, ds, specs=specs, predictor=pred, seed=3)

    pred2 = ScriptedPredictor(ds.labels, [0.0, 0.1, 0.2, 0.3, 0.4])
    by_hand = {}
    for spec in specs:
        corrupted = evaluation.corrupt_images(ds.images, spec, seed=3)
        p = pred2.probs(corrupted)
        acc = np.mean(np.argmax(p, axis=1) == ds.labels)
        by_hand.setdefault(spec.name, []).append(1.0 - acc)
    for name, errs in by_hand.items():
        assert np.allclose(report.row(name), errs, atol=1e-12)
        assert abs(report.uce[name] - sum(errs) / len(errs)) <= 1e-12
    want_mean = sum(sum(v) / len(v) for v in by_hand.values()) / len(by_hand)
    assert abs(report.mean_uce - want_mean) <= 1e-12


def test_ce_self_baseline_is_one():
    ds = label_coded_dataset(n=20)
    pred = ScriptedPredictor(ds.labels, [0.1, 0.2, 0.3, 0.4, 0.5])
    base = evaluation.corruption_suite(None, ds, predictor=pred, seed=0)
    pred2 = ScriptedPredictor(ds.labels, [0.1, 0.2, 0.3, 0.4, 0.5])
    rep = evaluation.corruption_suite(None, ds, predictor=pred2, seed=0,
                                      baseline_errors=base.errors, want_ce=True)
    for name in rep.names:
        assert abs(rep.ce[name] - 1.0) <= 1e-12


def test_ce_scales_with_error_ratio():
    ds = label_coded_dataset(n=20)
    base = evaluation.corruption_suite(
        None, ds, predictor=ScriptedPredictor(ds.labels, [0.2] * 5), seed=0)
    rep = evaluation.corruption_suite(
        None, ds, predictor=ScriptedPredictor(ds.labels, [0.1] * 5), seed=0,
        baseline_errors=base.errors, want_ce=True)
    for name in rep.names:
        assert abs(rep.ce[name] - 0.5) <= 1e-12


def test_ce_requires_baseline_and_matching_shape():
    ds = label_coded_dataset(n=10)
    pred = ScriptedPredictor(ds.labels, [0.1])
    with pytest.raises(ConfigError):
        evaluation.corruption_suite(None, ds, predictor=pred, want_ce=True)
    with pytest.raises(ConfigError):
        evaluation.corruption_suite(None, ds, predictor=pred, want_ce=True,
                                    baseline_errors=np.zeros((3, 5)))


def test_report_carries_benchmark_caveat():
    ds = label_coded_dataset(n=10)
    rep = evaluation.corruption_suite(
        None, ds, predictor=ScriptedPredictor(ds.labels, [0.1]), seed=0)
    assert "not numerically comparable" in rep.provenance


def test_corrupt_images_keyed_determinism():
    ds = label_coded_dataset(n=6)
    spec = all_specs()[0]
    a = evaluation.corrupt_images(ds.images, spec, seed=5)
    b = evaluation.corrupt_images(ds.images, spec, seed=5)
    c = evaluation.corrupt_images(ds.images, spec, seed=6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    shifted = evaluation.corrupt_images(ds.images, spec, seed=5, index_offset=3)
    assert np.array_equal(shifted[0], evaluation.corrupt_images(
        ds.images[:1], spec, seed=5, index_offset=3)[0])


# ---------------------------------------------------------------------------
# affinity
# ---------------------------------------------------------------------------

def test_affinity_of_empty_policy_is_exactly_zero():
    ds = label_coded_dataset(n=24)
    assert evaluation.affinity(StubNet(edge_reader), ds, policy_preset("none")) == 0.0


def test_affinity_negative_when_augmentation_breaks_the_cue():
    # the reader depends on the top-left pixel, which flipping relocates
    ds = label_coded_dataset(n=200)
    val = evaluation.affinity(StubNet(edge_reader), ds, policy_preset("flip"), seed=1)
    assert val < -20.0


def test_affinity_keyed_determinism():
    ds = label_coded_dataset(n=50)
    net = StubNet(edge_reader)
    a = evaluation.affinity(net, ds, policy_preset("cutout"), seed=2)
    b = evaluation.affinity(net, ds, policy_preset("cutout"), seed=2)
    assert a == b
