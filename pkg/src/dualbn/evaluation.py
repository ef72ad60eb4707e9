"""Measurement procedures: accuracy, branch interpolation, corruption
error, Fourier sensitivity maps, low-pass sweeps, and augmentation
affinity.

Everything here is read-only on the model. Entry points take images in
[0,1] pixel space; standardization with the net's frozen train-split
statistics happens inside the Predictor. Fourier perturbations are the
one exception where the perturbation itself is defined in standardized
space, so the grating is added after standardization.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .augment import apply_policy
from .batchnorm import BranchId
from .corruptions import CorruptionSpec, all_specs, apply_corruption
from .data import Dataset, standardize
from .errors import ConfigError, ContractViolation
from .ops import DTYPE
from .rng import DOMAIN_AFFINITY, DOMAIN_CORRUPT, DOMAIN_FOURIER, stream

EVAL_BATCH = 256


class Predictor:
    """Probability function over a net: one branch, or a lambda blend.

    The blend is on post-softmax probabilities by default; logit_space
    averages pre-softmax instead (config alternative, off by default).
    """

    def __init__(self, net, branch: BranchId = BranchId.MAIN, lam: float = None,
                 logit_space: bool = False):
        if lam is not None and not 0.0 <= lam <= 1.0:
            raise ContractViolation(f"lambda must be in [0,1], got {lam}")
        self.net = net
        self.branch = branch
        self.lam = lam
        self.logit_space = logit_space

    def standardize(self, images01):
        return standardize(images01, self.net.stand_mean, self.net.stand_std)

    def probs_std(self, x_std):
        """Class probabilities for an already-standardized batch."""
        if self.lam is None:
            logits, _ = self.net.forward(x_std, self.branch, train=False)
            return ops.softmax(logits)
        zm = self.net.forward(x_std, BranchId.MAIN, train=False)[0]
        za = self.net.forward(x_std, BranchId.AUXILIARY, train=False)[0]
        if self.logit_space:
            return ops.softmax((1.0 - self.lam) * zm + self.lam * za)
        return (1.0 - self.lam) * ops.softmax(zm) + self.lam * ops.softmax(za)

    def probs(self, images01):
        return self.probs_std(self.standardize(images01))


def _accuracy(predictor, images01, labels, batch=EVAL_BATCH, std_space=False):
    if images01.shape[0] == 0:
        raise ContractViolation("cannot evaluate on an empty dataset")
    correct = 0
    for start in range(0, images01.shape[0], batch):
        x = images01[start:start + batch]
        p = predictor.probs_std(x) if std_space else predictor.probs(x)
        correct += int(np.sum(np.argmax(p, axis=1) == labels[start:start + batch]))
    return correct / images01.shape[0]


def evaluate(net, dataset: Dataset, branch: BranchId = BranchId.MAIN,
             batch=EVAL_BATCH) -> float:
    """Top-1 accuracy of one branch; argmax ties go to the lowest class."""
    return _accuracy(Predictor(net, branch), dataset.images, dataset.labels, batch)


def interpolate_predict(net, images01, lam: float) -> np.ndarray:
    """p = (1-lambda)*softmax(main) + lambda*softmax(auxiliary)."""
    return Predictor(net, lam=lam).probs(images01)


# ---------------------------------------------------------------------------
# Corruption suite
# ---------------------------------------------------------------------------

@dataclass
class CorruptionReport:
    names: tuple                      # corruption family names, row order
    errors: np.ndarray                # (len(names), 5) fractions in [0,1]
    uce: dict                         # name -> mean error over severities
    mean_uce: float
    ce: dict = None                   # name -> normalized error, if baselined
    provenance: str = ("procedural corruption suite; internally comparable, "
                       "not numerically comparable to published benchmark assets")

    def row(self, name):
        return self.errors[self.names.index(name)]


def corrupt_images(images01, spec: CorruptionSpec, seed: int,
                   index_offset: int = 0) -> np.ndarray:
    """Corrupted copy of a [0,1] image stack, keyed per (family, severity, image)."""
    out = np.empty_like(images01)
    for i in range(images01.shape[0]):
        rng = stream(seed, DOMAIN_CORRUPT, spec.index, spec.severity, index_offset + i)
        out[i] = apply_corruption(images01[i], spec, rng)
    return out


def corruption_suite(net, dataset: Dataset, specs=None, predictor: Predictor = None,
                     seed: int = 0, n_images: int = None,
                     baseline_errors: np.ndarray = None,
                     want_ce: bool = False) -> CorruptionReport:
    """Error matrix over (family, severity) plus uCE and optional CE."""
    if specs is None:
        specs = all_specs()
    if predictor is None:
        predictor = Predictor(net)
    if want_ce and baseline_errors is None:
        raise ConfigError("CE requested but no baseline error matrix given")
    images = dataset.images if n_images is None else dataset.images[:n_images]
    labels = dataset.labels if n_images is None else dataset.labels[:n_images]
    names = tuple(dict.fromkeys(s.name for s in specs))
    errors = np.full((len(names), 5), np.nan)
    for spec in specs:
        corrupted = corrupt_images(images, spec, seed)
        acc = _accuracy(predictor, corrupted, labels)
        errors[names.index(spec.name), spec.severity - 1] = 1.0 - acc
    uce = {n: float(np.nanmean(errors[i])) for i, n in enumerate(names)}
    mean_uce = float(np.mean(list(uce.values())))
    ce = None
    if want_ce:
        if baseline_errors.shape != errors.shape:
            raise ConfigError(
                f"baseline error matrix {baseline_errors.shape} does not match {errors.shape}")
        ce = {n: float(np.nansum(errors[i]) / np.nansum(baseline_errors[i]))
              for i, n in enumerate(names)}
    return CorruptionReport(names, errors, uce, mean_uce, ce)


# ---------------------------------------------------------------------------
# Fourier sensitivity
# ---------------------------------------------------------------------------

def fourier_grating(h: int, w: int, i: int, j: int, r: float) -> np.ndarray:
    """Real sinusoidal grating at frequency (i,j), scaled to l2 norm r.

    Built from the conjugate-symmetric spectrum pair at (i,j) and
    (-i,-j); the two indices therefore produce the same grating. The
    (0,0) cell degenerates to the constant image r/sqrt(h*w).
    """
    if r <= 0:
        raise ContractViolation(f"perturbation norm must be positive, got {r}")
    spec = np.zeros((h, w), dtype=np.complex128)
    # canonical ordering so (i,j) and its mirror build the same array
    a, b = (i % h, j % w), ((-i) % h, (-j) % w)
    if a > b:
        a, b = b, a
    spec[a] += 0.5 + 0.5j
    spec[b] += 0.5 - 0.5j
    u = np.real(np.fft.ifft2(spec))
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ContractViolation(f"degenerate grating at frequency ({i},{j})")
    return (u * (r / norm)).astype(np.float64)


@dataclass
class FourierMap:
    errors: np.ndarray   # (H, W) error rates, natural FFT frequency indexing
    r: float
    n_images: int

    @property
    def centered(self) -> np.ndarray:
        """Zero frequency moved to the center cell, for display."""
        return np.fft.fftshift(self.errors)


def _half_grid(h, w):
    """Frequency pairs covering the full grid once: (i,j) and its mirror."""
    seen = np.zeros((h, w), dtype=bool)
    pairs = []
    for i in range(h):
        for j in range(w):
            if seen[i, j]:
                continue
            mi, mj = (-i) % h, (-j) % w
            seen[i, j] = seen[mi, mj] = True
            pairs.append(((i, j), (mi, mj)))
    return pairs


def fourier_sensitivity(net, dataset: Dataset, r: float = 8.0,
                        predictor: Predictor = None, seed: int = 0,
                        n_images: int = None) -> FourierMap:
    """Error-rate map under per-frequency grating perturbations.

    The grating (norm r, standardized pixel units) is added to every
    channel of the standardized image, with a per-image random sign.
    Mirrored frequencies share one computation by construction.
    """
    if predictor is None:
        predictor = Predictor(net)
    images = dataset.images if n_images is None else dataset.images[:n_images]
    labels = dataset.labels if n_images is None else dataset.labels[:n_images]
    if images.shape[0] == 0:
        raise ContractViolation("cannot evaluate on an empty dataset")
    _, _, h, w = images.shape
    x_std = predictor.standardize(images)
    errors = np.zeros((h, w))
    for (i, j), (mi, mj) in _half_grid(h, w):
        u = fourier_grating(h, w, i, j, r)
        signs = stream(seed, DOMAIN_FOURIER, i, j).integers(0, 2, images.shape[0]) * 2 - 1
        pert = (x_std + signs[:, None, None, None] * u[None, None]).astype(DTYPE)
        acc = _accuracy(predictor, pert, labels, std_space=True)
        errors[i, j] = errors[mi, mj] = 1.0 - acc
    return FourierMap(errors, r, images.shape[0])


# ---------------------------------------------------------------------------
# Low-pass filtering
# ---------------------------------------------------------------------------

def low_pass(img: np.ndarray, bandwidth: int) -> np.ndarray:
    """Keep only the centered width-B square of the 2-D spectrum, per channel.

    For even B the square spans [-B/2, B/2-1] around the zero frequency
    of the centered spectrum.
    """
    c, h, w = img.shape
    if not 1 <= bandwidth <= max(h, w):
        raise ContractViolation(f"bandwidth {bandwidth} outside [1, {max(h, w)}]")
    out = np.empty_like(img, dtype=np.float64)
    r0 = max(h // 2 - bandwidth // 2, 0)
    c0 = max(w // 2 - bandwidth // 2, 0)
    mask = np.zeros((h, w))
    mask[r0:r0 + bandwidth, c0:c0 + bandwidth] = 1.0
    for ch in range(c):
        spec = np.fft.fftshift(np.fft.fft2(img[ch].astype(np.float64)))
        out[ch] = np.real(np.fft.ifft2(np.fft.ifftshift(spec * mask)))
    return out.astype(DTYPE)


def spectral_energy(img: np.ndarray, bandwidth: int) -> float:
    """Energy retained inside the centered width-B square (all channels)."""
    c, h, w = img.shape
    r0 = max(h // 2 - bandwidth // 2, 0)
    c0 = max(w // 2 - bandwidth // 2, 0)
    total = 0.0
    for ch in range(c):
        spec = np.fft.fftshift(np.fft.fft2(img[ch].astype(np.float64)))
        total += float(np.sum(np.abs(spec[r0:r0 + bandwidth, c0:c0 + bandwidth]) ** 2))
    return total


def low_pass_sweep(net, dataset: Dataset, bandwidths, predictor: Predictor = None,
                   n_images: int = 500):
    """Accuracy per bandwidth on the first n_images of the split."""
    if predictor is None:
        predictor = Predictor(net)
    images = dataset.images[:n_images]
    labels = dataset.labels[:n_images]
    curve = []
    for b in bandwidths:
        filtered = np.stack([low_pass(im, int(b)) for im in images])
        curve.append((int(b), _accuracy(predictor, filtered, labels)))
    return curve


# ---------------------------------------------------------------------------
# Affinity
# ---------------------------------------------------------------------------

def affinity(net, dataset: Dataset, policy, seed: int = 0,
             predictor: Predictor = None) -> float:
    """acc(augmented test) - acc(clean test), in percentage points."""
    if predictor is None:
        predictor = Predictor(net)
    rngs = [stream(seed, DOMAIN_AFFINITY, i) for i in range(len(dataset))]
    augmented = apply_policy(dataset.images, policy, rngs)
    acc_clean = _accuracy(predictor, dataset.images, dataset.labels)
    acc_aug = _accuracy(predictor, augmented, dataset.labels)
    return 100.0 * (acc_aug - acc_clean)
