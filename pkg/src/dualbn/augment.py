"""Seeded image augmentation policies.

Images are (C,H,W) float32 in [0,1] pixel space; per-channel dataset
standardization happens after augmentation, at batch consumption time.
Every op takes an explicit Generator, returns a fresh array, and clamps
its output to [0,1], so a policy applied under a fixed key is
bit-reproducible and shape-preserving.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .ops import DTYPE


def _clip(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0).astype(DTYPE)


# ---------------------------------------------------------------------------
# Elementary ops
# ---------------------------------------------------------------------------

def horizontal_flip(img: np.ndarray, rng: np.random.Generator, p: float = 0.5) -> np.ndarray:
    if p > 0 and rng.random() < p:
        return np.ascontiguousarray(img[:, :, ::-1])
    return img.copy()


def pad_crop(img: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    """Zero-pad by `pad` on every side, crop a random same-size window."""
    if pad < 0:
        raise ConfigError(f"pad_crop pad must be >= 0, got {pad}")
    c, h, w = img.shape
    top = int(rng.integers(0, 2 * pad + 1))
    left = int(rng.integers(0, 2 * pad + 1))
    if pad == 0:
        return img.copy()
    padded = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=DTYPE)
    padded[:, pad:pad + h, pad:pad + w] = img
    return np.ascontiguousarray(padded[:, top:top + h, left:left + w])


def cutout(img: np.ndarray, rng: np.random.Generator, size: int = 16) -> np.ndarray:
    """Zero a size x size square centered at a uniformly random pixel."""
    if size < 0:
        raise ConfigError(f"cutout size must be >= 0, got {size}")
    _, h, w = img.shape
    cy = int(rng.integers(0, h))
    cx = int(rng.integers(0, w))
    out = img.copy()
    if size == 0:
        return out
    y0 = max(cy - size // 2, 0)
    x0 = max(cx - size // 2, 0)
    y1 = min(cy - size // 2 + size, h)
    x1 = min(cx - size // 2 + size, w)
    out[:, y0:y1, x0:x1] = 0.0
    return out


def gaussian_noise(img: np.ndarray, rng: np.random.Generator, sigma: float = 0.2) -> np.ndarray:
    if sigma < 0:
        raise ConfigError(f"gaussian_noise sigma must be >= 0, got {sigma}")
    return _clip(img + rng.normal(0.0, sigma, size=img.shape))


# ---------------------------------------------------------------------------
# Geometric transforms: inverse affine mapping, nearest neighbor, zero fill
# ---------------------------------------------------------------------------

def _inverse_sample(img: np.ndarray, src_r: np.ndarray, src_c: np.ndarray) -> np.ndarray:
    """Nearest-neighbor gather from float source coords; zero fill outside."""
    _, h, w = img.shape
    ri = np.rint(src_r).astype(np.int64)
    ci = np.rint(src_c).astype(np.int64)
    inside = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
    ri_s = np.where(inside, ri, 0)
    ci_s = np.where(inside, ci, 0)
    out = img[:, ri_s, ci_s]
    out[:, ~inside] = 0.0
    return np.ascontiguousarray(out)


def _dest_grid(h: int, w: int):
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
    return rows, cols


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center; +90 degrees maps [[1,2],[3,4]] to [[2,4],[1,3]]."""
    _, h, w = img.shape
    th = np.deg2rad(degrees)
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = _dest_grid(h, w)
    dr, dc = rows - cr, cols - cc
    src_r = np.cos(th) * dr + np.sin(th) * dc + cr
    src_c = -np.sin(th) * dr + np.cos(th) * dc + cc
    return _inverse_sample(img, src_r, src_c)


def shear_x(img: np.ndarray, factor: float) -> np.ndarray:
    _, h, w = img.shape
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = _dest_grid(h, w)
    src_c = cols - factor * (rows - cr)
    return _inverse_sample(img, rows, src_c)


def shear_y(img: np.ndarray, factor: float) -> np.ndarray:
    _, h, w = img.shape
    cr, cc = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = _dest_grid(h, w)
    src_r = rows - factor * (cols - cc)
    return _inverse_sample(img, src_r, cols)


def translate_x(img: np.ndarray, pixels: float) -> np.ndarray:
    _, h, w = img.shape
    rows, cols = _dest_grid(h, w)
    return _inverse_sample(img, rows, cols - pixels)


def translate_y(img: np.ndarray, pixels: float) -> np.ndarray:
    _, h, w = img.shape
    rows, cols = _dest_grid(h, w)
    return _inverse_sample(img, rows - pixels, cols)


# ---------------------------------------------------------------------------
# Color transforms on [0,1] floats; histogram ops use 256-bin quantization
# ---------------------------------------------------------------------------

def brightness(img: np.ndarray, factor: float) -> np.ndarray:
    return _clip(img * factor)


def contrast(img: np.ndarray, factor: float) -> np.ndarray:
    mean = np.mean(img, dtype=np.float64)
    return _clip((img - mean) * factor + mean)


def solarize(img: np.ndarray, threshold: float) -> np.ndarray:
    return _clip(np.where(img > threshold, 1.0 - img, img))


def posterize(img: np.ndarray, bits: int) -> np.ndarray:
    bits = int(np.clip(bits, 1, 8))
    q = (np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    mask = np.uint8((0xFF << (8 - bits)) & 0xFF)
    return ((q & mask) / 255.0).astype(DTYPE)


def invert(img: np.ndarray) -> np.ndarray:
    return _clip(1.0 - img)


def equalize(img: np.ndarray) -> np.ndarray:
    """Per-channel histogram equalization over 256 bins."""
    out = np.empty_like(img)
    for ch in range(img.shape[0]):
        q = (np.clip(img[ch], 0.0, 1.0) * 255).astype(np.uint8)
        hist = np.bincount(q.ravel(), minlength=256)
        cdf = np.cumsum(hist)
        nonzero = cdf[cdf > 0]
        if nonzero.size == 0 or nonzero[0] == cdf[-1]:
            out[ch] = img[ch]
            continue
        cdf_min = nonzero[0]
        lut = np.rint((cdf - cdf_min) / (cdf[-1] - cdf_min) * 255.0)
        out[ch] = (np.clip(lut, 0, 255)[q] / 255.0).astype(DTYPE)
    return _clip(out)


def autocontrast(img: np.ndarray) -> np.ndarray:
    """Stretch each channel so its min maps to 0 and max to 1."""
    out = np.empty_like(img)
    for ch in range(img.shape[0]):
        lo, hi = float(img[ch].min()), float(img[ch].max())
        out[ch] = (img[ch] - lo) / (hi - lo) if hi > lo else img[ch]
    return _clip(out)


# ---------------------------------------------------------------------------
# RandAugment-style pooled op
# ---------------------------------------------------------------------------

MAX_ROTATE_DEG = 30.0
MAX_SHEAR = 0.3
MAX_TRANSLATE_FRAC = 0.33
MAX_ENHANCE_DELTA = 0.9

RAND_AUGMENT_POOL = (
    "rotate", "shear_x", "shear_y", "translate_x", "translate_y",
    "brightness", "contrast", "solarize", "posterize", "invert",
    "equalize", "autocontrast",
)


def _apply_pool_op(img, name, rng, level):
    """Apply one pooled op at strength `level` in [0,1] of its max range."""
    sign = 1.0 if rng.random() < 0.5 else -1.0
    _, h, w = img.shape
    if name == "rotate":
        return _clip(rotate(img, sign * level * MAX_ROTATE_DEG))
    if name == "shear_x":
        return _clip(shear_x(img, sign * level * MAX_SHEAR))
    if name == "shear_y":
        return _clip(shear_y(img, sign * level * MAX_SHEAR))
    if name == "translate_x":
        return _clip(translate_x(img, sign * level * MAX_TRANSLATE_FRAC * w))
    if name == "translate_y":
        return _clip(translate_y(img, sign * level * MAX_TRANSLATE_FRAC * h))
    if name == "brightness":
        return brightness(img, 1.0 + sign * level * MAX_ENHANCE_DELTA)
    if name == "contrast":
        return contrast(img, 1.0 + sign * level * MAX_ENHANCE_DELTA)
    if name == "solarize":
        return solarize(img, 1.0 - level)
    if name == "posterize":
        return posterize(img, 8 - int(round(level * 4)))
    if name == "invert":
        return invert(img)
    if name == "equalize":
        return equalize(img)
    if name == "autocontrast":
        return autocontrast(img)
    raise ConfigError(f"unknown augmentation op '{name}'")


def rand_augment_lite(img: np.ndarray, rng: np.random.Generator,
                      num_ops: int = 2, magnitude: float = 9.0,
                      pool=RAND_AUGMENT_POOL) -> np.ndarray:
    """Apply num_ops transforms drawn uniformly with replacement from pool."""
    if num_ops < 1:
        raise ConfigError(f"rand_augment num_ops must be >= 1, got {num_ops}")
    if not 0.0 <= magnitude <= 30.0:
        raise ConfigError(f"rand_augment magnitude must be in [0,30], got {magnitude}")
    for name in pool:
        if name not in RAND_AUGMENT_POOL:
            raise ConfigError(f"unknown augmentation op '{name}' in custom pool")
    level = magnitude / 30.0
    out = img
    for _ in range(num_ops):
        name = pool[int(rng.integers(0, len(pool)))]
        out = _apply_pool_op(out, name, rng, level)
    return out if out is not img else img.copy()


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyOp:
    name: str
    params: tuple  # sorted (key, value) pairs

    def kwargs(self):
        return dict(self.params)


@dataclass(frozen=True)
class AugmentPolicy:
    """Named ordered chain of seeded image transforms."""

    name: str
    ops: tuple


def _op(name, **params) -> PolicyOp:
    return PolicyOp(name, tuple(sorted(params.items())))


_POLICY_OPS = {
    "horizontal_flip": horizontal_flip,
    "pad_crop": pad_crop,
    "cutout": cutout,
    "gaussian_noise": gaussian_noise,
    "rand_augment": rand_augment_lite,
}


def policy_preset(name: str, **overrides) -> AugmentPolicy:
    """Build one of the named policy presets.

    cutout = flip, then crop, then the zeroed square; randaugment keeps the
    conventional defaults (flip/crop before, cutout after the pooled ops).
    """
    sigma = overrides.pop("sigma", 0.2)
    num_ops = overrides.pop("num_ops", 2)
    magnitude = overrides.pop("magnitude", 9.0)
    pad = overrides.pop("pad", 4)
    cut = overrides.pop("cutout_size", 16)
    if overrides:
        raise ConfigError(f"unknown policy overrides {sorted(overrides)} for preset '{name}'")
    presets = {
        "none": (),
        "flip": (_op("horizontal_flip", p=0.5),),
        "flip_crop": (_op("horizontal_flip", p=0.5), _op("pad_crop", pad=pad)),
        "cutout": (_op("horizontal_flip", p=0.5), _op("pad_crop", pad=pad),
                   _op("cutout", size=cut)),
        "gaussian": (_op("gaussian_noise", sigma=sigma),),
        "randaugment": (_op("horizontal_flip", p=0.5), _op("pad_crop", pad=pad),
                        _op("rand_augment", num_ops=num_ops, magnitude=magnitude),
                        _op("cutout", size=cut)),
    }
    if name not in presets:
        raise ConfigError(f"unknown policy preset '{name}' (have {sorted(presets)})")
    return AugmentPolicy(name, presets[name])


def apply_policy_single(img: np.ndarray, policy: AugmentPolicy,
                        rng: np.random.Generator) -> np.ndarray:
    out = img
    for op in policy.ops:
        fn = _POLICY_OPS.get(op.name)
        if fn is None:
            raise ConfigError(f"unknown augmentation op '{op.name}' in policy '{policy.name}'")
        out = fn(out, rng, **op.kwargs())
    return out


def apply_policy(batch: np.ndarray, policy: AugmentPolicy, rngs) -> np.ndarray:
    """Augment each image with its own stream; identity policy returns batch as-is."""
    if len(rngs) != batch.shape[0]:
        raise ConfigError(f"need one rng per image: {len(rngs)} rngs for {batch.shape[0]} images")
    if not policy.ops:
        return batch
    out = np.empty_like(batch)
    for i in range(batch.shape[0]):
        out[i] = apply_policy_single(batch[i], policy, rngs[i])
    return out


@dataclass(frozen=True)
class AlternatingPolicy:
    """Chooses between two policies by step parity (single-branch batch mixing)."""

    name: str
    even: AugmentPolicy
    odd: AugmentPolicy

    def select(self, step: int) -> AugmentPolicy:
        return self.even if step % 2 == 0 else self.odd
