"""Procedural test-time corruptions at five severities.

Seven corruption families with hand-fixed parameter tables, strictly
monotone in severity. These are internally comparable across models but
are not the published benchmark assets; reports carry that caveat.

All corruptions act on a single (C,H,W) float32 image in [0,1] and
return the same shape, clipped back to [0,1]. Stochastic ones take the
Generator keyed per (corruption, severity, image) by the caller.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .ops import DTYPE

# name -> per-severity parameter, severities 1..5 left to right
CORRUPTION_TABLES = {
    "gaussian_noise": (0.04, 0.08, 0.12, 0.18, 0.26),   # additive sigma
    "shot_noise": (60.0, 25.0, 12.0, 5.0, 3.0),         # photons at full scale
    "impulse_noise": (0.03, 0.06, 0.10, 0.17, 0.27),    # replaced fraction
    "gaussian_blur": (0.4, 0.6, 0.9, 1.3, 1.8),         # blur sigma, pixels
    "brightness": (0.08, 0.16, 0.24, 0.32, 0.42),       # additive shift
    "contrast": (0.75, 0.60, 0.45, 0.30, 0.15),         # scale toward mean
    "pixelate": (0.80, 0.65, 0.50, 0.35, 0.25),         # side-length fraction
}

CORRUPTION_NAMES = tuple(CORRUPTION_TABLES)
STOCHASTIC = ("gaussian_noise", "shot_noise", "impulse_noise")


@dataclass(frozen=True)
class CorruptionSpec:
    name: str
    severity: int

    def __post_init__(self):
        if self.name not in CORRUPTION_TABLES:
            raise ConfigError(f"unknown corruption '{self.name}' (have {CORRUPTION_NAMES})")
        if not 1 <= self.severity <= 5:
            raise ConfigError(f"severity must be in 1..5, got {self.severity}")

    @property
    def param(self) -> float:
        return CORRUPTION_TABLES[self.name][self.severity - 1]

    @property
    def index(self) -> int:
        return CORRUPTION_NAMES.index(self.name)


def all_specs():
    return [CorruptionSpec(n, s) for n in CORRUPTION_NAMES for s in range(1, 6)]


def _clip(img):
    return np.clip(img, 0.0, 1.0).astype(DTYPE)


def _pixelate(img, frac):
    _, h, w = img.shape
    nh, nw = max(1, int(round(h * frac))), max(1, int(round(w * frac)))
    rows = (np.arange(nh) * h // nh)
    cols = (np.arange(nw) * w // nw)
    small = img[:, rows][:, :, cols]
    rows_up = (np.arange(h) * nh // h)
    cols_up = (np.arange(w) * nw // w)
    return small[:, rows_up][:, :, cols_up]


def apply_corruption(img: np.ndarray, spec: CorruptionSpec,
                     rng: np.random.Generator = None) -> np.ndarray:
    """Corrupt one image; rng is required for the stochastic families."""
    p = spec.param
    if spec.name in STOCHASTIC and rng is None:
        raise ConfigError(f"corruption '{spec.name}' needs an rng")
    if spec.name == "gaussian_noise":
        return _clip(img + rng.normal(0.0, p, size=img.shape))
    if spec.name == "shot_noise":
        return _clip(rng.poisson(np.clip(img, 0, 1) * p) / p)
    if spec.name == "impulse_noise":
        _, h, w = img.shape
        hit = rng.random((h, w)) < p
        salt = rng.random((h, w)) < 0.5
        out = img.copy()
        out[:, hit & salt] = 1.0
        out[:, hit & ~salt] = 0.0
        return out
    if spec.name == "gaussian_blur":
        out = np.empty_like(img)
        for c in range(img.shape[0]):
            out[c] = ndimage.gaussian_filter(img[c], sigma=p, mode="reflect")
        return _clip(out)
    if spec.name == "brightness":
        return _clip(img + p)
    if spec.name == "contrast":
        mean = np.mean(img, dtype=np.float64)
        return _clip((img - mean) * p + mean)
    if spec.name == "pixelate":
        return _clip(_pixelate(img, p))
    raise ConfigError(f"unknown corruption '{spec.name}'")
