"""Central finite-difference oracle for analytic gradients.

The oracle perturbs inputs in float64, evaluates the function as-is (ops
store in float32), and compares (f(x+h) - f(x-h)) / 2h against the
analytic gradient elementwise with relative error denominator
max(|a|, |b|, 1e-6).
"""

import numpy as np

from .errors import OracleFailure

REL_EPS = 1e-6


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-3,
                           indices=None) -> np.ndarray:
    """Central-difference gradient of scalar f at x.

    f must be pure.  If `indices` is given (flat indices), only those
    entries are evaluated and the rest are left as NaN placeholders the
    caller knows to skip.
    """
    x = np.asarray(x)
    grad = np.full(x.size, np.nan, dtype=np.float64)
    flat_idx = range(x.size) if indices is None else indices
    xw = x.astype(np.float64).ravel().copy()
    for i in flat_idx:
        orig = xw[i]
        xw[i] = orig + h
        fp = float(f(xw.reshape(x.shape).astype(x.dtype)))
        xw[i] = orig - h
        fm = float(f(xw.reshape(x.shape).astype(x.dtype)))
        xw[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleFailure(f"non-finite value at flat index {i}: f+={fp}, f-={fm}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Elementwise |a-b| / max(|a|,|b|,1e-6), reduced with max; NaNs in a skip."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mask = ~np.isnan(a)
    if not mask.any():
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a[mask]), np.abs(b[mask])), REL_EPS)
    return float(np.max(np.abs(a[mask] - b[mask]) / denom))


def finite_difference_check(f, x: np.ndarray, analytic_grad: np.ndarray,
                            h: float = 1e-3, sample: int = 0,
                            rng: np.random.Generator | None = None) -> float:
    """Max relative error between FD and analytic gradient of scalar f.

    sample > 0 checks that many randomly chosen entries (seeded rng
    required) instead of the full tensor; used for large parameter groups.
    """
    x = np.asarray(x)
    if not np.all(np.isfinite(analytic_grad)):
        bad = int(np.flatnonzero(~np.isfinite(np.ravel(analytic_grad)))[0])
        raise OracleFailure(f"analytic gradient non-finite at flat index {bad}")
    indices = None
    if sample and sample < x.size:
        if rng is None:
            raise ValueError("sampled finite_difference_check needs an explicit rng")
        indices = rng.choice(x.size, size=sample, replace=False)
    fd = finite_difference_grad(f, x, h=h, indices=indices)
    return max_relative_error(fd, analytic_grad)
