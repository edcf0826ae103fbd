"""Tolerant PSD checks and factorization shared by samplers.

Policy: a jitter of PSD_JITTER * (trace/d) is added before Cholesky; matrices
with an eigenvalue below -EIG_FAIL * (trace/d) are rejected outright, because
the covariance identities guarantee positive semidefiniteness and larger
violations indicate estimation bugs rather than rounding noise.
"""

import numpy as np

from .errors import NumericalError

PSD_JITTER = 1e-10
EIG_FAIL = 1e-6


def _psd_scale(m):
    d = m.shape[0]
    return max(np.trace(m) / d, np.finfo(float).tiny)


def check_psd(m, name):
    """Fail if ``m`` has an eigenvalue below -EIG_FAIL * (trace/d)."""
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    if w.min() < -EIG_FAIL * _psd_scale(m):
        raise NumericalError(
            f"{name} violates the covariance ordering guaranteed for valid moments "
            f"(eigmin={w.min():g}); this indicates an estimation bug, not noise")
    return w


def psd_factor(m, name="covariance"):
    """Return L with L L^T = m (+ tiny jitter), for symmetric PSD m.

    Tries Cholesky after adding PSD_JITTER * (trace/d) * I; falls back to an
    eigendecomposition with negative eigenvalues clipped to zero, which also
    covers legitimately rank-deficient covariances (e.g. a zero matrix).
    """
    m = 0.5 * (np.asarray(m, dtype=float) + np.asarray(m, dtype=float).T)
    check_psd(m, name)
    jitter = PSD_JITTER * (np.trace(m) / m.shape[0])  # exactly 0 for a zero matrix
    try:
        return np.linalg.cholesky(m + jitter * np.eye(m.shape[0]))
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(m)
        w = np.clip(w, 0.0, None)
        return v * np.sqrt(w)
