"""Augmentation moments and the Gaussian surrogate laws.

The surrogate for i.i.d. augmentation is a block Gaussian: row i of a sampled
matrix has mean ``1_k (x) mean_block`` and covariance
``I_k (x) diag_block + (1_{kxk} - I_k) (x) offdiag_block`` with

    diag_block    = (1 - delta) * S11 + delta * S12,
    offdiag_block = S12,

where S11 is the marginal covariance of a transformed observation and S12 the
covariance between two independently transformed copies of the same
observation.  Sampling uses the additive decomposition

    row_i = (A_i + B_i1, ..., A_i + B_ik),
    A_i ~ N(0, offdiag_block),  B_ij ~ N(mean_block, diag_block - offdiag_block),

which factorizes two d x d matrices instead of one kd x kd matrix and encodes
the block structure by construction.

For repeated augmentation the surrogate is conditionally Gaussian given one
draw of k maps; see :func:`sample_repeated_surrogate`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .linalg import EIG_FAIL, check_psd, psd_factor
from .rng import substream


@dataclass(frozen=True)
class AugmentationMoments:
    """All moments of a (family, source) pair that the surrogate laws consume.

    mean_phi_x     : mean of a transformed observation
    sigma11        : covariance of a transformed observation
    sigma12        : covariance between two independently transformed copies
    mean_cond_var  : expected conditional covariance given the observation
                     (equals sigma11 - sigma12 by the law of total variance)
    mean_var_given_map : expected conditional covariance given the map;
                     sandwiched between sigma11 and sigma12 in the Loewner order
    sixth_moment   : E ||transformed observation||^6
    provenance     : "exact" or "monte_carlo"
    """

    mean_phi_x: np.ndarray
    sigma11: np.ndarray
    sigma12: np.ndarray
    mean_cond_var: np.ndarray
    mean_var_given_map: np.ndarray
    sixth_moment: float
    provenance: str
    num_samples: int = 0
    seed: int = 0
    warnings: tuple = field(default_factory=tuple)

    @property
    def dim(self):
        return self.mean_phi_x.shape[0]


def _gaussian_sixth_moment(mean, cov):
    """E ||Y||^6 for Y ~ N(mean, cov), via cumulants of the quadratic form Y^T Y."""
    m = np.asarray(mean, dtype=float)
    c = np.asarray(cov, dtype=float)
    c2 = c @ c
    c3 = c2 @ c
    k1 = np.trace(c) + m @ m
    k2 = 2.0 * np.trace(c2) + 4.0 * (m @ c @ m)
    k3 = 8.0 * np.trace(c3) + 24.0 * (m @ c2 @ m)
    return k3 + 3.0 * k1 * k2 + k1**3


def exact_moments(family, source):
    """Closed-form moments for a finite affine family on a Gaussian source."""
    mu = source.joint_mean()
    sigma = source.joint_cov()
    if family.dim != mu.shape[0]:
        raise ContractError(f"family dim {family.dim} does not match source dim {mu.shape[0]}")
    w = family.weights
    mats = [t.matrix for t in family.members]
    offs = [t.offset for t in family.members]

    a_bar = sum(wi * a for wi, a in zip(w, mats))
    mean = a_bar @ mu + sum(wi * o for wi, o in zip(w, offs))

    # second moment of A X + a, averaged over the family, minus mean outer product
    s_raw = sigma + np.outer(mu, mu)
    second = np.zeros_like(sigma)
    var_given_map = np.zeros_like(sigma)
    sixth = 0.0
    for wi, a, o in zip(w, mats, offs):
        am = a @ mu
        second += wi * (a @ s_raw @ a.T + np.outer(am, o) + np.outer(o, am) + np.outer(o, o))
        var_given_map += wi * (a @ sigma @ a.T)
        sixth += wi * _gaussian_sixth_moment(am + o, a @ sigma @ a.T)
    sigma11 = second - np.outer(mean, mean)
    sigma12 = a_bar @ sigma @ a_bar.T
    sigma11 = 0.5 * (sigma11 + sigma11.T)
    sigma12 = 0.5 * (sigma12 + sigma12.T)
    return AugmentationMoments(
        mean_phi_x=mean, sigma11=sigma11, sigma12=sigma12,
        mean_cond_var=sigma11 - sigma12, mean_var_given_map=var_given_map,
        sixth_moment=float(sixth), provenance="exact")


def monte_carlo_moments(family, source, num_samples, seed):
    """Sample-based moments; the fallback when closed forms are unavailable."""
    if num_samples < 2:
        raise ContractError("num_samples must be at least 2")
    rng = substream(seed)
    x = source.sample(num_samples, rng)
    idx1 = family.sample_indices(num_samples, rng)
    idx2 = family.sample_indices(num_samples, rng)
    d = x.shape[1]
    y1 = np.empty_like(x)
    y2 = np.empty_like(x)
    for m, t in enumerate(family.members):
        for idx, y in ((idx1, y1), (idx2, y2)):
            rows = np.nonzero(idx == m)[0]
            if rows.size:
                y[rows] = x[rows] @ t.matrix.T + t.offset
    mean = y1.mean(axis=0)
    sigma11 = np.cov(y1, rowvar=False, ddof=1).reshape(d, d)
    c = (y1 - mean).T @ (y2 - y2.mean(axis=0)) / (num_samples - 1)
    sigma12 = 0.5 * (c + c.T)
    sixth = float(np.mean(np.sum(y1 * y1, axis=1) ** 3))

    # E Var(phi X | X): average over maps of the conditional spread around the mean map
    w = family.weights
    a_bar = sum(wi * t.matrix for wi, t in zip(w, family.members))
    b_bar = sum(wi * t.offset for wi, t in zip(w, family.members))
    cond_mean = x @ a_bar.T + b_bar
    dev = y1 - cond_mean
    mean_cond_var = dev.T @ dev / num_samples
    mean_cond_var = 0.5 * (mean_cond_var + mean_cond_var.T)

    map_means = np.array([t.matrix @ source.joint_mean() + t.offset for t in family.members])
    resid1 = y1 - map_means[idx1]
    mean_var_given_map = resid1.T @ resid1 / num_samples
    mean_var_given_map = 0.5 * (mean_var_given_map + mean_var_given_map.T)

    warns = ()
    eigmin = np.linalg.eigvalsh(sigma12).min()
    if eigmin < -EIG_FAIL * max(np.trace(sigma11) / d, 1e-300):
        warns = (f"estimated cross-copy covariance has eigmin {eigmin:g}; "
                 "it should be positive semidefinite up to sampling noise",)
    return AugmentationMoments(
        mean_phi_x=mean, sigma11=sigma11, sigma12=sigma12,
        mean_cond_var=mean_cond_var, mean_var_given_map=mean_var_given_map,
        sixth_moment=sixth, provenance="monte_carlo",
        num_samples=num_samples, seed=int(seed), warnings=warns)


def estimate_moments(family, source, num_samples=100_000, seed=0, method="auto"):
    """Moments of the augmented observation, exact where possible.

    Finite affine families on Gaussian sources admit closed forms, which is
    the default; ``method="monte_carlo"`` forces the sampling estimator (used
    for cross-validation of the closed forms).
    """
    if method not in ("auto", "exact", "monte_carlo"):
        raise ContractError(f"unknown method {method!r}")
    if method == "monte_carlo":
        return monte_carlo_moments(family, source, num_samples, seed)
    return exact_moments(family, source)


@dataclass(frozen=True)
class SurrogateSpec:
    """The law of one surrogate row: block mean and the two covariance blocks."""

    n: int
    k: int
    d: int
    delta: float
    mean_block: np.ndarray
    diag_block: np.ndarray
    offdiag_block: np.ndarray
    mode: str = "augmented"

    def full_mean(self):
        return np.tile(self.mean_block, self.k)

    def full_covariance(self):
        """Assemble the kd x kd covariance I_k (x) diag + (1 - I_k) (x) offdiag."""
        k, d = self.k, self.d
        out = np.tile(self.offdiag_block, (k, k))
        for j in range(k):
            out[j * d:(j + 1) * d, j * d:(j + 1) * d] = self.diag_block
        return out

    def _factors(self):
        # factorizations are computed once per spec and shared read-only
        cached = getattr(self, "_factor_cache", None)
        if cached is None:
            cached = (psd_factor(self.offdiag_block, "offdiag_block"),
                      psd_factor(self.diag_block - self.offdiag_block,
                                 "diag_block - offdiag_block"))
            object.__setattr__(self, "_factor_cache", cached)
        return cached


def build_surrogate(moments, n, k, delta):
    """Surrogate spec for i.i.d. augmentation at interpolation parameter delta."""
    if not 0.0 <= delta <= 1.0:
        raise ContractError("delta must lie in [0, 1]")
    if n < 1 or k < 1:
        raise ContractError("n and k must be positive")
    diag = (1.0 - delta) * moments.sigma11 + delta * moments.sigma12
    off = moments.sigma12
    check_psd(diag - off, "diag_block - offdiag_block (within-row covariance gap)")
    check_psd(off, "offdiag_block (cross-copy covariance)")
    return SurrogateSpec(n=n, k=k, d=moments.dim, delta=float(delta),
                         mean_block=moments.mean_phi_x.copy(),
                         diag_block=diag, offdiag_block=off, mode="augmented")


def build_unaugmented_surrogate(source, n, k):
    """Surrogate for the k-fold replicate baseline: both blocks equal Var X.

    Rows are exact k-fold replicates of one Gaussian draw, matching the
    replicate construction the downstream variance formulas rely on.
    """
    if n < 1 or k < 1:
        raise ContractError("n and k must be positive")
    cov = source.joint_cov()
    return SurrogateSpec(n=n, k=k, d=cov.shape[0], delta=0.0,
                         mean_block=source.joint_mean(),
                         diag_block=cov, offdiag_block=cov.copy(),
                         mode="unaugmented_replicate")


def sample_surrogate(spec, seed):
    """Draw n i.i.d. surrogate rows as an (n, k*d) matrix. Deterministic given seed.

    Row i is (A_i + B_i1, ..., A_i + B_ik) with A_i carrying the shared
    cross-copy component and B_ij the per-copy remainder; see module docstring.
    """
    return sample_surrogate_rows(spec, spec.n, seed)


def sample_repeated_surrogate(family, source, n, k, seed):
    """Draw n rows of the conditionally Gaussian repeated-augmentation surrogate.

    One set of k maps is drawn and fixed; conditionally on it, each row is a
    Gaussian whose mean stacks the per-map transformed source means and whose
    covariance blocks are Cov(map_j1 X, map_j2 X) for a single X.  For affine
    maps that law is realized exactly by applying the fixed maps to fresh
    Gaussian draws with the source's mean and covariance.
    """
    if n < 1 or k < 1:
        raise ContractError("n and k must be positive")
    mu = source.joint_mean()
    sigma = source.joint_cov()
    if family.dim != mu.shape[0]:
        raise ContractError("family and source dimensions disagree")
    rng = substream(seed)
    idx_k = family.sample_indices((k,), rng)
    l_cov = psd_factor(sigma, "source covariance")
    x = mu + rng.standard_normal((n, mu.shape[0])) @ l_cov.T
    out = np.empty((n, k, mu.shape[0]))
    for j in range(k):
        t = family.members[idx_k[j]]
        out[:, j, :] = x @ t.matrix.T + t.offset
    return out.reshape(n, k * mu.shape[0])


def sample_surrogate_rows(spec, n_rows, seed):
    """Like :func:`sample_surrogate` but for an explicit number of rows."""
    k, d = spec.k, spec.d
    l_shared, l_resid = spec._factors()
    rng = substream(seed)
    a = rng.standard_normal((n_rows, d)) @ l_shared.T
    b = spec.mean_block + rng.standard_normal((n_rows, k, d)) @ l_resid.T
    rows = a[:, None, :] + b
    return rows.reshape(n_rows, k * d)
