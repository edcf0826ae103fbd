"""Statistics evaluated on augmented datasets, plus exact ridge derivatives.

Every statistic consumes the row-major augmented layout (n rows, k slots of d
coordinates each) and is invariant under permuting the k slots within a row.
The ridge derivative tensors are assembled from the resolvent identities for
the regularized Gram matrix; they back both the derivative-verification tests
and the analytic noise-stability path.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ContractError, NumericalError

CANONICAL_NAMES = ("average", "expnegchisq", "expnegchisq2d", "smoothmax",
                   "hardmax", "ridge", "ridgerisk")


@dataclass(frozen=True)
class RiskMoments:
    """Second moments of a fresh (covariate, response) pair for the risk form.

    sigma_y  : E ||Y||^2           (scalar)
    sigma_yv : E Y V^T             (b x d)
    sigma_v  : E V V^T             (d x d)
    """

    sigma_y: float
    sigma_yv: np.ndarray
    sigma_v: np.ndarray


def risk_moments_from_source(source):
    """Closed-form risk moments for a regression source (default path)."""
    if source.kind != "regression":
        raise ContractError("risk moments require a regression source")
    mu = source.mean
    second_v = source.cov + np.outer(mu, mu)
    sigma_y = float(np.trace(source.cov) + mu @ mu
                    + source.d_resp * source.noise_scale**2)
    return RiskMoments(sigma_y=sigma_y, sigma_yv=second_v.copy(), sigma_v=second_v.copy())


@dataclass(frozen=True)
class StatisticKind:
    """Tagged description of a statistic; ``name`` is the CLI-facing label."""

    name: str
    d: int = 1
    b: int = 1
    t: float = 1.0
    d_n: int = 1
    lam: float = 0.0
    risk_moments: RiskMoments = None

    def __post_init__(self):
        if self.name not in CANONICAL_NAMES:
            raise ContractError(f"unknown statistic {self.name!r}; expected one of {CANONICAL_NAMES}")
        if self.lam < 0:
            raise ContractError("ridge penalty must be nonnegative")
        if self.name == "smoothmax" and self.t <= 0:
            raise ContractError("smooth max temperature parameter must be positive")

    @property
    def slot_dim(self):
        """Dimension each augmented cell must have for this statistic."""
        if self.name == "average":
            return self.d
        if self.name == "expnegchisq":
            return 1
        if self.name == "expnegchisq2d":
            return 2
        if self.name in ("smoothmax", "hardmax"):
            return self.d_n
        return self.d + self.b

    @property
    def output_dim(self):
        if self.name == "average":
            return self.d
        if self.name == "ridge":
            return self.d * self.b
        return 1


def average_statistic(d):
    return StatisticKind(name="average", d=d)


def exp_neg_chisq_statistic():
    return StatisticKind(name="expnegchisq")


def exp_neg_chisq_2d_statistic():
    return StatisticKind(name="expnegchisq2d")


def smooth_max_statistic(d_n, t):
    return StatisticKind(name="smoothmax", d_n=d_n, t=float(t))


def hard_max_statistic(d_n):
    return StatisticKind(name="hardmax", d_n=d_n)


def ridge_statistic(d, b, lam):
    return StatisticKind(name="ridge", d=d, b=b, lam=float(lam))


def ridge_risk_statistic(d, b, lam, risk_moments):
    return StatisticKind(name="ridgerisk", d=d, b=b, lam=float(lam),
                         risk_moments=risk_moments)


def _cells(data, k):
    """Coerce an AugmentedDataset or raw (n, k*d) array to (n, k, d) cells."""
    values = getattr(data, "values", data)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ContractError("expected a 2-d augmented layout")
    n, cols = values.shape
    if k < 1 or cols % k != 0:
        raise ContractError(f"column count {cols} is not a multiple of k={k}")
    return values.reshape(n, k, cols // k)


def eval_average(data, k):
    """The root-n scaled grand mean: sum over all cells divided by sqrt(n) * k."""
    cells = _cells(data, k)
    n = cells.shape[0]
    return cells.sum(axis=(0, 1)) / (np.sqrt(n) * k)


def eval_exp_neg_chisq(data, k, dims="1d"):
    """exp(-(scaled grand mean)^2), per coordinate; summed over both for "2d"."""
    cells = _cells(data, k)
    if dims == "1d":
        if cells.shape[2] != 1:
            raise ContractError("1d variant requires slot dimension 1")
        g = eval_average(data, k)[0]
        return float(np.exp(-g * g))
    if dims == "2d":
        if cells.shape[2] != 2:
            raise ContractError("2d variant requires slot dimension 2")
        g = eval_average(data, k)
        return float(np.exp(-g * g).sum())
    raise ContractError(f"dims must be '1d' or '2d', got {dims!r}")


def eval_hard_max(data, k, d_n):
    cells = _cells(data, k)
    if cells.shape[2] != d_n:
        raise ContractError(f"slot dimension {cells.shape[2]} does not match d_n={d_n}")
    return float(eval_average(data, k).max())


def eval_smooth_max(data, k, d_n, t):
    """Log-sum-exp relaxation of the coordinatewise max of scaled grand means.

    The temperature is t * log(d_n), which caps the gap to the hard max at 1/t.
    For d_n = 1 the relaxation is exact and the degenerate temperature is
    bypassed.
    """
    if t <= 0:
        raise ContractError("t must be positive")
    cells = _cells(data, k)
    if cells.shape[2] != d_n:
        raise ContractError(f"slot dimension {cells.shape[2]} does not match d_n={d_n}")
    m = eval_average(data, k)
    if d_n == 1:
        return float(m[0])
    tau = t * np.log(d_n)
    shift = m.max()
    return float(shift + np.log(np.exp(tau * (m - shift)).sum()) / tau)


def _split_vy(cells, d, b):
    if cells.shape[2] != d + b:
        raise ContractError(f"slot dimension {cells.shape[2]} does not match d+b={d + b}")
    return cells[:, :, :d], cells[:, :, d:]


def _gram_cross(cells, d, b):
    v, y = _split_vy(cells, d, b)
    v2 = v.reshape(-1, d)
    y2 = y.reshape(-1, b)
    return v2.T @ v2, v2.T @ y2


def ridge_fit(data, k, d, b, lam):
    """Ridge estimate on the augmented pairs, via an SPD solve.

    Solves (sum v v^T + n k lam I) B = sum v y^T; lam = 0 is allowed only when
    the Gram matrix is numerically invertible.
    """
    cells = _cells(data, k)
    n = cells.shape[0]
    gram, cross = _gram_cross(cells, d, b)
    m = gram + n * k * lam * np.eye(d)
    try:
        return cho_solve(cho_factor(m), cross)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"regularized Gram matrix is singular (rank deficiency at lam={lam:g})") from exc


def ridge_risk(b_hat, risk_moments):
    """Expected squared prediction error of ``b_hat`` on a fresh pair."""
    b_hat = np.asarray(b_hat, dtype=float)
    rm = risk_moments
    syv = np.asarray(rm.sigma_yv, dtype=float)
    sv = np.asarray(rm.sigma_v, dtype=float)
    if syv.shape != (b_hat.shape[1], b_hat.shape[0]) or sv.shape != (b_hat.shape[0],) * 2:
        raise ContractError("risk moment dimensions do not match the estimate")
    return float(rm.sigma_y - 2.0 * np.trace(syv @ b_hat) + np.trace(b_hat.T @ sv @ b_hat))


class _RidgeParts:
    """Shared pieces for the derivative formulas: inverse, cells, basis maps."""

    def __init__(self, data, k, d, b, lam):
        if lam <= 0:
            raise ContractError("derivative formulas require a positive ridge penalty")
        cells = _cells(data, k)
        self.n, self.k, self.d, self.b = cells.shape[0], k, d, b
        self.v, self.y = _split_vy(cells, d, b)
        gram, self.cross = _gram_cross(cells, d, b)
        m = gram + self.n * k * lam * np.eye(d)
        self.minv = cho_solve(cho_factor(m), np.eye(d))
        self.minv_cross = self.minv @ self.cross

    def check(self, i, slots, coords, kinds):
        if not 0 <= i < self.n:
            raise ContractError(f"row index {i} out of range")
        for j, l, kind in zip(slots, coords, kinds):
            if not 0 <= j < self.k:
                raise ContractError(f"slot index {j} out of range")
            lim = self.d if kind == "v" else self.b
            if not 0 <= l < lim:
                raise ContractError(f"coordinate index {l} out of range for {kind}-block")

    def q(self, i, j, l):
        # Q_l(v_ij) = e_l v^T + v e_l^T
        v = self.v[i, j]
        out = np.zeros((self.d, self.d))
        out[l, :] += v
        out[:, l] += v
        return out

    def minv_q(self, i, j, l):
        # M^{-1} Q_l(v_ij), assembled from two rank-one pieces
        v = self.v[i, j]
        mv = self.minv @ v
        return np.outer(self.minv[:, l], v) + np.outer(mv, _unit(self.d, l))


def _unit(dim, l):
    e = np.zeros(dim)
    e[l] = 1.0
    return e


def ridge_derivative(data, k, d, b, lam, which, i, slots, coords):
    """Exact derivative tensors of the ridge estimate within row ``i``.

    ``slots`` and ``coords`` give the differentiated cells: one (slot, coord)
    pair per derivative order.  ``which`` selects the block pattern:

    - "dY", "dV": first order with respect to a response / covariate entry;
    - "dYdY": identically zero (the estimate is affine in the responses);
    - "dYdV": second order, first pair indexes the covariate entry, second the
      response entry;
    - "dVdV": second order in two covariate entries;
    - "dYdVdV": third order, first two pairs covariate, last pair response;
    - "dVdVdV": third order in three covariate entries.

    Returns a (d, b) matrix (the derivative of the matrix-valued estimate with
    respect to the chosen scalar entries).
    """
    p = _RidgeParts(data, k, d, b, lam)
    slots = tuple(int(s) for s in slots)
    coords = tuple(int(c) for c in coords)

    if which == "dY":
        p.check(i, slots, coords, ("y",))
        (j,), (l,) = slots, coords
        return np.outer(p.minv @ p.v[i, j], _unit(b, l))

    if which == "dV":
        p.check(i, slots, coords, ("v",))
        (j,), (l,) = slots, coords
        return (np.outer(p.minv[:, l], p.y[i, j])
                - p.minv_q(i, j, l) @ p.minv_cross)

    if which == "dYdY":
        p.check(i, slots, coords, ("y", "y"))
        return np.zeros((d, b))

    if which == "dYdV":
        p.check(i, slots, coords, ("v", "y"))
        (j1, j2), (l1, l2) = slots, coords
        out = -p.minv_q(i, j1, l1) @ np.outer(p.minv @ p.v[i, j2], _unit(b, l2))
        if j1 == j2:
            out += np.outer(p.minv[:, l1], _unit(b, l2))
        return out

    if which == "dVdV":
        p.check(i, slots, coords, ("v", "v"))
        (j1, j2), (l1, l2) = slots, coords
        out = np.zeros((d, b))
        for (jr, lr), (js, ls) in (((j1, l1), (j2, l2)), ((j2, l2), (j1, l1))):
            mq_r = p.minv_q(i, jr, lr)
            out -= mq_r @ np.outer(p.minv[:, ls], p.y[i, js])
            out += mq_r @ p.minv_q(i, js, ls) @ p.minv_cross
            if j1 == j2:
                out -= np.outer(p.minv[:, lr], p.minv_cross[ls, :])
        return out

    if which == "dYdVdV":
        p.check(i, slots, coords, ("v", "v", "y"))
        (j1, j2, j3), (l1, l2, l3) = slots, coords
        mv3 = p.minv @ p.v[i, j3]
        o3 = _unit(b, l3)
        out = np.zeros((d, b))
        for (jr, lr), (js, ls) in (((j1, l1), (j2, l2)), ((j2, l2), (j1, l1))):
            mq_r = p.minv_q(i, jr, lr)
            if js == j3:
                out -= mq_r @ np.outer(p.minv[:, ls], o3)
            out += mq_r @ p.minv_q(i, js, ls) @ np.outer(mv3, o3)
            if j1 == j2:
                out -= (p.minv[ls, :] @ p.v[i, j3]) * np.outer(p.minv[:, lr], o3)
        return out

    if which == "dVdVdV":
        p.check(i, slots, coords, ("v", "v", "v"))
        pairs = tuple(zip(slots, coords))
        out = np.zeros((d, b))
        perms = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
        for pr, ps, pt in perms:
            (jr, lr), (js, ls), (jt, lt) = pairs[pr], pairs[ps], pairs[pt]
            mq_r = p.minv_q(i, jr, lr)
            mq_rs = mq_r @ p.minv_q(i, js, ls)
            if jr == js:
                out -= p.minv[ls, lt] * np.outer(p.minv[:, lr], p.y[i, jt])
                out += np.outer(p.minv[:, lr], (p.minv_q(i, jt, lt) @ p.minv_cross)[ls, :])
            out += mq_rs @ np.outer(p.minv[:, lt], p.y[i, jt])
            out -= mq_rs @ p.minv_q(i, jt, lt) @ p.minv_cross
            if js == jt:
                out += mq_r @ np.outer(p.minv[:, ls], p.minv_cross[lt, :])
        return out

    raise ContractError(f"unknown derivative selector {which!r}")


def evaluate(kind, data, k):
    """Dispatch a StatisticKind on an augmented layout; returns a 1-d array."""
    if kind.name == "average":
        return np.atleast_1d(eval_average(data, k))
    if kind.name == "expnegchisq":
        return np.array([eval_exp_neg_chisq(data, k, "1d")])
    if kind.name == "expnegchisq2d":
        return np.array([eval_exp_neg_chisq(data, k, "2d")])
    if kind.name == "smoothmax":
        return np.array([eval_smooth_max(data, k, kind.d_n, kind.t)])
    if kind.name == "hardmax":
        return np.array([eval_hard_max(data, k, kind.d_n)])
    if kind.name == "ridge":
        return ridge_fit(data, k, kind.d, kind.b, kind.lam).reshape(-1)
    if kind.name == "ridgerisk":
        if kind.risk_moments is None:
            raise ContractError("ridge risk statistic needs risk moments")
        b_hat = ridge_fit(data, k, kind.d, kind.b, kind.lam)
        return np.array([ridge_risk(b_hat, kind.risk_moments)])
    raise ContractError(f"unknown statistic {kind.name!r}")
