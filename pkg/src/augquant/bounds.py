"""Noise-stability estimation and evaluable error-bound assembly.

The central object is the array alpha[r][m]: the L_m norm (over fresh draws)
of the supremum, along the segment from zero to a row's value, of the norm of
the r-th derivative of the statistic with respect to that row.  The row's
neighbours are held at augmented data (rows before) and surrogate draws (rows
after), and the larger of the data-endpoint and surrogate-endpoint branches is
reported.

The segment supremum has no computable closed form in general; it is proxied
by a uniform grid (default 17 points including both endpoints), which makes
the estimates lower bounds on the true suprema.  Derivatives are analytic for
the average, the exponential statistics, the smooth max, and the ridge
estimate; central finite differences cover the rest.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import statistics as stats
from .core import augment_iid
from .errors import ContractError, NumericalError
from .rng import substream
from .surrogate import estimate_moments, sample_surrogate_rows

ORDERS = (0, 1, 2, 3)
MOMENTS = (1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class AlphaEstimates:
    """alpha[r][m-1] for derivative orders r in 0..3 and moments m in 1..6."""

    alpha: np.ndarray
    n: int
    k: int
    num_outer: int
    num_grid: int
    seed: int

    def __getitem__(self, rm):
        r, m = rm
        return float(self.alpha[r, m - 1])


@dataclass(frozen=True)
class BoundReport:
    statistic: str
    n: int
    k: int
    delta: float
    lambda1: float
    lambda2: float
    c1: float
    c2: float
    c3: float
    rhs_iid: float
    gamma3_h: float = 1.0
    eta2_h: float = 1.0
    eta1_h: float = 1.0
    omega1: float = None
    omega2: float = None
    m1: float = None
    m2: float = None
    m3: float = None
    rhs_repeated: float = None


# ---------------------------------------------------------------------------
# Per-statistic derivative norms at a point.  Each adapter reports
# (||f||, ||D^1||, ||D^2||, ||D^3||) for the block of one row.
# ---------------------------------------------------------------------------

class _AverageDerivs:
    def __init__(self, d, n, k):
        self.d, self.n, self.k = d, n, k
        self.d1 = np.sqrt(d) / np.sqrt(n * k)

    def norms(self, w, i):
        f = stats.eval_average(w, self.k)
        return float(np.linalg.norm(f)), self.d1, 0.0, 0.0


class _ExpNegDerivs:
    """Analytic chain-rule norms for exp(-(scaled grand mean)^2), 1 or 2 coords."""

    def __init__(self, n_coords, n, k):
        self.n_coords, self.n, self.k = n_coords, n, k

    def norms(self, w, i):
        n, k = self.n, self.k
        m = stats.eval_average(w, k)  # per-coordinate scaled grand means
        f = np.exp(-m * m)
        u = 2.0 * m / (np.sqrt(n) * k)
        c = 2.0 / (n * k * k)
        d1 = np.sqrt(k * np.sum(f * f * u * u))
        d2 = k * np.sqrt(np.sum((f * (u * u - c)) ** 2))
        d3 = k**1.5 * np.sqrt(np.sum((f * (3.0 * c * u - u**3)) ** 2))
        return float(np.abs(f.sum() if self.n_coords == 2 else f[0])), float(d1), float(d2), float(d3)


class _SmoothMaxDerivs:
    """Softmax-weight norms for the log-sum-exp relaxation of the coordinate max."""

    def __init__(self, d_n, t, n, k):
        self.d_n, self.t, self.n, self.k = d_n, t, n, k

    def norms(self, w, i):
        n, k, d_n = self.n, self.k, self.d_n
        m = stats.eval_average(w, k)
        val = stats.eval_smooth_max(w, k, d_n, self.t)
        if d_n == 1:
            return abs(val), 1.0 / np.sqrt(n * k), 0.0, 0.0
        tau = self.t * np.log(d_n)
        z = tau * (m - m.max())
        omega = np.exp(z)
        omega /= omega.sum()
        d1 = np.sqrt(np.sum(omega * omega) / (n * k))
        h = np.diag(omega) - np.outer(omega, omega)
        d2 = tau / (n * k) * np.linalg.norm(h)
        g = 2.0 * omega[:, None, None] * omega[None, :, None] * omega[None, None, :]
        idx = np.arange(d_n)
        g[:, idx, idx] -= omega[:, None] * omega[None, :]
        g[idx, :, idx] -= (omega[:, None] * omega[None, :]).T
        g[idx, idx, :] -= omega[:, None] * omega[None, :]
        g[idx, idx, idx] += omega
        d3 = (tau * tau) / (n * k) ** 1.5 * np.linalg.norm(g.reshape(-1))
        return abs(val), float(d1), float(d2), float(d3)


class _RidgeDerivs:
    """Frobenius norms of the ridge estimate's block derivative tensors."""

    def __init__(self, d, b, lam, n, k):
        self.d, self.b, self.lam, self.n, self.k = d, b, lam, n, k

    def norms(self, w, i):
        d, b, k = self.d, self.b, self.k
        p = stats._RidgeParts(w, k, d, b, self.lam)
        f_norm = float(np.linalg.norm(p.minv_cross))
        coords = [(j, "v", l) for j in range(k) for l in range(d)]
        coords += [(j, "y", l) for j in range(k) for l in range(b)]

        def deriv1(c):
            j, kind, l = c
            which = "dV" if kind == "v" else "dY"
            return stats.ridge_derivative(w, k, d, b, self.lam, which, i, (j,), (l,))

        def deriv2(c1, c2):
            (j1, k1, l1), (j2, k2, l2) = c1, c2
            if k1 == "y" and k2 == "y":
                return None
            if k1 == "v" and k2 == "v":
                return stats.ridge_derivative(w, k, d, b, self.lam, "dVdV", i, (j1, j2), (l1, l2))
            if k1 == "v":
                return stats.ridge_derivative(w, k, d, b, self.lam, "dYdV", i, (j1, j2), (l1, l2))
            return stats.ridge_derivative(w, k, d, b, self.lam, "dYdV", i, (j2, j1), (l2, l1))

        def deriv3(cs):
            vs = [c for c in cs if c[1] == "v"]
            ys = [c for c in cs if c[1] == "y"]
            if len(ys) >= 2:
                return None
            if len(ys) == 1:
                slots = (vs[0][0], vs[1][0], ys[0][0])
                ls = (vs[0][2], vs[1][2], ys[0][2])
                return stats.ridge_derivative(w, k, d, b, self.lam, "dYdVdV", i, slots, ls)
            slots = tuple(c[0] for c in cs)
            ls = tuple(c[2] for c in cs)
            return stats.ridge_derivative(w, k, d, b, self.lam, "dVdVdV", i, slots, ls)

        s1 = sum(np.sum(deriv1(c) ** 2) for c in coords)

        s2 = 0.0
        for c1, c2 in itertools.combinations_with_replacement(range(len(coords)), 2):
            t = deriv2(coords[c1], coords[c2])
            if t is None:
                continue
            mult = 1 if c1 == c2 else 2
            s2 += mult * np.sum(t * t)

        s3 = 0.0
        for combo in itertools.combinations_with_replacement(range(len(coords)), 3):
            t = deriv3([coords[c] for c in combo])
            if t is None:
                continue
            counts = {}
            for c in combo:
                counts[c] = counts.get(c, 0) + 1
            mult = 6
            for v in counts.values():
                for f in range(2, v + 1):
                    mult //= f
            s3 += mult * np.sum(t * t)
        return f_norm, float(np.sqrt(s1)), float(np.sqrt(s2)), float(np.sqrt(s3))


class _FiniteDifferenceDerivs:
    """Central finite differences on one row's block, for statistics without an
    analytic derivative path.

    The base step is 1e-5 relative to the block scale; second and third
    differences widen it (1e-4, 1e-3) because the rounding noise of an order-r
    stencil grows like eps / h^r and would otherwise swamp the estimate.
    """

    def __init__(self, kind, n, k, rel_steps=(1e-5, 1e-4, 1e-3)):
        self.kind, self.n, self.k, self.rel_steps = kind, n, k, rel_steps

    def norms(self, w, i):
        k = self.k
        base = w[i].copy()
        width = base.shape[0]
        scale = 1.0 + np.linalg.norm(base)
        h1, h2, h3 = (r * scale for r in self.rel_steps)

        def f_at(row):
            w[i] = row
            out = stats.evaluate(self.kind, w, k)
            w[i] = base
            return out

        f0 = f_at(base)

        def shifted(h, *pairs):
            row = base.copy()
            for idx, sgn in pairs:
                row[idx] += sgn * h
            return f_at(row)

        d1 = np.empty((f0.shape[0], width))
        for a in range(width):
            d1[:, a] = (shifted(h1, (a, +1)) - shifted(h1, (a, -1))) / (2 * h1)
        s2 = 0.0
        for a in range(width):
            for c in range(a, width):
                if a == c:
                    t = (shifted(h2, (a, +1)) - 2 * f0 + shifted(h2, (a, -1))) / (h2 * h2)
                else:
                    t = (shifted(h2, (a, +1), (c, +1)) - shifted(h2, (a, +1), (c, -1))
                         - shifted(h2, (a, -1), (c, +1))
                         + shifted(h2, (a, -1), (c, -1))) / (4 * h2 * h2)
                s2 += (1 if a == c else 2) * np.sum(t * t)
        s3 = 0.0
        for combo in itertools.combinations_with_replacement(range(width), 3):
            t = _fd_third(shifted, *combo, h3)
            counts = {}
            for c in combo:
                counts[c] = counts.get(c, 0) + 1
            mult = 6
            for v in counts.values():
                for fac in range(2, v + 1):
                    mult //= fac
            s3 += mult * np.sum(t * t)
        return (float(np.linalg.norm(f0)), float(np.linalg.norm(d1)),
                float(np.sqrt(s2)), float(np.sqrt(s3)))


def _fd_third(shifted, a, c, e, h):
    if a == c == e:
        return (shifted(h, (a, +2)) - 2 * shifted(h, (a, +1))
                + 2 * shifted(h, (a, -1)) - shifted(h, (a, -2))) / (2 * h**3)
    if a == c or c == e:
        rep, single = (a, e) if a == c else (c, a)
        return (shifted(h, (rep, +1), (single, +1)) - 2 * shifted(h, (single, +1))
                + shifted(h, (rep, -1), (single, +1))
                - shifted(h, (rep, +1), (single, -1)) + 2 * shifted(h, (single, -1))
                - shifted(h, (rep, -1), (single, -1))) / (2 * h**3)
    return (shifted(h, (a, +1), (c, +1), (e, +1)) - shifted(h, (a, +1), (c, +1), (e, -1))
            - shifted(h, (a, +1), (c, -1), (e, +1)) + shifted(h, (a, +1), (c, -1), (e, -1))
            - shifted(h, (a, -1), (c, +1), (e, +1)) + shifted(h, (a, -1), (c, +1), (e, -1))
            + shifted(h, (a, -1), (c, -1), (e, +1))
            - shifted(h, (a, -1), (c, -1), (e, -1))) / (8 * h**3)


def derivative_adapter(kind, n, k):
    """Pick the derivative-norm evaluator for a statistic (analytic if known)."""
    if kind.name == "average":
        return _AverageDerivs(kind.d, n, k)
    if kind.name == "expnegchisq":
        return _ExpNegDerivs(1, n, k)
    if kind.name == "expnegchisq2d":
        return _ExpNegDerivs(2, n, k)
    if kind.name == "smoothmax":
        return _SmoothMaxDerivs(kind.d_n, kind.t, n, k)
    if kind.name == "ridge":
        return _RidgeDerivs(kind.d, kind.b, kind.lam, n, k)
    if kind.name == "hardmax":
        raise ContractError("the hard max is not differentiable; use its smooth relaxation")
    return _FiniteDifferenceDerivs(kind, n, k)


def estimate_alpha(stat, family, source, surrogate_spec, i=None, n=None, k=None,
                   num_outer=64, num_grid=17, seed=0, adapter=None):
    """Estimate alpha[r][m] for a statistic under a (family, source) pair.

    For each outer draw the rows before ``i`` are freshly augmented data, the
    rows after ``i`` are surrogate draws, and the segment endpoint is either a
    fresh augmented row or a fresh surrogate row (two branches).  ``i=None``
    maximizes over every row index.
    """
    if num_grid < 2:
        raise ContractError("num_grid must be at least 2")
    if num_outer < 1:
        raise ContractError("num_outer must be at least 1")
    n = surrogate_spec.n if n is None else n
    k = surrogate_spec.k if k is None else k
    adapter = derivative_adapter(stat, n, k) if adapter is None else adapter
    rows = range(n) if i is None else [int(i)]
    slot = stat.slot_dim
    if surrogate_spec.d != slot or family.dim != slot:
        raise ContractError("statistic slot dimension does not match the family/surrogate")

    fracs = np.linspace(0.0, 1.0, num_grid)
    sups = np.zeros((2, len(ORDERS), num_outer))
    alpha = np.zeros((len(ORDERS), len(MOMENTS)))
    for row_pos, i0 in enumerate(rows):
        for outer in range(num_outer):
            rng = substream(seed, row_pos, outer)
            w = np.empty((n, k * slot))
            if i0 > 0:
                data = source.sample(i0, rng)
                aug = augment_iid(data, family, k, rng.integers(2**63))
                w[:i0] = aug.values
            if i0 < n - 1:
                w[i0 + 1:] = sample_surrogate_rows(surrogate_spec, n - 1 - i0,
                                                   rng.integers(2**63))
            end_data = augment_iid(source.sample(1, rng), family, k,
                                   rng.integers(2**63)).values[0]
            end_surr = sample_surrogate_rows(surrogate_spec, 1, rng.integers(2**63))[0]
            for bi, endpoint in enumerate((end_data, end_surr)):
                best = np.zeros(len(ORDERS))
                for s in fracs:
                    w[i0] = s * endpoint
                    vals = np.asarray(adapter.norms(w, i0))
                    if not np.all(np.isfinite(vals)):
                        raise NumericalError(
                            f"non-finite derivative at row {i0}, segment fraction {s:g}")
                    np.maximum(best, vals, out=best)
                sups[bi, :, outer] = best
        for r in ORDERS:
            for mi, m in enumerate(MOMENTS):
                lm = np.max([np.mean(sups[bi, r] ** m) ** (1.0 / m) for bi in (0, 1)])
                alpha[r, mi] = max(alpha[r, mi], lm)
    return AlphaEstimates(alpha=alpha, n=n, k=k, num_outer=num_outer,
                          num_grid=num_grid, seed=int(seed))


def assemble_lambdas(alphas, gamma3_h=1.0, eta2_h=1.0, eta1_h=1.0):
    """The two printed smoothness combinations for the i.i.d. bound."""
    a = alphas
    lam1 = (gamma3_h * (a[0, 3] * a[1, 3] ** 2 + a[0, 3] ** 2 * a[2, 3])
            + eta2_h * (a[1, 2] ** 2 + a[0, 2] * a[2, 2])
            + eta1_h * a[2, 1])
    lam2 = (gamma3_h * (a[1, 6] ** 3 + 3.0 * a[0, 6] * a[1, 6] * a[2, 6]
                        + a[0, 6] ** 2 * a[3, 6])
            + eta2_h * (3.0 * a[1, 4] * a[2, 4] + a[0, 4] * a[3, 4])
            + eta1_h * a[3, 2])
    return float(lam1), float(lam2)


def assemble_omegas(alphas, gamma3_h=1.0, eta2_h=1.0, eta1_h=1.0):
    """The two extra smoothness combinations for the repeated-augmentation bound."""
    a = alphas
    om1 = gamma3_h * a[1, 2] ** 2 + eta2_h * a[1, 2] + eta1_h * a[1, 1]
    om2 = (gamma3_h * (a[0, 6] * a[1, 6] ** 2 + a[0, 6] ** 2 * a[2, 6])
           + eta2_h * (a[1, 4] ** 2 + a[0, 4] * a[2, 4])
           + eta1_h * a[2, 2])
    return float(om1), float(om2)


def moment_constants(moments, spec, num_rows=100_000, seed=0):
    """(c1, c2, c3): conditional-variance, sixth-moment, and surrogate-row constants.

    c3 averages ((sum_j ||row_j||^2) / k)^3 over sampled surrogate rows; the
    other two are exact functions of the supplied moments.
    """
    c1 = 0.5 * float(np.linalg.norm(moments.mean_cond_var))
    c2 = float(np.sqrt(moments.sixth_moment)) / 6.0
    rows = sample_surrogate_rows(spec, num_rows, seed).reshape(num_rows, spec.k, spec.d)
    per_row = np.sum(rows * rows, axis=(1, 2)) / spec.k
    c3 = float(np.sqrt(np.mean(per_row**3))) / 6.0
    return c1, c2, c3


def repeated_constants(family, source, num_samples=0, seed=0):
    """(m1, m2, m3): map-conditional moment spreads, exact for finite affine families.

    ``num_samples``/``seed`` are accepted for interface stability but unused:
    every built-in family is finite, so the conditional moments enumerate.
    """
    mu = source.joint_mean()
    sigma = source.joint_cov()
    s_raw = sigma + np.outer(mu, mu)
    w = family.weights
    cond_means = np.array([t.matrix @ mu + t.offset for t in family.members])
    mean_of_means = w @ cond_means
    var_mean = ((cond_means - mean_of_means).T * w) @ (cond_means - mean_of_means)
    m1 = float(np.sqrt(2.0 * np.trace(var_mean)))

    g = np.array([t.matrix @ s_raw @ t.matrix.T
                  + np.outer(t.matrix @ mu, t.offset)
                  + np.outer(t.offset, t.matrix @ mu)
                  + np.outer(t.offset, t.offset) for t in family.members])
    g_mean = np.tensordot(w, g, axes=1)
    m2 = float(np.sqrt(np.sum(((g - g_mean) ** 2 * w[:, None, None]).sum(axis=0)) / 2.0))

    pair_vals = np.array([[a.matrix @ s_raw @ b.matrix.T
                           + np.outer(a.matrix @ mu, b.offset)
                           + np.outer(a.offset, b.matrix @ mu)
                           + np.outer(a.offset, b.offset)
                           for b in family.members] for a in family.members])
    pw = np.outer(w, w)
    h_mean = np.tensordot(pw, pair_vals, axes=2)
    dev2 = ((pair_vals - h_mean) ** 2 * pw[:, :, None, None]).sum(axis=(0, 1))
    m3 = float(np.sqrt(dev2.sum() / 6.0))
    return m1, m2, m3


def theorem_rhs(n, k, delta, *, lambda1=0.0, lambda2=0.0, c1=0.0, c2=0.0, c3=0.0,
                omega1=0.0, omega2=0.0, m1=0.0, m2=0.0, m3=0.0, variant="iid"):
    """Evaluate the right-hand side of the surrogate-approximation bound.

    variant="iid":      n k^{1/2} lambda1 delta c1 + n k^{3/2} lambda2 (c2 + c3)
    variant="repeated": n omega1 m1 + n omega2 (m2 + m3) + n k^{3/2} lambda2 (c2 + c3)
    """
    tail = n * k**1.5 * lambda2 * (c2 + c3)
    if variant == "iid":
        return float(n * np.sqrt(k) * lambda1 * delta * c1 + tail)
    if variant == "repeated":
        return float(n * omega1 * m1 + n * omega2 * (m2 + m3) + tail)
    raise ContractError(f"unknown variant {variant!r}")


def bound_report(stat, family, source, spec, *, delta=None, num_outer=64,
                 num_grid=17, seed=0, gamma3_h=1.0, eta2_h=1.0, eta1_h=1.0,
                 moments=None, include_repeated=False):
    """Assemble a full evaluable bound for one statistic/configuration."""
    delta = spec.delta if delta is None else delta
    moments = estimate_moments(family, source) if moments is None else moments
    alphas = estimate_alpha(stat, family, source, spec, i=0, num_outer=num_outer,
                            num_grid=num_grid, seed=seed)
    lam1, lam2 = assemble_lambdas(alphas, gamma3_h, eta2_h, eta1_h)
    c1, c2, c3 = moment_constants(moments, spec, seed=seed)
    rhs = theorem_rhs(spec.n, spec.k, delta, lambda1=lam1, lambda2=lam2,
                      c1=c1, c2=c2, c3=c3, variant="iid")
    extra = {}
    if include_repeated:
        om1, om2 = assemble_omegas(alphas, gamma3_h, eta2_h, eta1_h)
        m1, m2, m3 = repeated_constants(family, source)
        extra = dict(omega1=om1, omega2=om2, m1=m1, m2=m2, m3=m3,
                     rhs_repeated=theorem_rhs(spec.n, spec.k, delta, lambda2=lam2,
                                              c2=c2, c3=c3, omega1=om1, omega2=om2,
                                              m1=m1, m2=m2, m3=m3, variant="repeated"))
    return BoundReport(statistic=stat.name, n=spec.n, k=spec.k, delta=delta,
                       lambda1=lam1, lambda2=lam2, c1=c1, c2=c2, c3=c3, rhs_iid=rhs,
                       gamma3_h=gamma3_h, eta2_h=eta2_h, eta1_h=eta1_h, **extra)
