"""Seeded replicate engine: simulate, summarize, compare, check coverage.

Replicate r draws everything it needs from the stream (seed, r), so results
are bitwise identical whether replicates run serially or across a worker pool,
and summaries are computed from the assembled sample matrix in fixed order.
Standard errors for variance summaries come from delete-one jackknife closed
forms, vectorized over replicates.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import closedform
from . import statistics as stats
from .core import augment_iid, augment_repeated, replicate_unaugmented
from .errors import ConfigError
from .rng import substream
from .surrogate import build_surrogate, estimate_moments, sample_repeated_surrogate, \
    sample_surrogate_rows

PROTOCOLS = ("iid_aug", "repeated_aug", "unaugmented", "surrogate", "repeated_surrogate")


@dataclass(frozen=True)
class ExperimentConfig:
    source: object
    family: object
    protocol: str
    statistic: stats.StatisticKind
    n: int
    k: int
    replicates: int
    seed: int
    alpha: float = 0.05
    delta: float = 0.0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.n < 1 or self.k < 1:
            raise ConfigError("n and k must be positive")
        if self.replicates < 2:
            raise ConfigError("need at least 2 replicates")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta must lie in [0, 1]")
        if self.source.dim != self.statistic.slot_dim:
            raise ConfigError(
                f"source dimension {self.source.dim} does not match the statistic's "
                f"slot dimension {self.statistic.slot_dim}")
        if self.family.dim != self.source.dim:
            raise ConfigError("family and source dimensions disagree")


@dataclass(frozen=True)
class SimulationResult:
    samples: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    var_norm: float
    std_of_first_coord: float
    se_of_variance: float
    se_of_first_coord_var: float
    empirical_ci_width: float
    config_echo: ExperimentConfig
    wall_time: float = field(default=float("nan"), compare=False)


def _jackknife_var_norm_se(samples):
    """Delete-one jackknife SEs for ||cov||_F and for cov[0, 0].

    Uses the rank-one downdate of the deviation outer-product sum, so the whole
    computation is O(R q^2) and exactly matches recomputing each leave-one-out
    covariance.
    """
    r, q = samples.shape
    if r < 3:
        return 0.0, 0.0
    mean = samples.mean(axis=0)
    dev = samples - mean
    s = dev.T @ dev
    scale = r / (r - 1.0)
    sdev = dev @ s
    quad = np.einsum("ij,ij->i", dev, sdev)
    norms2 = np.einsum("ij,ij->i", dev, dev)
    s_norm2 = float(np.sum(s * s))
    loo_norm2 = s_norm2 - 2.0 * scale * quad + scale**2 * norms2**2
    loo_var_norm = np.sqrt(np.maximum(loo_norm2, 0.0)) / (r - 2.0)
    se_norm = math.sqrt((r - 1.0) / r * np.sum((loo_var_norm - loo_var_norm.mean()) ** 2))
    loo_first = (s[0, 0] - scale * dev[:, 0] ** 2) / (r - 2.0)
    se_first = math.sqrt((r - 1.0) / r * np.sum((loo_first - loo_first.mean()) ** 2))
    return se_norm, se_first


def _replicate_sampler(config):
    """Return a function mapping a replicate index to the statistic's value."""
    src, fam, k, n = config.source, config.family, config.k, config.n
    kind, seed = config.statistic, config.seed
    protocol = config.protocol

    if protocol == "surrogate":
        moments = estimate_moments(fam, src)
        spec = build_surrogate(moments, n, k, config.delta)

        def run(r):
            return stats.evaluate(kind, sample_surrogate_rows(spec, n, _sub(seed, r)), k)
        return run

    if protocol == "repeated_surrogate":
        def run(r):
            rows = sample_repeated_surrogate(fam, src, n, k, _sub(seed, r))
            return stats.evaluate(kind, rows, k)
        return run

    if protocol == "unaugmented":
        def run(r):
            rng = substream(seed, r)
            data = src.sample(n, rng)
            return stats.evaluate(kind, replicate_unaugmented(data, k), k)
        return run

    augment = augment_iid if protocol == "iid_aug" else augment_repeated

    def run(r):
        rng = substream(seed, r)
        data = src.sample(n, rng)
        aug = augment(data, fam, k, int(rng.integers(2**63)))
        return stats.evaluate(kind, aug, k)
    return run


def _sub(seed, r):
    # integer sub-seed for samplers that derive their own stream
    return int(np.random.SeedSequence([int(seed), int(r)]).generate_state(1, np.uint64)[0])


def run_experiment(config, workers=1):
    """Run all replicates and summarize; deterministic given config.seed.

    ``workers > 1`` executes replicates in a thread pool; each replicate writes
    its own row of the sample matrix, so the result is independent of the
    worker count and of scheduling order.
    """
    t0 = time.perf_counter()
    run = _replicate_sampler(config)
    r_total = config.replicates
    q = config.statistic.output_dim
    samples = np.empty((r_total, q))

    if workers <= 1:
        for r in range(r_total):
            samples[r] = run(r)
    else:
        chunk = max(1, r_total // (8 * workers))
        ranges = [range(lo, min(lo + chunk, r_total)) for lo in range(0, r_total, chunk)]

        def fill(rr):
            for r in rr:
                samples[r] = run(r)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, ranges))

    mean = samples.mean(axis=0)
    cov = np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))
    se_norm, se_first = _jackknife_var_norm_se(samples)
    lo_q, hi_q = np.quantile(samples[:, 0], [config.alpha / 2, 1 - config.alpha / 2])
    return SimulationResult(
        samples=samples, mean=mean, covariance=cov,
        var_norm=float(np.linalg.norm(cov)),
        std_of_first_coord=float(np.sqrt(max(cov[0, 0], 0.0))),
        se_of_variance=se_norm, se_of_first_coord_var=se_first,
        empirical_ci_width=float(hi_q - lo_q),
        config_echo=config, wall_time=time.perf_counter() - t0)


@dataclass(frozen=True)
class ComparisonReport:
    results: dict
    theta_hat: float
    theta_se: float
    theta_theory: float = None
    degenerate: bool = False


def _theory_theta(config):
    kind = config.statistic
    if kind.name == "average":
        moments = estimate_moments(config.family, config.source)
        return closedform.theta_ratio_average(moments, config.source, config.k)
    if kind.name == "expnegchisq":
        s_aug, s_un = closedform.exp_neg_chisq_sigmas(config.family, config.source)
        v_aug = closedform.v_curve(s_aug)
        if v_aug == 0.0:
            return math.inf
        return math.sqrt(closedform.v_curve(s_un) / v_aug)
    return None


def compare_protocols(config_base, protocols, workers=1):
    """Run the same statistic under several protocols and report the benefit ratio.

    The ratio is sqrt(unaugmented variance norm / augmented variance norm),
    with a delta-method standard error from the two jackknife variance SEs.
    Protocol list must contain "unaugmented" plus at least one augmented
    protocol (the first non-baseline entry is the ratio's denominator).
    """
    if "unaugmented" not in protocols:
        raise ConfigError("comparison needs the unaugmented baseline protocol")
    results = {}
    for idx, proto in enumerate(protocols):
        cfg = replace(config_base, protocol=proto,
                      seed=_sub(config_base.seed, idx))
        results[proto] = run_experiment(cfg, workers=workers)
    aug_name = next(p for p in protocols if p != "unaugmented")
    va = results[aug_name].var_norm
    vu = results["unaugmented"].var_norm
    if va == 0.0:
        return ComparisonReport(results=results, theta_hat=math.inf, theta_se=float("nan"),
                                theta_theory=_theory_theta(config_base), degenerate=True)
    theta = math.sqrt(vu / va)
    sa = results[aug_name].se_of_variance
    su = results["unaugmented"].se_of_variance
    rel = 0.0
    if vu > 0:
        rel = (su / vu) ** 2 + (sa / va) ** 2
    se = 0.5 * theta * math.sqrt(rel)
    return ComparisonReport(results=results, theta_hat=theta, theta_se=se,
                            theta_theory=_theory_theta(config_base))


def coverage_check(config, interval_rule, workers=1):
    """Empirical coverage of a fixed closed-form interval over replicates.

    ``interval_rule="average_ci"`` checks the plain grand mean (the scaled
    statistic divided by sqrt(n)) against the d=1 interval for the config's
    protocol; ``"chisq_ci"`` checks the exponential statistic against its
    quantile interval.  Returns (coverage, binomial SE, interval).
    """
    kind = config.statistic
    moments = estimate_moments(config.family, config.source)
    if interval_rule == "average_ci":
        if kind.name != "average" or kind.d != 1:
            raise ConfigError("average interval rule applies to the d=1 average statistic")
        proto = "augmented" if config.protocol in ("iid_aug", "repeated_aug", "surrogate") \
            else "unaugmented"
        interval = closedform.average_ci(moments, config.source, config.n, config.k,
                                         config.alpha, proto)
        scale = 1.0 / math.sqrt(config.n)
    elif interval_rule == "chisq_ci":
        if kind.name != "expnegchisq":
            raise ConfigError("chi-squared interval rule applies to the 1-d exponential statistic")
        if config.protocol in ("unaugmented",):
            sigma = math.sqrt(float(config.source.joint_cov()[0, 0]))
        else:
            sigma = math.sqrt(max(float(moments.sigma12[0, 0]), 0.0))
        interval = closedform.chisq_ci(sigma, config.alpha)
        scale = 1.0
    else:
        raise ConfigError(f"unknown interval rule {interval_rule!r}")

    result = run_experiment(config, workers=workers)
    vals = result.samples[:, 0] * scale
    hits = (vals >= interval.lo) & (vals <= interval.hi)
    p = float(hits.mean())
    se = math.sqrt(max(p * (1 - p), 0.0) / config.replicates)
    return p, se, interval
