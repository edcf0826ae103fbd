"""Config-driven command line: closed-form curves, simulations, comparisons,
bound tables, and the CSV bundles behind the reference figures.

Exit codes: 0 success, 2 usage/config error, 3 numerical failure.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from . import bounds as bounds_mod
from . import closedform, config as cfgmod, core, montecarlo
from . import statistics as stats
from .errors import ConfigError, ContractError, NumericalError
from .surrogate import build_surrogate, estimate_moments

DESK = "desk"
PAPER = "paper"
FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5")


def _workers_default():
    env = os.environ.get("AUGQUANT_WORKERS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _write_manifest(out_dir, command, cfg, seed, workers, scale=None):
    lines = [
        f"command = {command}",
        f"version = {__version__}",
        f"config_hash = {cfgmod.config_hash(cfg) if cfg is not None else 'none'}",
        f"seed = {seed}",
        f"workers = {workers}",
    ]
    if scale is not None:
        lines.append(f"scale = {scale}")
    cfgmod.atomic_write(os.path.join(out_dir, "manifest.txt"), "\n".join(lines) + "\n")


def _write_csv(path, header, rows, footer_lines=()):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cfgmod.fmt(v) if isinstance(v, float) else str(v) for v in row))
    for fl in footer_lines:
        lines.append("# " + fl)
    cfgmod.atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# predict: closed-form curves on user grids
# ---------------------------------------------------------------------------

def _cmd_predict(cfg, out_dir, seed, workers):
    curve = cfg.get("predict.curve")
    grid = [float(g) for g in cfg.get("predict.grid", [])]
    alpha = float(cfg.get("predict.alpha", 0.05))
    if curve == "vcurve":
        header = ["s", "variance"]
        rows = [(float(s), closedform.v_curve(s)) for s in grid]
    elif curve == "dwidth":
        header = ["s", f"ci_width_alpha_{alpha:g}"]
        rows = [(float(s), closedform.ci_width_curve(s, alpha)) for s in grid]
    elif curve == "f2var":
        rho = float(cfg.get("predict.rho", -0.5))
        header = ["sigma", f"f2_variance_rho_{rho:g}"]
        rows = [(float(s), closedform.f2_variance(rho, s)) for s in grid]
    elif curve == "toyridge":
        n = int(cfg.get("predict.n", 100))
        mu = float(cfg.get("predict.mu", 1.0))
        c = float(cfg.get("predict.c", 1.0))
        lam = float(cfg.get("predict.lambda", 0.0))
        header = ["sigma", f"toy_ridge_variance_n_{n}_mu_{mu:g}_c_{c:g}_lambda_{lam:g}"]
        rows = [(float(s), closedform.toy_ridge_variance(n, mu, s, c, lam)) for s in grid]
    elif curve == "theta":
        source = cfgmod.source_from_config(cfg)
        family = cfgmod.family_from_config(cfg)
        moments = estimate_moments(family, source)
        header = ["k", "theta_average"]
        rows = [(int(k), closedform.theta_ratio_average(moments, source, int(k))) for k in grid]
    else:
        raise ConfigError(f"unknown predict.curve {curve!r}")
    _write_csv(os.path.join(out_dir, f"predict_{curve}.csv"), header, rows)
    return 0


# ---------------------------------------------------------------------------
# simulate / compare / bounds: thin wrappers over the engine
# ---------------------------------------------------------------------------

def _cmd_simulate(cfg, out_dir, seed, workers):
    config = cfgmod.experiment_from_config(cfg, seed_override=seed)
    result = montecarlo.run_experiment(config, workers=workers)
    cfgmod.atomic_write(os.path.join(out_dir, "result.csv"), cfgmod.result_csv_text(result))
    return 0


def _cmd_compare(cfg, out_dir, seed, workers):
    protocols = [p.strip() for p in str(cfg.get("compare.protocols", "")).split(",") if p.strip()]
    if not protocols:
        raise ConfigError("compare.protocols must list protocols, e.g. iid_aug,unaugmented")
    config = cfgmod.experiment_from_config(cfg, seed_override=seed)
    report = montecarlo.compare_protocols(config, protocols, workers=workers)
    rows = []
    for proto, res in report.results.items():
        rows.append((proto, float(res.var_norm), float(res.se_of_variance),
                     float(res.std_of_first_coord), float(res.empirical_ci_width)))
    footer = [f"theta_hat = {cfgmod.fmt(report.theta_hat)}",
              f"theta_se = {cfgmod.fmt(report.theta_se)}"]
    if report.theta_theory is not None:
        footer.append(f"theta_theory = {cfgmod.fmt(report.theta_theory)}")
    if report.degenerate:
        footer.append("degenerate = true  # zero augmented variance")
    _write_csv(os.path.join(out_dir, "compare.csv"),
               ["protocol", "var_norm", "var_norm_se", "std_first_coord", "ci_width"],
               rows, footer)
    return 0


def _cmd_bounds(cfg, out_dir, seed, workers):
    config = cfgmod.experiment_from_config(cfg, seed_override=seed)
    moments = estimate_moments(config.family, config.source)
    spec = build_surrogate(moments, config.n, config.k, config.delta)
    report = bounds_mod.bound_report(
        config.statistic, config.family, config.source, spec, delta=config.delta,
        num_outer=int(cfg.get("bounds.num_outer", 64)),
        num_grid=int(cfg.get("bounds.num_grid", 17)),
        seed=config.seed, moments=moments,
        include_repeated=bool(cfg.get("bounds.include_repeated", False)))
    header = ["statistic", "n", "k", "delta", "lambda1", "lambda2", "c1", "c2", "c3", "rhs"]
    row = [report.statistic, report.n, report.k, float(report.delta),
           float(report.lambda1), float(report.lambda2), float(report.c1),
           float(report.c2), float(report.c3), float(report.rhs_iid)]
    footer = []
    if report.rhs_repeated is not None:
        footer = [f"omega1 = {cfgmod.fmt(report.omega1)}",
                  f"omega2 = {cfgmod.fmt(report.omega2)}",
                  f"m1 = {cfgmod.fmt(report.m1)}", f"m2 = {cfgmod.fmt(report.m2)}",
                  f"m3 = {cfgmod.fmt(report.m3)}",
                  f"rhs_repeated = {cfgmod.fmt(report.rhs_repeated)}"]
    _write_csv(os.path.join(out_dir, "bounds.csv"), header, [tuple(row)], footer)
    widths = [max(len(h), 12) for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    print("  ".join((v if isinstance(v, str) else format(v, ".6g")).ljust(w)
                    for v, w in zip(row, widths)))
    return 0


# ---------------------------------------------------------------------------
# figure: CSV bundles behind the reference figures (desk or paper scale)
# ---------------------------------------------------------------------------

def _crop_setup():
    source = core.regression_source(mean=[1.0, 1.0], cov=[[1.0, 0.5], [0.5, 1.0]],
                                    noise_scale=1.0)
    family = core.random_crop_family(2).paired(2)
    return source, family


def _rotation_setup():
    block = np.array([[1.0, 0.9], [0.9, 1.0]])
    cov = np.kron(np.eye(2), block)
    source = core.regression_source(mean=[2.0] * 4, cov=cov, noise_scale=1.0)
    family = core.cyclic_rotation_family(4).paired(4)
    return source, family


def _std_with_se(result):
    std = result.std_of_first_coord
    se = result.se_of_first_coord_var / (2 * std) if std > 0 else 0.0
    return std, se


def _fig1(out_dir, scale, seed, workers):
    points = 500 if scale == DESK else 2000
    source, family = _crop_setup()
    k = 50
    rows_avg, rows_ridge = [], []
    # ridge scatter uses the two diagonal entries of the estimate: cropping zeroes
    # every off-diagonal entry identically, which would degenerate the cloud
    for proto in ("iid_aug", "unaugmented"):
        for name, kind, coords in (("average", stats.average_statistic(4), (0, 1)),
                                   ("ridge", stats.ridge_statistic(2, 2, 1.0), (0, 3))):
            config = montecarlo.ExperimentConfig(
                source=source, family=family, protocol=proto, statistic=kind,
                n=200, k=k, replicates=points, seed=seed)
            res = montecarlo.run_experiment(config, workers=workers)
            target = rows_avg if name == "average" else rows_ridge
            for row in res.samples:
                target.append((proto, float(row[coords[0]]), float(row[coords[1]])))
    _write_csv(os.path.join(out_dir, "fig1_average.csv"),
               ["protocol", "coord1", "coord2"], rows_avg)
    _write_csv(os.path.join(out_dir, "fig1_ridge.csv"),
               ["protocol", "coord1", "coord2"], rows_ridge)


def _fig2(out_dir, scale, seed, workers):
    reps = 2000 if scale == DESK else 10_000
    grid = [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]
    rows = []
    for i, s in enumerate(grid):
        source = core.gaussian_source([0.0], [[s * s]])
        config = montecarlo.ExperimentConfig(
            source=source, family=core.identity_family(1), protocol="surrogate",
            statistic=stats.exp_neg_chisq_statistic(), n=50, k=1,
            replicates=reps, seed=seed + i, delta=1.0)
        res = montecarlo.run_experiment(config, workers=workers)
        std, se = _std_with_se(res)
        rows.append((float(s), std, se, math.sqrt(closedform.v_curve(s)),
                     res.empirical_ci_width, closedform.ci_width_curve(s, 0.05)))
    _write_csv(os.path.join(out_dir, "fig2.csv"),
               ["s", "std_sim", "std_se", "std_theory", "width_sim", "width_theory"],
               rows, [f"replicates = {reps}"])


def _fig3(out_dir, scale, seed, workers):
    reps = 2000 if scale == DESK else 10_000
    rho, sigma = -0.5, 1.0
    source = core.gaussian_source([0.0, 0.0],
                                  sigma * sigma * np.array([[1.0, rho], [rho, 1.0]]))
    family = core.swap_family()
    std_theory = math.sqrt(closedform.f2_variance(rho, sigma))
    rows = []
    for i, k in enumerate((1, 5, 20, 50)):
        config = montecarlo.ExperimentConfig(
            source=source, family=family, protocol="iid_aug",
            statistic=stats.exp_neg_chisq_2d_statistic(), n=100, k=k,
            replicates=reps, seed=seed + i)
        res = montecarlo.run_experiment(config, workers=workers)
        std, se = _std_with_se(res)
        rows.append((k, std, se, std_theory))
    _write_csv(os.path.join(out_dir, "fig3.csv"),
               ["k", "std_sim", "std_se", "std_theory"], rows, [f"replicates = {reps}"])


def _fig4(out_dir, scale, seed, workers):
    reps = 2000 if scale == DESK else 10_000
    lam = 1.0
    rows = []
    for fam_name, setup in (("cropping", _crop_setup), ("rotation", _rotation_setup)):
        source, family = setup()
        d = source.d_cov
        for stat_name, kind in (
                ("estimator", stats.ridge_statistic(d, d, lam)),
                ("risk", stats.ridge_risk_statistic(d, d, lam,
                                                    stats.risk_moments_from_source(source)))):
            for proto, ks in (("unaugmented", (1,)), ("iid_aug", (1, 2, 5, 10, 20, 50))):
                for i, k in enumerate(ks):
                    config = montecarlo.ExperimentConfig(
                        source=source, family=family, protocol=proto, statistic=kind,
                        n=200, k=k, replicates=reps, seed=seed + i)
                    res = montecarlo.run_experiment(config, workers=workers)
                    std, se = _std_with_se(res)
                    rows.append((fam_name, stat_name, proto, k, std, se))
    _write_csv(os.path.join(out_dir, "fig4.csv"),
               ["family", "quantity", "protocol", "k", "std_sim", "std_se"],
               rows, [f"replicates = {reps}", f"lambda = {lam:g}"])


def _fig5(out_dir, scale, seed, workers):
    reps = 2000 if scale == DESK else 10_000
    n, mu, c, lam = 100, 1.0, 1.0, 4.0
    grid = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
    rows = []
    for i, s in enumerate(grid):
        source = core.regression_source([mu], [[s * s]], c)
        family = core.identity_family(2)
        std_lam4 = se_lam4 = risk_std = risk_se = 0.0
        for stat_name, kind in (
                ("est", stats.ridge_statistic(1, 1, lam)),
                ("risk", stats.ridge_risk_statistic(1, 1, lam,
                                                    stats.risk_moments_from_source(source)))):
            config = montecarlo.ExperimentConfig(
                source=source, family=family, protocol="iid_aug", statistic=kind,
                n=n, k=1, replicates=reps, seed=seed + i)
            res = montecarlo.run_experiment(config, workers=workers)
            std, se = _std_with_se(res)
            if stat_name == "est":
                std_lam4, se_lam4 = std, se
            else:
                risk_std, risk_se = std, se
        rows.append((float(s), math.sqrt(closedform.toy_ridge_variance(n, mu, s, c, 0.0)),
                     std_lam4, se_lam4, risk_std, risk_se))
    _write_csv(os.path.join(out_dir, "fig5.csv"),
               ["sigma", "std_theory_lam0", "std_sim_lam4", "std_se_lam4",
                "risk_std_sim_lam4", "risk_std_se_lam4"],
               rows, [f"replicates = {reps}", f"n = {n}", f"mu = {mu:g}", f"c = {c:g}",
                      f"lambda = {lam:g}"])


def _cmd_figure(name, out_dir, scale, seed, workers):
    dispatch = {"fig1": _fig1, "fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "fig5": _fig5}
    if name not in dispatch:
        raise ConfigError(f"unknown figure {name!r}; expected one of {FIGURES}")
    dispatch[name](out_dir, scale, seed, workers)
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="augquant",
        description="Quantify how data augmentation changes estimator mean, variance, "
                    "and confidence regions: closed forms, Gaussian surrogates, and "
                    "seeded Monte Carlo verification.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (("predict", True), ("simulate", True),
                               ("compare", True), ("bounds", True), ("figure", False)):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="flat key-value config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--workers", type=int, default=None,
                       help="worker count (default: AUGQUANT_WORKERS or 1)")
        if name == "figure":
            p.add_argument("--name", required=True, choices=FIGURES)
            p.add_argument("--scale", choices=(DESK, PAPER), default=DESK)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    workers = args.workers if args.workers is not None else _workers_default()
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    try:
        if args.command == "figure":
            seed = args.seed if args.seed is not None else 20240
            _write_manifest(out_dir, f"figure:{args.name}", {"figure.name": args.name},
                            seed, workers, args.scale)
            return _cmd_figure(args.name, out_dir, args.scale, seed, workers)
        cfg = cfgmod.read_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        _write_manifest(out_dir, args.command, cfg, seed, workers)
        handler = {"predict": _cmd_predict, "simulate": _cmd_simulate,
                   "compare": _cmd_compare, "bounds": _cmd_bounds}[args.command]
        return handler(cfg, out_dir, seed, workers)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
