#!/usr/bin/env python
# -*- coding: utf-8 -*-
# ----------------------------------------------------------------------------
# Created By  : Matthew Davidson
# Created Date: 2026-10-17
# Copyright © 2026 Davidson Engineering Ltd.
# ---------------------------------------------------------------------------

"""
Command line entry point: `outage-rates <command>`

Each command reads the artifacts of the previous ones from the output directory and writes its own there:

    ingest    records CSV (+ inventory)         -> counts.csv, lines.csv, ingest_report.json
    network   lines.csv                         -> network_edges.csv, distances.csv, covariates.csv, kernels.npz
    fit       counts, covariates, kernels       -> empirical_fit.json, residuals.csv
    sample    fit artifacts                     -> samples.npz, convergence.json, diagnostics.csv
    report    samples.npz, counts.csv           -> estimates.csv, ranked_estimates.csv, sd_ratio_density.csv,
                                                   hyperparameters.csv, report.json [, trajectory_<line>.csv]
    synth     inventory (or bundled synthetic)  -> synthetic_<n>y/ dataset bundles
    eval      bundle + samples.npz              -> evaluation.json, error_histograms.csv, evaluation_sd_ratios.csv
    diagnose  samples.npz                       -> convergence.json, diagnostics.csv, acf.csv, trace.csv

Exit codes: 0 success, 1 other failure, 2 invalid input or configuration, 3 convergence gate failed.
"""
# ---------------------------------------------------------------------------
from __future__ import annotations

from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence, Tuple
import argparse
import logging

import numpy as np
import pandas as pd

from bayesian_outage_rates.bayes import HYPERPARAMETERS, ModelSpec
from bayesian_outage_rates.config import RunConfig
from bayesian_outage_rates.empirical import EmpiricalFit, fit_empirical
from bayesian_outage_rates.exceptions import (
    ConfigError,
    ConvergenceGateError,
    EmptyFitError,
    ErrorException,
    ValidationError,
)
from bayesian_outage_rates.features import Covariates, correlation_report, covariates, district_features
from bayesian_outage_rates.inference import (
    FLOAT_FORMAT,
    conventional,
    estimates_summary,
    estimates_table,
    hyperparameter_summary,
    posterior_point,
    prior_sensitivity,
    rank_by_estimate,
    rate_estimates,
    sd_ratio_report,
    trajectory,
    write_estimates,
)
from bayesian_outage_rates.ingest import CountMatrix, LineTable, ingest, pooled_statistics, read_inventory
from bayesian_outage_rates.kernels import KernelSet, kernel_set, simdiag
from bayesian_outage_rates.network import build_graph, distance_matrix
from bayesian_outage_rates.persistence import write_json
from bayesian_outage_rates.sampling.chains import PosteriorSamples, run_chains
from bayesian_outage_rates.sampling.diagnostics import ConvergenceReport, convergence_report
from bayesian_outage_rates.synthetic import (
    SyntheticDataset,
    compare_estimators,
    generate,
    regenerate_counts,
    synthetic_inventory,
    to_records_frame,
)

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_GATE = 3

COUNTS_FILE = "counts.csv"
LINES_FILE = "lines.csv"
COVARIATES_FILE = "covariates.csv"
KERNELS_FILE = "kernels.npz"
FIT_FILE = "empirical_fit.json"
SAMPLES_FILE = "samples.npz"
INVENTORY_FILE = "inventory.csv"
OUTAGES_FILE = "outages.csv"

SYNTHETIC_YEARS = (1, 5, 100)
SYNTHETIC_LINES = 500

LOG_FORMAT = "%(asctime)s,%(msecs)03d - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(log_file: str = None, verbose: bool = False) -> logging.Logger:
    # get root logger
    logger = logging.getLogger()
    for handler in [h for h in logger.handlers if getattr(h, "outage_rates", False)]:
        logger.removeHandler(handler)
        handler.close()

    # setup logging handler to console
    ch = logging.StreamHandler()
    handlers = [ch]
    # setup logging handler to file
    if log_file:
        fh = logging.FileHandler(log_file)
        fh.setLevel(logging.DEBUG)
        handlers.append(fh)

    # set logging levels
    logger.setLevel(logging.DEBUG)
    ch.setLevel(logging.DEBUG if verbose else logging.INFO)

    # setup logging format
    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=LOG_DATE_FORMAT)

    for handler in handlers:
        handler.setFormatter(formatter)
        handler.outage_rates = True
        logger.addHandler(handler)

    return logger


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"Expected positive integers, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outage-rates",
        description="Bayesian estimation of transmission line outage rates",
    )
    parser.add_argument("--config", help="run configuration (.toml, .json or .yaml)")
    parser.add_argument("--secrets", help="secrets file for ${VAR} references in a TOML configuration")
    parser.add_argument("--seed", type=int, help="global seed, overrides the configuration")
    parser.add_argument("--out", help="output directory, overrides [paths] output")
    parser.add_argument("--log-file", help="also write a DEBUG log to this file")
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG output on the console")
    commands = parser.add_subparsers(dest="command", required=True)

    cmd = commands.add_parser("ingest", help="outage records -> annual counts")
    cmd.add_argument("--input", help="outage records CSV, overrides [paths] input")
    cmd.add_argument("--inventory", help="line inventory CSV, overrides [paths] inventory")
    cmd.set_defaults(handler=cmd_ingest)

    cmd = commands.add_parser("network", help="line graph, distances, covariates and kernels")
    cmd.set_defaults(handler=cmd_network)

    cmd = commands.add_parser("fit", help="empirical (profile likelihood) fit")
    cmd.set_defaults(handler=cmd_fit)

    cmd = commands.add_parser("sample", help="posterior sampling and convergence gate")
    cmd.add_argument("--no-gate", action="store_true", help="exit 0 even when convergence checks fail")
    cmd.set_defaults(handler=cmd_sample)

    cmd = commands.add_parser("report", help="rate estimates and comparison with the conventional estimate")
    cmd.add_argument("--years", type=_int_list, help="year cutoffs for a trajectory, e.g. 1,2,3")
    cmd.add_argument("--line", help="line id for the trajectory")
    cmd.add_argument("--sensitivity", action="store_true", help="rerun with informative regression priors")
    cmd.set_defaults(handler=cmd_report)

    cmd = commands.add_parser("synth", help="synthetic dataset bundles")
    cmd.add_argument("--years", type=_int_list, default=SYNTHETIC_YEARS, help="years per bundle, e.g. 1,5,100")
    cmd.add_argument("--inventory", help="line inventory CSV; the bundled synthetic grid when omitted")
    cmd.add_argument("--lines", type=int, default=SYNTHETIC_LINES, help="lines of the bundled synthetic grid")
    cmd.set_defaults(handler=cmd_synth)

    cmd = commands.add_parser("eval", help="evaluate estimates against a synthetic bundle's true rates")
    cmd.add_argument("--bundle", required=True, help="synthetic bundle directory")
    cmd.add_argument("--samples", help=f"posterior samples, default <out>/{SAMPLES_FILE}")
    cmd.add_argument("--replicates", type=int, default=0, help="refits on regenerated counts")
    cmd.set_defaults(handler=cmd_eval)

    cmd = commands.add_parser("diagnose", help="convergence diagnostics of saved samples")
    cmd.add_argument("--samples", help=f"posterior samples, default <out>/{SAMPLES_FILE}")
    cmd.add_argument("--no-gate", action="store_true", help="exit 0 even when convergence checks fail")
    cmd.set_defaults(handler=cmd_diagnose)
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config, args.secrets) if args.config else RunConfig()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _output_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    out = Path(args.out or config.paths.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Path, command: str) -> Path:
    if not path.exists():
        raise ValidationError(f"{path} is missing; run `outage-rates {command}` first")
    return path


def _input_file(path) -> Path:
    if not Path(path).is_file():
        raise ValidationError(f"Input file {path} does not exist")
    return Path(path)


def _structures(lines: LineTable, config: RunConfig) -> Tuple[Covariates, KernelSet, pd.DataFrame, pd.DataFrame]:
    grid = build_graph(lines)
    distances = distance_matrix(grid, n_workers=config.n_workers)
    covs = covariates(lines)
    kernels = kernel_set(
        district_features(lines), distances, rate=config.kernels.rate, distance_unit=config.kernels.distance_unit
    )
    return covs, kernels, grid.to_edge_list(), distances.to_frame()


def _model(out: Path, config: RunConfig, counts: CountMatrix = None, fit: EmpiricalFit = None) -> ModelSpec:
    counts = counts if counts is not None else CountMatrix.from_csv(_require(out / COUNTS_FILE, "ingest"))
    covs = Covariates.from_csv(_require(out / COVARIATES_FILE, "network"))
    kernels = KernelSet.load(_require(out / KERNELS_FILE, "network"))
    diag = simdiag(
        kernels.sigma1, kernels.sigma2, jitter_start=config.kernels.jitter_start, jitter_max=config.kernels.jitter_max
    )
    return ModelSpec.from_data(counts, covs, kernels, priors=config.priors.calibrated(fit), diag=diag)


def _gate(report: ConvergenceReport, no_gate: bool) -> None:
    if report.passed:
        return
    if no_gate:
        logger.warning(f"Convergence gate ignored: {report.summary()}")
        return
    raise ConvergenceGateError(report.summary(), report=report)


def _write_convergence(out: Path, report: ConvergenceReport) -> None:
    report.to_json(out / "convergence.json")
    report.to_frame().to_csv(out / "diagnostics.csv", index=False, float_format=FLOAT_FORMAT)


def cmd_ingest(args: argparse.Namespace, config: RunConfig) -> int:
    out = _output_dir(args, config)
    source = args.input or config.paths.input
    if source is None:
        raise ConfigError("No outage records given: pass --input or set [paths] input")
    inventory_path = args.inventory or config.paths.inventory
    inventory = read_inventory(_input_file(inventory_path)) if inventory_path else None

    counts, lines, report = ingest(
        _input_file(source), policy=config.ingest.policy(), year_range=config.ingest.year_range, inventory=inventory
    )
    counts.to_csv(out / COUNTS_FILE)
    lines.to_csv(out / LINES_FILE)
    pooled = pooled_statistics(counts)
    write_json(
        out / "ingest_report.json",
        dict(report.to_dict(), policy=config.ingest.policy().to_dict(), pooled=asdict(pooled)),
    )
    print(
        f"{report.records_kept} of {report.records_read} records kept; {counts.n_lines} lines over "
        f"{counts.n_years} year(s); pooled mean {pooled.mean:.3f}, SD {pooled.sd:.3f}"
    )
    return EXIT_SUCCESS


def cmd_network(args: argparse.Namespace, config: RunConfig) -> int:
    out = _output_dir(args, config)
    lines = LineTable.from_csv(_require(out / LINES_FILE, "ingest"))
    covs, kernels, edges, distances = _structures(lines, config)

    edges.to_csv(out / "network_edges.csv", index=False)
    distances.to_csv(out / "distances.csv", float_format="%.10g")
    covs.to_csv(out / COVARIATES_FILE)
    kernels.save(out / KERNELS_FILE, rate=config.kernels.rate, distance_unit=config.kernels.distance_unit)

    correlation = correlation_report(lines.lengths, lines.voltages, covs.x_l, covs.x_v)
    logger.info(
        f"Length/voltage correlation {correlation.raw:.3f} raw, {correlation.transformed:.3f} transformed",
        extra=asdict(correlation),
    )
    return EXIT_SUCCESS


def cmd_fit(args: argparse.Namespace, config: RunConfig) -> int:
    out = _output_dir(args, config)
    counts = CountMatrix.from_csv(_require(out / COUNTS_FILE, "ingest"))
    covs = Covariates.from_csv(_require(out / COVARIATES_FILE, "network"))
    kernels = KernelSet.load(_require(out / KERNELS_FILE, "network"))

    result = fit_empirical(counts, covs, kernels, **config.empirical.fit_kwargs())
    result.fit.to_json(out / FIT_FILE)
    result.residuals.to_csv(out / "residuals.csv")
    fit = result.fit
    print(
        f"m={fit.m:.4f} beta_L={fit.beta_l:.4f} beta_V={fit.beta_v:.4f} "
        f"sigma1^2={fit.sigma1_sq:.4f} sigma2^2={fit.sigma2_sq:.4f} w={fit.w:.4f}"
    )
    return EXIT_SUCCESS


def cmd_sample(args: argparse.Namespace, config: RunConfig) -> int:
    out = _output_dir(args, config)
    fit = EmpiricalFit.from_json(_require(out / FIT_FILE, "fit"))
    spec = _model(out, config, fit=fit)

    samples = run_chains(spec, config.chain_config(), initial=fit)
    samples.save(out / SAMPLES_FILE, run_seed=config.seed, priors=spec.priors.to_dict())
    report = convergence_report(samples, **asdict(config.diagnostics))
    _write_convergence(out, report)
    print(report.summary())
    _gate(report, args.no_gate)
    return EXIT_SUCCESS


def cmd_report(args: argparse.Namespace, config: RunConfig) -> int:
    out = _output_dir(args, config)
    if (args.years is None) != (args.line is None):
        raise ConfigError("A trajectory needs both --years and --line")
    samples = PosteriorSamples.load(_require(out / SAMPLES_FILE, "sample"))
    counts = CountMatrix.from_csv(_require(out / COUNTS_FILE, "ingest"))
    if tuple(samples.line_ids) != tuple(counts.line_ids):
        raise ValidationError("Samples and counts list different lines; rerun `outage-rates sample`")
    if args.line is not None:
        counts.index(args.line)

    estimates = rate_estimates(samples)
    conventional_estimate = conventional(counts)
    comparison = sd_ratio_report(estimates, conventional_estimate)
    write_estimates(out / "estimates.csv", estimates_table(estimates, conventional_estimate, comparison))
    write_estimates(out / "ranked_estimates.csv", rank_by_estimate(estimates))
    comparison.density_frame().to_csv(out / "sd_ratio_density.csv", index=False, float_format=FLOAT_FORMAT)
    hypers = hyperparameter_summary(samples)
    hypers.to_csv(out / "hyperparameters.csv")

    summary = dict(
        estimates=estimates_summary(estimates),
        comparison=comparison.summary(),
        beta_correlation=hypers.beta_correlation,
    )
    if args.sensitivity:
        fit = EmpiricalFit.from_json(_require(out / FIT_FILE, "fit"))
        spec = _model(out, config, counts, fit)
        sensitivity = prior_sensitivity(spec, config.chain_config(), initial=fit, baseline=samples)
        sensitivity.table.to_csv(out / "sensitivity.csv", index=False, float_format=FLOAT_FORMAT)
        summary["sensitivity"] = sensitivity.summary()
    if args.line is not None:
        path = trajectory(
            args.line,
            args.years,
            counts,
            Covariates.from_csv(_require(out / COVARIATES_FILE, "network")),
            KernelSet.load(_require(out / KERNELS_FILE, "network")),
            config=config.chain_config(),
            priors=config.priors,
            fit_kwargs=config.empirical.fit_kwargs(),
        )
        path.to_frame().to_csv(out / f"trajectory_{args.line}.csv", index=False, float_format=FLOAT_FORMAT)
        summary["trajectory"] = path.to_frame().to_dict(orient="list")
    write_json(out / "report.json", summary)

    print(
        f"Median SD(Bayes)/SD(conventional) {comparison.median:.3f} over {int(np.isfinite(comparison.ratios).sum())} "
        f"lines; equivalent to {comparison.equivalent_years:.2f} year(s) of conventional data"
    )
    return EXIT_SUCCESS


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    out = _output_dir(args, config)
    inventory_path = args.inventory or config.paths.inventory
    if inventory_path:
        lines = read_inventory(_input_file(inventory_path))
    else:
        lines = synthetic_inventory(n_lines=args.lines, seed=config.stage_seed("synthetic"))
    covs, kernels, _, _ = _structures(lines, config)

    for n_years in args.years:
        generative = config.generative_config(n_years)
        dataset = generate(generative, covs, kernels)
        bundle = out / f"synthetic_{n_years}y"
        dataset.save(bundle)
        lines.to_csv(bundle / INVENTORY_FILE)
        to_records_frame(dataset, lines, seed=generative.seed).to_csv(bundle / OUTAGES_FILE, index=False)
        covs.to_csv(bundle / COVARIATES_FILE)
        kernels.save(bundle / KERNELS_FILE)
        print(f"{bundle}: {dataset.counts.totals.sum():.0f} outages on {len(lines)} lines over {n_years} year(s)")
    return EXIT_SUCCESS


def _replicate_means(dataset: SyntheticDataset, bundle: Path, config: RunConfig, replicates: int) -> np.ndarray:
    """Posterior mean rates refitted on `replicates` regenerated count matrices."""
    covs = Covariates.from_csv(_require(bundle / COVARIATES_FILE, "synth"))
    kernels = KernelSet.load(_require(bundle / KERNELS_FILE, "synth"))
    diag = simdiag(kernels.sigma1, kernels.sigma2)
    chain_config = config.chain_config()
    seeds = np.random.SeedSequence(config.stage_seed("evaluation")).spawn(replicates)
    means = []
    for b, seed in enumerate(seeds):
        count_seed, chain_seed = (int(s.generate_state(1, np.uint64)[0]) for s in seed.spawn(2))
        counts = regenerate_counts(dataset, count_seed)
        try:
            fit = fit_empirical(counts, covs, kernels, **config.empirical.fit_kwargs()).fit
        except EmptyFitError:
            fit = None
        spec = ModelSpec.from_data(counts, covs, kernels, priors=config.priors.calibrated(fit), diag=diag)
        samples = run_chains(spec, replace(chain_config, seed=chain_seed), initial=fit)
        means.append(posterior_point(samples).mean)
        logger.debug(f"Replicate {b + 1} of {replicates} refitted")
    return np.array(means)


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    out = _output_dir(args, config)
    bundle = Path(args.bundle)
    dataset = SyntheticDataset.load(_require(bundle, "synth"))
    samples = PosteriorSamples.load(_require(Path(args.samples) if args.samples else out / SAMPLES_FILE, "sample"))
    if tuple(samples.line_ids) != tuple(dataset.line_ids):
        raise ValidationError("Samples and synthetic bundle list different lines")
    if args.replicates == 1 or args.replicates < 0:
        raise ConfigError("--replicates must be 0 or at least 2")

    estimates = rate_estimates(samples)
    replicate_means = _replicate_means(dataset, bundle, config, args.replicates) if args.replicates else None
    comparison = compare_estimators(
        dataset, estimates.mean, estimates.sd, estimates.ci_low, estimates.ci_high, replicate_means=replicate_means
    )
    write_json(
        out / "evaluation.json",
        dict(comparison.summary(), bundle=str(bundle), n_years=dataset.config.n_years, replicates=args.replicates),
    )
    pd.concat([report.histogram_frame() for report in comparison.reports.values()], ignore_index=True).to_csv(
        out / "error_histograms.csv", index=False, float_format=FLOAT_FORMAT
    )
    ratios = pd.DataFrame(
        {
            "line_id": list(dataset.line_ids),
            "true_rate": dataset.true_rates,
            "oracle_sd": comparison.oracle_sd,
            "sd_ratio_single_run": comparison.sd_ratio_single_run,
        }
    )
    if comparison.sd_ratio_replicates is not None:
        ratios["sd_ratio_replicates"] = comparison.sd_ratio_replicates
    ratios.to_csv(out / "evaluation_sd_ratios.csv", index=False, float_format=FLOAT_FORMAT)

    for label, report in comparison.reports.items():
        print(f"{label}: bias {report.bias:+.4f}, error SD {report.error_sd:.4f}, coverage {report.coverage:.3f}")
    print(", ".join(f"median SD ratio ({label}) {value:.3f}" for label, value in comparison.median_ratios.items()))
    return EXIT_SUCCESS


def cmd_diagnose(args: argparse.Namespace, config: RunConfig) -> int:
    out = _output_dir(args, config)
    samples = PosteriorSamples.load(_require(Path(args.samples) if args.samples else out / SAMPLES_FILE, "sample"))
    report = convergence_report(samples, **asdict(config.diagnostics))
    _write_convergence(out, report)
    report.acf_frame().to_csv(out / "acf.csv", index=False, float_format=FLOAT_FORMAT)
    traced = [name for name in HYPERPARAMETERS if name not in samples.frozen]
    if traced:
        samples.trace_frame(traced).to_csv(out / "trace.csv", index=False, float_format=FLOAT_FORMAT)
    print(report.summary())
    _gate(report, args.no_gate)
    return EXIT_SUCCESS


def main(argv: Sequence[str] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_file, args.verbose)
    try:
        config = load_run_config(args)
        return args.handler(args, config)
    except ConvergenceGateError:
        return EXIT_GATE
    except ValidationError:
        return EXIT_VALIDATION
    except ErrorException:
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
