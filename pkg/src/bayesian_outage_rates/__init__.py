from bayesian_outage_rates.ingest import CountMatrix, LineTable, FilterPolicy, ingest
from bayesian_outage_rates.network import build_graph, distance_matrix
from bayesian_outage_rates.features import covariates, district_features
from bayesian_outage_rates.kernels import KernelSet, SimDiag, kernel_set, simdiag
from bayesian_outage_rates.empirical import EmpiricalFit, fit_empirical
from bayesian_outage_rates.bayes import ModelSpec, ParameterState, PriorSpec
from bayesian_outage_rates.sampling import (
    ChainConfig,
    PosteriorSamples,
    convergence_report,
    run_chains,
)
from bayesian_outage_rates.inference import conventional, rate_estimates, sd_ratio_report
from bayesian_outage_rates.synthetic import GenerativeConfig, SyntheticDataset, generate
from bayesian_outage_rates.config import RunConfig
