from bayesian_outage_rates.sampling.transition_kernel import ParameterBlock, TransitionKernelBase
from bayesian_outage_rates.sampling.metropolis import AdaptiveMetropolisBlock
from bayesian_outage_rates.sampling.langevin import LangevinBlock
from bayesian_outage_rates.sampling.chains import (
    ChainConfig,
    PosteriorSamples,
    default_start,
    draw_rates,
    run_chains,
)
from bayesian_outage_rates.sampling.diagnostics import (
    ConvergenceReport,
    acf,
    convergence_report,
    effective_sample_size,
    rhat,
)
