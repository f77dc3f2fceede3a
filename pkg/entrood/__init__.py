"""
entrood v1.0.0

Entropy-aware diagnostics for likelihood-based out-of-distribution detection:
likelihood decomposition ledgers, contrast statistics with Chebyshev bounds,
likelihood, likelihood-ratio and typicality detectors.
"""

import sys

from loguru import logger

from entrood._version import __version__


def set_verbosity(debug: bool = False) -> None:
    """ Set the logging level printed to screen.

    Args:
        debug (bool): print debug messages if True, info and above otherwise.
    """

    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if debug else "INFO")


from entrood.distributions import Dataset, analytic_entropy, analytic_kl, log_density, sample  # noqa: E402
from entrood.density_models import exact_model, fit_gaussian, fit_gmm_em, load_model, save_model  # noqa: E402
from entrood.estimators import Estimate, knn_entropy, mc_cross_entropy, mc_entropy, mc_kl  # noqa: E402
from entrood.analysis import chebyshev_bound, contrast_stats, decomposition_ledger  # noqa: E402
from entrood.detectors import evaluate_detector, score_likelihood, score_likelihood_ratio  # noqa: E402
from entrood.experiment import parse_config, run_experiment  # noqa: E402
