"""
Likelihood accounting: the decomposition of the average log-likelihood
into KL and entropy terms, and the statistics of the contrast
Z = log p(Y) - log p(X) between out- and in-distribution draws,
with the Chebyshev bound on P(Z > 0).
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import linalg

from entrood.density_models import DensityModel
from entrood.distributions import Dataset, Distribution, Gaussian, _reduce, analytic_entropy, analytic_kl, sample
from entrood.errors import ConfigError, DataError, NumericalError, UnavailableError
from entrood.estimators import Estimate, RunningMoments, mc_cross_entropy, mc_entropy, mc_kl
from entrood.seeding import CHUNK_SIZE, chunk_bounds, derive_seed, map_chunks

LN2 = np.log(2)


def bits_per_dim(nll_nats: float, dim: int) -> float:
    """ Convert a negative log-likelihood in nats to bits per dimension.

    Args:
        nll_nats (float): negative log-likelihood (cross-entropy) in nats.
        dim (int): data dimension.

    Returns:
        (float): nll / (dim * ln 2).
    """

    if int(dim) < 1:
        raise ConfigError("dim must be positive")

    return float(nll_nats / (int(dim) * LN2))


@dataclass(frozen=True)
class DecompositionLedger:
    """ avg_log_likelihood = -(kl_term + entropy_term) + residual.

    kl_term, entropy_term and residual are None for datasets with
    unknown law (empirical ledgers).
    """

    avg_log_likelihood: Estimate
    kl_term: Optional[Estimate]
    entropy_term: Optional[Estimate]
    residual: Optional[float]
    data_dist_id: str
    model_id: str
    n: int
    dim: int
    bits_per_dim: float

    def to_dict(self) -> Dict[str, Any]:

        out = asdict(self)
        for key in ("avg_log_likelihood", "kl_term", "entropy_term"):
            value = getattr(self, key)
            out[key] = value.to_dict() if value is not None else None
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "DecompositionLedger":

        d = dict(d)
        for key in ("avg_log_likelihood", "kl_term", "entropy_term"):
            d[key] = Estimate.from_dict(d[key]) if d.get(key) is not None else None
        return cls(**d)


@dataclass(frozen=True)
class ContrastStats:
    """ Moments of the contrast Z and the Chebyshev bound on P(Z > 0).

    mu and sigma2 are plug-in estimates from the same pairs used for the
    empirical frequency, so the bound is a plug-in bound.
    """

    mu: float
    sigma2: float
    chebyshev_bound: Optional[float]
    empirical_p_z_gt_0: Estimate
    n_pairs: int
    n_excluded: int = 0
    sigma2_over_mu2: Optional[float] = None
    vacuous: bool = True

    def to_dict(self) -> Dict[str, Any]:

        out = asdict(self)
        out["empirical_p_z_gt_0"] = self.empirical_p_z_gt_0.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ContrastStats":

        d = dict(d)
        d["empirical_p_z_gt_0"] = Estimate.from_dict(d["empirical_p_z_gt_0"])
        return cls(**d)


def chebyshev_bound(mu: float, sigma2: float) -> Optional[float]:
    """ Lower bound 1 - sigma2 / mu^2 on P(Z > 0), valid when mu > 0.

    Args:
        mu (float): mean of Z.
        sigma2 (float): variance of Z, positive.

    Returns:
        (float or None): the bound, None when mu <= 0. Values <= 0 are vacuous.
    """

    if not np.isfinite(sigma2) or sigma2 <= 0:
        logger.error("The variance of the contrast must be finite and positive.")
        raise ConfigError("sigma2 must be finite and > 0, got {}".format(sigma2))
    if not mu > 0:
        return None

    return float(1.0 - sigma2 / mu ** 2)


def _ledger_avg(avg: Estimate) -> Estimate:

    return Estimate(-avg.value, avg.std_error, avg.n, "mc-avg-log-likelihood", avg.support_violation)


def decomposition_ledger(data_dist: Distribution, model: DensityModel, n: int, seed: int,
                         workers: int = 1) -> DecompositionLedger:
    """ Decompose the average log-likelihood of model on data from data_dist
    into -KL(data_dist || model) - H[data_dist] + residual.

    The average log-likelihood is always a Monte Carlo estimate; the KL and
    entropy terms are closed-form when available and Monte Carlo otherwise,
    each from its own derived seed.

    Args:
        data_dist (Distribution): the data law.
        model (DensityModel): a normalized model.
        n (int): Monte Carlo sample size.
        seed (int): root seed.
        workers (int): number of threads.

    Returns:
        (DecompositionLedger): the ledger.
    """

    if not model.normalized:
        logger.error("Ledgers need normalized densities, {} is a score.".format(model.describe()))
        raise ConfigError("proxy has no normalized density: {}".format(model.describe()))
    if data_dist.dim != model.dim or data_dist.measure != model.measure:
        raise DataError("dimension/measure mismatch: {} vs {}".format(data_dist.describe(), model.describe()))

    avg = _ledger_avg(mc_cross_entropy(data_dist, model, n, derive_seed(seed, "ledger/avg_ll"), workers))

    try:
        entropy = Estimate.analytic(analytic_entropy(data_dist), n)
    except UnavailableError:
        entropy = mc_entropy(data_dist, n, derive_seed(seed, "ledger/entropy"), workers)

    kl = None
    model_dist = model.as_distribution()
    if model_dist is not None:
        try:
            value = analytic_kl(data_dist, model_dist)
            kl = Estimate(value, 0.0, n, "analytic", support_violation=bool(np.isinf(value)))
        except UnavailableError:
            pass
    if kl is None:
        kl = mc_kl(data_dist, model, n, derive_seed(seed, "ledger/kl"), workers)

    if kl.support_violation or avg.support_violation:
        logger.warning("Support violation: {} puts mass where {} has none.".format(
            data_dist.describe(), model.describe()))
        residual = float("nan")
    else:
        residual = float(avg.value + kl.value + entropy.value)

    ledger = DecompositionLedger(avg, kl, entropy, residual, data_dist.describe(), model.describe(), int(n),
                                 data_dist.dim, bits_per_dim(-avg.value, data_dist.dim))
    logger.info("Ledger {} under {}: avg_ll={:.6f}, KL={:.6f}, H={:.6f}, residual={:.2e}.".format(
        ledger.data_dist_id, ledger.model_id, avg.value, kl.value, entropy.value, residual))

    return ledger


def empirical_ledger(data: Dataset, model: DensityModel, label: str = "data",
                     workers: int = 1) -> DecompositionLedger:
    """ Ledger for a dataset whose law is unknown: average log-likelihood
    and bits per dimension only.

    Args:
        data (Dataset): the evaluation data.
        model (DensityModel): a normalized model.
        label (str): identifier of the dataset.
        workers (int): number of threads.

    Returns:
        (DecompositionLedger): the ledger, with kl_term and entropy_term None.
    """

    if not model.normalized:
        raise ConfigError("proxy has no normalized density: {}".format(model.describe()))

    avg = _ledger_avg(mc_cross_entropy(data, model, workers=workers))

    return DecompositionLedger(avg, None, None, None, label, model.describe(), data.n, data.dim,
                               bits_per_dim(-avg.value, data.dim))


def contrast_from_log_likelihoods(lx: np.ndarray, ly: np.ndarray) -> ContrastStats:
    """ Contrast statistics from paired log-likelihoods.

    Pairs where either value is non-finite are excluded and counted.

    Args:
        lx (array): log p(X_i) for in-distribution draws.
        ly (array): log p(Y_i) for out-of-distribution draws.

    Returns:
        (ContrastStats): mu, sigma2, the bound and the empirical P(Z > 0).
    """

    lx, ly = np.asarray(lx, dtype=np.float64), np.asarray(ly, dtype=np.float64)
    if lx.shape != ly.shape or lx.ndim != 1:
        raise DataError("paired log-likelihoods must be 1-D arrays of equal length")

    finite = np.isfinite(lx) & np.isfinite(ly)
    n_excluded = int(np.sum(~finite))
    if n_excluded:
        logger.warning("{:d} of {:d} pairs have non-finite log-likelihoods and are excluded.".format(
            n_excluded, lx.shape[0]))
    lx, ly = lx[finite], ly[finite]
    m = lx.shape[0]
    if m < 2:
        logger.error("Fewer than two usable pairs.")
        raise NumericalError("contrast statistics need at least two finite pairs, got {}".format(m))

    mx, my = RunningMoments(), RunningMoments()
    for b in chunk_bounds(m, CHUNK_SIZE):
        mx.update(lx[b.start:b.stop])
        my.update(ly[b.start:b.stop])

    mu = float(my.mean - mx.mean)
    sigma2 = float(mx.variance() + my.variance())

    p_hat = float(np.mean(ly - lx > 0))
    empirical = Estimate(p_hat, float(np.sqrt(p_hat * (1 - p_hat) / m)), m, "empirical-binomial")

    bound = None
    if sigma2 > 0:
        bound = chebyshev_bound(mu, sigma2)
    else:
        logger.warning("Contrast variance is not positive, the Chebyshev bound is undefined.")
    vacuous = bound is None or bound <= 0
    if bound is not None and bound <= 0:
        logger.warning("Chebyshev bound {:.4f} is vacuous (sigma2/mu^2 >= 1).".format(bound))

    return ContrastStats(mu, sigma2, bound, empirical, m, n_excluded,
                         float(sigma2 / mu ** 2) if mu != 0 else None, vacuous)


def contrast_stats(p: Distribution, q: Distribution, model: DensityModel, n_pairs: int, seed: int,
                   workers: int = 1) -> ContrastStats:
    """ Draw n_pairs independent pairs X ~ p, Y ~ q and summarize
    Z = log model(Y) - log model(X).

    Args:
        p (Distribution): in-distribution law.
        q (Distribution): out-of-distribution law.
        model (DensityModel): the model scoring both.
        n_pairs (int): number of pairs, >= 2.
        seed (int): root seed.
        workers (int): number of threads.

    Returns:
        (ContrastStats): the contrast statistics.
    """

    if p.dim != q.dim or (model.dim is not None and model.dim != p.dim):
        raise DataError("dimension mismatch between {}, {} and {}".format(p.describe(), q.describe(),
                                                                          model.describe()))
    if int(n_pairs) < 2:
        raise DataError("n_pairs must be >= 2, got {}".format(n_pairs))

    x = sample(p, n_pairs, derive_seed(seed, "contrast/x"), workers)
    y = sample(q, n_pairs, derive_seed(seed, "contrast/y"), workers)

    stats = contrast_from_log_likelihoods(map_chunks(model.log_density, x.points, workers),
                                          map_chunks(model.log_density, y.points, workers))
    logger.info("Contrast over {:d} pairs: mu={:.6f}, sigma2={:.6f}, bound={}, P(Z>0)={:.4f}.".format(
        stats.n_pairs, stats.mu, stats.sigma2, stats.chebyshev_bound, stats.empirical_p_z_gt_0.value))

    return stats


def _gaussian_log_density_moments(data: Gaussian, model: Gaussian) -> Tuple[float, float]:
    """ Mean and variance of log model(X) for X ~ data. """

    precision = linalg.cho_solve((model.chol, True), np.eye(model.dim))
    shift = data.mean - model.mean
    a_s = precision @ data.cov

    mean = -0.5 * (model.dim * np.log(2 * np.pi) + model.log_det + np.trace(a_s) + shift @ precision @ shift)
    var = 0.5 * np.sum(a_s * a_s.T) + shift @ a_s @ precision @ shift

    return float(mean), float(var)


def gaussian_contrast_moments(p: Distribution, q: Distribution, model_dist: Distribution) -> Tuple[float, float]:
    """ Exact (mu, sigma2) of Z for Gaussian p, q and Gaussian model.

    Args:
        p (Distribution): in-distribution Gaussian.
        q (Distribution): out-of-distribution Gaussian.
        model_dist (Distribution): the model's Gaussian law.

    Returns:
        (tuple[float, float]): the true mean and variance of Z.
    """

    p, q, model_dist = _reduce(p), _reduce(q), _reduce(model_dist)
    if not all(isinstance(d, Gaussian) for d in (p, q, model_dist)):
        raise UnavailableError("exact contrast moments need Gaussian laws")
    if not p.dim == q.dim == model_dist.dim:
        raise DataError("dimension mismatch")

    mean_x, var_x = _gaussian_log_density_moments(p, model_dist)
    mean_y, var_y = _gaussian_log_density_moments(q, model_dist)

    return mean_y - mean_x, var_x + var_y
