"""
Monte Carlo and sample-based estimators of entropy, cross-entropy and
KL divergence, each returned with its standard error.
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Union

import numpy as np
from loguru import logger
from scipy.special import digamma, gammaln
from sklearn.neighbors import NearestNeighbors

from entrood.density_models import DensityModel
from entrood.distributions import LEBESGUE, Dataset, Distribution
from entrood.errors import ConfigError, DataError, NumericalError
from entrood.seeding import CHUNK_SIZE, check_seed, chunk_bounds, run_chunks, substream

Density = Union[Distribution, DensityModel]


@dataclass(frozen=True)
class Estimate:
    """ A numerical estimate in nats with its standard error. """

    value: float
    std_error: float
    n: int
    method: str
    support_violation: bool = False

    @classmethod
    def analytic(cls, value: float, n: int = 1) -> "Estimate":
        """ Wrap a closed-form value. """

        return cls(float(value), 0.0, max(int(n), 1), "analytic")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Estimate":
        return cls(**d)


class RunningMoments:
    """ Single-pass mean and variance, merged batch by batch
    with the Chan et al. update. Batches must be fed in a fixed order
    for bit-identical results. """

    def __init__(self) -> None:

        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, values: np.ndarray) -> "RunningMoments":
        """ Merge a batch of values.

        Args:
            values (array): the batch.

        Returns:
            (RunningMoments): self, updated.
        """

        values = np.asarray(values, dtype=np.float64).ravel()
        n_b = values.shape[0]
        if n_b == 0:
            return self

        mean_b = float(values.mean())
        m2_b = float(np.sum((values - mean_b) ** 2))

        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean += delta * n_b / n
        self.m2 += m2_b + delta ** 2 * self.n * n_b / n
        self.n = n

        return self

    def variance(self, ddof: int = 1) -> float:

        if self.n - ddof <= 0:
            return 0.0
        return self.m2 / (self.n - ddof)

    def std_error(self) -> float:

        if self.n < 2:
            return 0.0
        return float(np.sqrt(self.variance() / self.n))


def _check_dims(q: Union[Dataset, Distribution], p: Density) -> None:

    if p.dim is not None and q.dim != p.dim:
        logger.error("Sampler and density live in different dimensions.")
        raise DataError("dimension mismatch: sampler has dim {}, density has dim {}".format(q.dim, p.dim))


def _reduce(parts, n: int, method: str, negate: bool = True) -> Estimate:
    """ Combine per-chunk values into an Estimate. """

    moments = RunningMoments()
    violation = False
    for values in parts:
        if np.any(np.isnan(values)) or np.any(values == np.inf):
            logger.error("Non-finite integrand found in {}.".format(method))
            raise NumericalError("{}: NaN or +inf integrand encountered".format(method))
        if np.any(values == -np.inf):
            violation = True
            continue
        moments.update(values)

    if violation:
        logger.warning("Support violation in {}: a log-density of -inf was encountered.".format(method))
        return Estimate(np.inf, np.inf, n, method, support_violation=True)

    return Estimate(-moments.mean if negate else moments.mean, moments.std_error(), n, method)


def _chunked(q: Union[Dataset, Distribution], integrand, n: Optional[int], seed: Optional[int],
             workers: int):

    if isinstance(q, Dataset):
        if q.n == 0:
            raise DataError("cannot estimate from an empty dataset")
        bounds = chunk_bounds(q.n, CHUNK_SIZE)
        return q.n, run_chunks(lambda i: integrand(q.points[bounds[i].start:bounds[i].stop]),
                               len(bounds), workers)

    if n is None or int(n) < 2:
        logger.error("Monte Carlo estimates need at least two draws.")
        raise DataError("n must be >= 2 when sampling, got {}".format(n))
    if seed is None:
        raise ConfigError("seed required when sampling")
    seed = check_seed(seed)
    bounds = chunk_bounds(int(n), CHUNK_SIZE)

    return int(n), run_chunks(lambda i: integrand(q._draw(substream(seed, i), len(bounds[i]))),
                              len(bounds), workers)


def mc_cross_entropy(q: Union[Distribution, Dataset], p: Density, n: Optional[int] = None,
                     seed: Optional[int] = None, workers: int = 1) -> Estimate:
    """ Cross-entropy -E_q[log p] = KL(q || p) + H[q].

    When q is a Dataset all its points are used and n, seed are ignored;
    otherwise n points are drawn from q in the same chunked substreams
    `distributions.sample` uses.

    Args:
        q (Distribution or Dataset): the sampler.
        p (Distribution or DensityModel): the log-density.
        n (int): number of draws (>= 2) when q is a Distribution.
        seed (int): root seed when q is a Distribution.
        workers (int): number of threads.

    Returns:
        (Estimate): the estimate; +inf with support_violation set when a
            draw falls outside the support of p.
    """

    _check_dims(q, p)
    size, parts = _chunked(q, lambda x: p.log_density(x), n, seed, workers)

    return _reduce(parts, size, "mc-cross-entropy")


def mc_entropy(dist: Distribution, n: int, seed: int, workers: int = 1) -> Estimate:
    """ Plug-in Monte Carlo entropy -E[log dist(X)], X ~ dist. """

    est = mc_cross_entropy(dist, dist, n, seed, workers)

    return Estimate(est.value, est.std_error, est.n, "mc-entropy", est.support_violation)


def mc_kl(q: Distribution, p: Density, n: int, seed: int, workers: int = 1) -> Estimate:
    """ Monte Carlo KL(q || p) = E_q[log q(Y) - log p(Y)].

    Args:
        q (Distribution): the sampling law, with its own log-density.
        p (Distribution or DensityModel): the second density.
        n (int): number of draws.
        seed (int): root seed.
        workers (int): number of threads.

    Returns:
        (Estimate): the estimate, +inf flagged on support violations.
    """

    if not isinstance(q, Distribution):
        raise DataError("mc_kl needs a law with a log-density as first argument")
    _check_dims(q, p)

    def integrand(x: np.ndarray) -> np.ndarray:
        lp = p.log_density(x)
        with np.errstate(invalid="ignore"):
            return np.where(lp == -np.inf, -np.inf, lp - q.log_density(x))

    size, parts = _chunked(q, integrand, n, seed, workers)

    return _reduce(parts, size, "mc-kl")


def unit_ball_log_volume(dim: int) -> float:
    """ ln V_d, the log-volume of the Euclidean unit ball. """

    return float(0.5 * dim * np.log(np.pi) - gammaln(0.5 * dim + 1))


def knn_entropy(data: Dataset, k: int = 3, seed: int = 0, n_bootstrap: int = 200,
                algorithm: str = "brute", workers: int = 1) -> Estimate:
    """ Kozachenko-Leonenko k-nearest-neighbor differential entropy,

        H = psi(n) - psi(k) + ln V_d + (d / n) sum_i ln eps_i

    with eps_i the distance from point i to its k-th neighbor.
    The standard error is a bootstrap over the per-point log-distance terms.
    Duplicate points are jittered by 1e-10 times the data scale.

    Args:
        data (Dataset): real-valued data, n > k.
        k (int): neighbor order.
        seed (int): seed for the jitter and the bootstrap.
        n_bootstrap (int): number of bootstrap resamples, >= 2.
        algorithm (str): neighbor search, "brute" (exact) or a scikit-learn tree.
        workers (int): parallel jobs for the neighbor search.

    Returns:
        (Estimate): the entropy estimate in nats.
    """

    if data.measure != LEBESGUE:
        raise DataError("knn_entropy requires lebesgue-measure data")
    if int(k) < 1:
        raise ConfigError("k must be >= 1, got {}".format(k))
    if data.n <= int(k):
        logger.error("Not enough points for the k-nearest-neighbor estimate.")
        raise DataError("knn_entropy needs n > k, got n={} k={}".format(data.n, k))
    if int(n_bootstrap) < 2:
        raise ConfigError("n_bootstrap must be >= 2")
    if algorithm not in ("brute", "kd_tree", "ball_tree"):
        raise ConfigError("unknown neighbor search algorithm {!r}".format(algorithm))
    k, n, d = int(k), data.n, data.dim
    seed = check_seed(seed)

    x = np.array(data.points, dtype=np.float64)
    method = "knn-kl(k={})".format(k)
    if np.unique(x, axis=0).shape[0] < n:
        scale = float(np.max(np.abs(x))) or 1.0
        logger.warning("Duplicate points found, jittering by {:.1e}.".format(1e-10 * scale))
        x += 1e-10 * scale * substream(seed, 0).uniform(-1.0, 1.0, size=x.shape)
        method += "+jitter"

    search = NearestNeighbors(n_neighbors=k, algorithm=algorithm,
                              n_jobs=None if workers == 1 else workers).fit(x)
    distances, _ = search.kneighbors()
    eps = distances[:, -1]
    if np.any(eps <= 0):
        raise NumericalError("zero neighbor distance in knn_entropy")

    terms = d * np.log(eps)
    const = digamma(n) - digamma(k) + unit_ball_log_volume(d)
    value = float(const + terms.mean())

    rng = substream(seed, 1)
    boot = np.array([terms[rng.integers(0, n, n)].mean() for _ in range(int(n_bootstrap))])

    logger.debug("k-NN entropy on {:d} points in {:d} dimensions: {:.6f}.".format(n, d, value))

    return Estimate(value, float(np.std(boot, ddof=1)), n, method)
