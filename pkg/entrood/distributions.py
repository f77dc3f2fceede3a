"""
Ground-truth laws with exact sampling, log-densities and
closed-form entropies and KL divergences where they exist.

All log quantities are in nats. Continuous laws have densities with
respect to the Lebesgue measure, discrete laws (integer codes in [0, K-1])
with respect to the counting measure.
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from loguru import logger
from scipy import linalg
from scipy.special import entr, logsumexp, rel_entr

from entrood.errors import ConfigError, DataError, UnavailableError
from entrood.seeding import GENERATOR_ID, check_seed, concat_draws

LEBESGUE = "lebesgue"
COUNTING = "counting"
MEASURES = (LEBESGUE, COUNTING)

LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class Provenance:
    """ Where a dataset comes from: a description, the root seed
    and the generator family used to draw it. """

    description: str
    seed: Optional[int] = None
    generator: str = GENERATOR_ID

    def chain(self, description: str, seed: Optional[int] = None) -> "Provenance":
        """ Derive the provenance of a dataset built from this one.

        Args:
            description (str): what was done to the parent dataset.
            seed (int): seed of the derived operation, if any.

        Returns:
            (Provenance): the chained provenance.
        """

        return Provenance("{} | {}".format(self.description, description),
                          seed if seed is not None else self.seed, self.generator)


@dataclass(frozen=True, eq=False)
class Dataset:
    """ An immutable n x dim collection of observations.

    Real-valued data is stored as float64, discrete data as integer codes.
    The points array is flagged read-only after construction.
    """

    points: np.ndarray
    measure: str = LEBESGUE
    provenance: Provenance = field(default_factory=lambda: Provenance("unspecified"))
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:

        if self.measure not in MEASURES:
            raise ConfigError("measure must be one of {}, got {!r}".format(MEASURES, self.measure))

        points = np.asarray(self.points)
        if points.ndim != 2:
            logger.error("Datasets must be two-dimensional (n x dim).")
            raise DataError("dataset points must be an n x dim array, got shape {}".format(points.shape))
        if points.shape[1] < 1:
            raise DataError("dataset dimension must be positive")

        if self.measure == LEBESGUE:
            points = np.array(points, dtype=np.float64)
        elif not np.issubdtype(points.dtype, np.integer):
            if points.size and not np.all(np.equal(np.mod(points, 1), 0)):
                raise DataError("counting-measure data must be integer coded")
            points = points.astype(np.int64)
        else:
            points = np.array(points)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

        if self.labels is not None:
            labels = np.array(self.labels)
            if labels.shape != (points.shape[0],):
                raise DataError("expected {} labels, got shape {}".format(points.shape[0], labels.shape))
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def __len__(self) -> int:
        return self.n


class Distribution:
    """ Base class for ground-truth laws.

    Subclasses implement `_log_density` on validated (m, dim) arrays,
    `_draw` from a generator, and optionally `entropy`.
    """

    kind = None
    measure = LEBESGUE

    def __init__(self, dim: int) -> None:

        if int(dim) < 1:
            raise ConfigError("dim must be a positive integer, got {}".format(dim))
        self.dim = int(dim)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """ Log-density of rows of x with respect to the law's measure.

        Args:
            x (array): (m, dim) observations.

        Returns:
            (array): (m,) log-densities in nats, -inf outside the support.
        """

        return self._log_density(self.check_points(x))

    def check_points(self, x: np.ndarray) -> np.ndarray:
        """ Validate observations against this law.

        Args:
            x (array): (m, dim) or (dim,) observations.

        Returns:
            (array): the observations as a float (m, dim) array.

        Raises:
            DataError: on dimension mismatch or non-finite coordinates.
        """

        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2 or x.shape[1] != self.dim:
            logger.error("Dimension mismatch: {} expects {} coordinates.".format(self.describe(), self.dim))
            raise DataError("dimension mismatch: expected {} coordinates, got shape {}".format(
                self.dim, x.shape))
        if not np.all(np.isfinite(x)):
            logger.error("Non-finite coordinates passed to {}.".format(self.describe()))
            raise DataError("observations must have finite coordinates")

        return x

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def entropy(self) -> float:
        """ Closed-form entropy in nats. """

        raise UnavailableError("no closed-form entropy for {}; use "
                               "entrood.estimators.mc_entropy instead".format(self.describe()))

    def params(self) -> Dict[str, Any]:
        raise NotImplementedError

    def to_dict(self) -> Dict[str, Any]:
        """ Serialize to the config schema. """

        return dict(kind=self.kind, dim=self.dim, **self.params())

    def describe(self) -> str:
        """ Short identifier: kind, dimension and a parameter hash. """

        digest = hashlib.blake2b(json.dumps(self.to_dict(), sort_keys=True).encode("utf-8"),
                                 digest_size=4).hexdigest()
        return "{}[d={},{}]".format(self.kind, self.dim, digest)

    def __repr__(self) -> str:
        return self.describe()


class Gaussian(Distribution):
    """ Multivariate normal law, stored through its Cholesky factor. """

    def __init__(self, mean: np.ndarray, cov: np.ndarray, kind: str = "full-gaussian") -> None:
        """ Initialize a Gaussian.

        Args:
            mean (array): (dim,) mean vector.
            cov (array): (dim, dim) symmetric positive definite covariance.
            kind (str): one of isotropic-gaussian, diagonal-gaussian, full-gaussian;
                only affects serialization.
        """

        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        super().__init__(mean.shape[0])

        if cov.shape != (self.dim, self.dim):
            raise ConfigError("covariance shape {} does not match mean dimension {}".format(cov.shape, self.dim))
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ConfigError("Gaussian parameters must be finite")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-12):
            raise ConfigError("covariance matrix must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            logger.error("Cholesky factorization failed, the covariance is not positive definite.")
            raise ConfigError("covariance matrix must be positive definite")

        self.kind = kind
        self.mean = mean
        self.cov = cov
        self.chol = chol
        self.log_det = 2 * np.sum(np.log(np.diag(chol)))
        for a in (self.mean, self.cov, self.chol):
            a.setflags(write=False)

    def _log_density(self, x: np.ndarray) -> np.ndarray:

        z = linalg.solve_triangular(self.chol, (x - self.mean).T, lower=True)
        return -0.5 * (self.dim * LOG_2PI + self.log_det + np.sum(z ** 2, axis=0))

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:

        return self.mean + rng.standard_normal((n, self.dim)) @ self.chol.T

    def entropy(self) -> float:

        return float(0.5 * (self.dim * (LOG_2PI + 1) + self.log_det))

    def params(self) -> Dict[str, Any]:

        if self.kind == "isotropic-gaussian":
            return dict(mean=self.mean.tolist(), variance=float(self.cov[0, 0]))
        if self.kind == "diagonal-gaussian":
            return dict(mean=self.mean.tolist(), variance=np.diag(self.cov).tolist())
        return dict(mean=self.mean.tolist(), covariance=self.cov.tolist())

    def same_params(self, other: "Gaussian") -> bool:

        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)


class GaussianMixture(Distribution):
    """ Finite mixture of Gaussians, log-density by log-sum-exp. """

    kind = "gaussian-mixture"

    def __init__(self, weights: Sequence[float], components: Sequence[Gaussian]) -> None:
        """ Initialize the mixture.

        Args:
            weights (list[float]): non-negative weights summing to 1.
            components (list[Gaussian]): the mixture components.
        """

        weights = np.asarray(weights, dtype=np.float64)
        if len(components) == 0 or weights.shape != (len(components),):
            raise ConfigError("a mixture needs one weight per component")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ConfigError("mixture components must share the same dimension, got {}".format(sorted(dims)))
        if np.any(weights < 0) or abs(weights.sum() - 1) > 1e-12:
            logger.error("Mixture weights must be non-negative and sum to 1.")
            raise ConfigError("mixture weights must be non-negative and sum to 1 (sum={!r})".format(weights.sum()))

        super().__init__(dims.pop())
        self.weights = weights
        self.weights.setflags(write=False)
        self.components = tuple(components)

    def distinct_components(self) -> List[Gaussian]:
        """ Components with positive weight and distinct parameters. """

        distinct = []
        for w, c in zip(self.weights, self.components):
            if w > 0 and not any(c.same_params(d) for d in distinct):
                distinct.append(c)

        return distinct

    def _log_density(self, x: np.ndarray) -> np.ndarray:

        comps = np.stack([c._log_density(x) for c in self.components], axis=1)
        return logsumexp(comps, axis=1, b=self.weights[np.newaxis, :])

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:

        labels = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for j, comp in enumerate(self.components):
            mask = labels == j
            if mask.any():
                out[mask] = comp._draw(rng, int(mask.sum()))

        return out

    def entropy(self) -> float:

        distinct = self.distinct_components()
        if len(distinct) == 1:
            return distinct[0].entropy()

        return super().entropy()

    def params(self) -> Dict[str, Any]:

        return dict(weights=self.weights.tolist(),
                    components=[c.to_dict() for c in self.components])


class UniformBox(Distribution):
    """ Uniform law on an axis-aligned box. """

    kind = "uniform-box"

    def __init__(self, lower: Sequence[float], upper: Sequence[float]) -> None:
        """ Initialize the box.

        Args:
            lower (array): (dim,) lower bounds.
            upper (array): (dim,) upper bounds, strictly greater than lower.
        """

        lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ConfigError("box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ConfigError("box bounds must be finite")
        if np.any(lower >= upper):
            logger.error("Box bounds must satisfy lower < upper in every coordinate.")
            raise ConfigError("box bounds must satisfy lower < upper in every coordinate")

        super().__init__(lower.shape[0])
        self.lower = lower
        self.upper = upper
        self.log_volume = float(np.sum(np.log(upper - lower)))
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    def _log_density(self, x: np.ndarray) -> np.ndarray:

        inside = np.all((x >= self.lower) & (x <= self.upper), axis=1)
        return np.where(inside, -self.log_volume, -np.inf)

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:

        return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))

    def entropy(self) -> float:

        return self.log_volume

    def contains(self, other: "UniformBox") -> bool:

        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def params(self) -> Dict[str, Any]:

        return dict(lower=self.lower.tolist(), upper=self.upper.tolist())


class CategoricalProduct(Distribution):
    """ Independent categorical law per site, codes in [0, K-1]. """

    kind = "categorical-product"
    measure = COUNTING

    def __init__(self, probs: np.ndarray) -> None:
        """ Initialize the product of categoricals.

        Args:
            probs (array): (dim, K) per-site category probabilities.
        """

        probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        if probs.ndim != 2 or probs.shape[1] < 1:
            raise ConfigError("categorical probabilities must be a (dim, K) array")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1) > 1e-12):
            logger.error("Categorical probabilities must be non-negative and sum to 1 per site.")
            raise ConfigError("categorical probabilities must be non-negative and sum to 1 per site")

        super().__init__(probs.shape[0])
        self.probs = probs
        self.n_categories = probs.shape[1]
        with np.errstate(divide="ignore"):
            self.log_probs = np.log(probs)
        self._cdf = np.cumsum(probs, axis=1)
        for a in (self.probs, self.log_probs, self._cdf):
            a.setflags(write=False)

    def _log_density(self, x: np.ndarray) -> np.ndarray:

        valid = (np.mod(x, 1) == 0) & (x >= 0) & (x < self.n_categories)
        codes = np.where(valid, x, 0).astype(np.int64)
        logp = self.log_probs[np.arange(self.dim)[np.newaxis, :], codes]

        return np.where(np.all(valid, axis=1), logp.sum(axis=1), -np.inf)

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:

        u = rng.random((n, self.dim))
        codes = np.empty((n, self.dim), dtype=np.int64)
        for site in range(self.dim):
            codes[:, site] = np.searchsorted(self._cdf[site], u[:, site], side="right")

        return np.minimum(codes, self.n_categories - 1)

    def entropy(self) -> float:

        return float(entr(self.probs).sum())

    def params(self) -> Dict[str, Any]:

        return dict(probs=self.probs.tolist())


def isotropic_gaussian(dim: int, mean: Union[float, Sequence[float]] = 0.0,
                       variance: float = 1.0) -> Gaussian:
    """ N(mean, variance * I). """

    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (int(dim),))
    if not variance > 0:
        raise ConfigError("variance must be positive, got {}".format(variance))

    return Gaussian(mean, float(variance) * np.eye(int(dim)), kind="isotropic-gaussian")


def diagonal_gaussian(mean: Sequence[float], variance: Sequence[float]) -> Gaussian:
    """ N(mean, diag(variance)). """

    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    variance = np.broadcast_to(np.asarray(variance, dtype=np.float64), mean.shape)
    if np.any(variance <= 0):
        raise ConfigError("variances must be positive")

    return Gaussian(mean, np.diag(variance), kind="diagonal-gaussian")


def full_gaussian(mean: Sequence[float], covariance: np.ndarray) -> Gaussian:
    """ N(mean, covariance). """

    return Gaussian(mean, covariance, kind="full-gaussian")


def uniform_box(lower: Union[float, Sequence[float]], upper: Union[float, Sequence[float]],
                dim: Optional[int] = None) -> UniformBox:
    """ Uniform law on [lower, upper], scalars broadcast to dim. """

    if dim is not None:
        lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), (int(dim),))
        upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), (int(dim),))

    return UniformBox(lower, upper)


def categorical_product(probs: np.ndarray, dim: Optional[int] = None) -> CategoricalProduct:
    """ Product of categoricals, a single probability row is repeated over dim sites. """

    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = np.tile(probs, (int(dim) if dim is not None else 1, 1))

    return CategoricalProduct(probs)


_FIELDS = {
    "isotropic-gaussian": ({"dim"}, {"mean", "variance"}),
    "diagonal-gaussian": ({"mean", "variance"}, {"dim"}),
    "full-gaussian": ({"mean", "covariance"}, {"dim"}),
    "gaussian-mixture": ({"weights", "components"}, {"dim"}),
    "uniform-box": ({"lower", "upper"}, {"dim"}),
    "categorical-product": ({"probs"}, {"dim"}),
}

KINDS = tuple(_FIELDS)


def distribution_from_dict(spec: Mapping[str, Any], path: str = "distribution") -> Distribution:
    """ Build a distribution from its config-schema mapping.

    Args:
        spec (dict): mapping with a `kind` key and the kind's parameters.
        path (str): location of the mapping in the config, used in messages.

    Returns:
        (Distribution): the validated law.

    Raises:
        ConfigError: listing every unknown, missing or invalid field.
    """

    if not isinstance(spec, Mapping):
        raise ConfigError("{}: expected a mapping, got {}".format(path, type(spec).__name__))

    kind = spec.get("kind")
    if kind not in _FIELDS:
        raise ConfigError("{}.kind: unknown distribution kind {!r}, expected one of {}".format(
            path, kind, ", ".join(KINDS)))

    required, optional = _FIELDS[kind]
    errors = ["{}.{}: unknown field".format(path, key)
              for key in spec if key != "kind" and key not in required | optional]
    errors += ["{}.{}: required field missing".format(path, key)
               for key in sorted(required) if key not in spec]
    if errors:
        raise ConfigError(errors[0], errors)

    dim = spec.get("dim")
    comps = [distribution_from_dict(c, "{}.components[{}]".format(path, i))
             for i, c in enumerate(spec["components"])] if kind == "gaussian-mixture" else None
    try:
        if kind == "isotropic-gaussian":
            dist = isotropic_gaussian(dim, spec.get("mean", 0.0), spec.get("variance", 1.0))
        elif kind == "diagonal-gaussian":
            dist = diagonal_gaussian(spec["mean"], spec["variance"])
        elif kind == "full-gaussian":
            dist = full_gaussian(spec["mean"], spec["covariance"])
        elif kind == "gaussian-mixture":
            if not all(isinstance(c, Gaussian) for c in comps):
                raise ConfigError("mixture components must be Gaussian")
            dist = GaussianMixture(spec["weights"], comps)
        elif kind == "uniform-box":
            dist = uniform_box(spec["lower"], spec["upper"], dim)
        else:
            dist = categorical_product(spec["probs"], dim)
    except ConfigError as err:
        raise ConfigError("{}: {}".format(path, err), ["{}: {}".format(path, e) for e in err.errors])
    except (TypeError, ValueError) as err:
        raise ConfigError("{}: invalid parameters ({})".format(path, err))

    if dim is not None and dist.dim != int(dim):
        raise ConfigError("{}.dim: declared {} but parameters have dimension {}".format(path, dim, dist.dim))

    return dist


def log_density(dist: Distribution, x: np.ndarray) -> Union[float, np.ndarray]:
    """ Log-density of observations under a law.

    Args:
        dist (Distribution): the law.
        x (array): a single (dim,) observation or (m, dim) rows.

    Returns:
        (float or array): log-density in nats (a float for a single observation).
    """

    single = np.ndim(x) == 1
    values = dist.log_density(x)

    return float(values[0]) if single else values


def sample(dist: Distribution, n: int, seed: int, workers: int = 1) -> Dataset:
    """ Draw n i.i.d. observations.

    Rows are drawn in fixed-size chunks from Philox substreams of the seed,
    so the output does not depend on the number of workers.

    Args:
        dist (Distribution): the law to sample.
        n (int): number of draws.
        seed (int): root seed.
        workers (int): number of threads.

    Returns:
        (Dataset): the draws, with provenance recording the seed.
    """

    if int(n) < 0:
        raise DataError("sample size must be non-negative, got {}".format(n))
    seed = check_seed(seed)

    parts = concat_draws(dist._draw, int(n), seed, workers=workers)
    dtype = np.int64 if dist.measure == COUNTING else np.float64
    points = np.concatenate(parts).astype(dtype) if parts else np.empty((0, dist.dim), dtype=dtype)

    return Dataset(points, dist.measure,
                   Provenance("sample({}, n={})".format(dist.describe(), n), seed))


def analytic_entropy(dist: Distribution) -> float:
    """ Closed-form differential (or Shannon) entropy in nats.

    Raises:
        UnavailableError: for mixtures with more than one distinct component.
    """

    return dist.entropy()


def _reduce(dist: Distribution) -> Distribution:
    """ A mixture with a single distinct component is that component. """

    if isinstance(dist, GaussianMixture):
        distinct = dist.distinct_components()
        if len(distinct) == 1:
            return distinct[0]

    return dist


def _gaussian_kl(p: Gaussian, q: Gaussian) -> float:

    a = linalg.solve_triangular(q.chol, p.chol, lower=True)
    b = linalg.solve_triangular(q.chol, q.mean - p.mean, lower=True)
    kl = 0.5 * (np.sum(a ** 2) + np.sum(b ** 2) - p.dim + q.log_det - p.log_det)

    return max(float(kl), 0.0)


def _uniform_gaussian_kl(p: UniformBox, q: Gaussian) -> float:

    centre = 0.5 * (p.lower + p.upper)
    half_widths = (p.upper - p.lower) / np.sqrt(12)
    a = linalg.solve_triangular(q.chol, np.diag(half_widths), lower=True)
    b = linalg.solve_triangular(q.chol, centre - q.mean, lower=True)
    cross_entropy = 0.5 * (q.dim * LOG_2PI + q.log_det + np.sum(a ** 2) + np.sum(b ** 2))

    return max(float(cross_entropy - p.entropy()), 0.0)


def analytic_kl(p: Distribution, q: Distribution) -> float:
    """ Closed-form KL(p || q) in nats.

    Supported pairs: Gaussian/Gaussian, categorical/categorical,
    uniform box/uniform box, uniform box/Gaussian (and degenerate mixtures
    of these). Returns +inf when the support of p is not contained in the
    support of q.

    Args:
        p (Distribution): first law.
        q (Distribution): second law.

    Returns:
        (float): the divergence, non-negative.

    Raises:
        DataError: on dimension or measure mismatch.
        UnavailableError: for unsupported pairs.
    """

    if p.dim != q.dim or p.measure != q.measure:
        logger.error("KL requires laws on the same space.")
        raise DataError("dimension/measure mismatch: {} vs {}".format(p.describe(), q.describe()))

    p, q = _reduce(p), _reduce(q)

    if isinstance(p, Gaussian) and isinstance(q, Gaussian):
        return _gaussian_kl(p, q)

    if isinstance(p, CategoricalProduct) and isinstance(q, CategoricalProduct):
        if p.n_categories != q.n_categories:
            raise DataError("category counts differ: {} vs {}".format(p.n_categories, q.n_categories))
        return float(rel_entr(p.probs, q.probs).sum())

    if isinstance(p, UniformBox) and isinstance(q, UniformBox):
        return q.log_volume - p.log_volume if q.contains(p) else np.inf

    if isinstance(p, UniformBox) and isinstance(q, Gaussian):
        return _uniform_gaussian_kl(p, q)

    if isinstance(p, Gaussian) and isinstance(q, UniformBox):
        return np.inf

    raise UnavailableError("no closed-form KL between {} and {}; use "
                           "entrood.estimators.mc_kl instead".format(p.describe(), q.describe()))
