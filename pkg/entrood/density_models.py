"""
Density models: exact wrappers of ground-truth laws, classical fitted
estimators (Gaussian MLE, EM-fitted mixtures, histograms, per-pixel
categoricals) and compression-based pseudo-densities.

Every model exposes the same contract, `log_density(x)` in nats.
"""

import bz2
import hashlib
import io
import json
import lzma
import platform
import zlib
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from entrood.distributions import (COUNTING, LEBESGUE, CategoricalProduct, Dataset, Distribution,
                                   Gaussian, GaussianMixture, distribution_from_dict, full_gaussian)
from entrood.early_stop import EarlyStop
from entrood.errors import ConfigError, DataError, NumericalError, UnavailableError
from entrood.seeding import check_seed, substream

FORMAT_VERSION = 1

LN2 = np.log(2)


@dataclass(frozen=True)
class FitMeta:
    """ Record of how a model was fitted. """

    provenance: str = "not fitted"
    n_train: int = 0
    iterations: int = 0
    train_log_likelihood: Optional[float] = None
    trajectory: Tuple[float, ...] = ()
    converged: bool = True
    reseeds: Tuple[int, ...] = ()

    def to_dict(self) -> Dict[str, Any]:

        out = asdict(self)
        out["trajectory"] = list(self.trajectory)
        out["reseeds"] = list(self.reseeds)
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "FitMeta":

        d = dict(d)
        d["trajectory"] = tuple(d.get("trajectory", ()))
        d["reseeds"] = tuple(d.get("reseeds", ()))
        return cls(**d)


class DensityModel:
    """ Base class for models P_theta and references R_phi. """

    kind = None
    normalized = True

    def __init__(self, dim: Optional[int], measure: str = LEBESGUE,
                 fit_meta: Optional[FitMeta] = None) -> None:

        self.dim = None if dim is None else int(dim)
        self.measure = measure
        self.fit_meta = fit_meta if fit_meta is not None else FitMeta()

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """ Log-density (or pseudo log-density) of rows of x, in nats.

        Args:
            x (array): (m, dim) observations.

        Returns:
            (array): (m,) values.
        """

        return self._log_density(self._check(x))

    def _check(self, x: np.ndarray) -> np.ndarray:

        x = np.asarray(x)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2 or (self.dim is not None and x.shape[1] != self.dim):
            logger.error("Dimension mismatch: {} expects {} coordinates.".format(self.describe(), self.dim))
            raise DataError("dimension mismatch: model expects {} coordinates, got shape {}".format(
                self.dim, x.shape))
        if np.issubdtype(x.dtype, np.floating) and not np.all(np.isfinite(x)):
            raise DataError("observations must have finite coordinates")

        return x

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def as_distribution(self) -> Optional[Distribution]:
        """ The equivalent ground-truth law, when the model is one. """

        return None

    def entropy(self) -> float:
        """ Closed-form model entropy in nats. """

        dist = self.as_distribution()
        if dist is None:
            raise UnavailableError("no closed-form entropy for model {}".format(self.describe()))

        return dist.entropy()

    def arrays(self) -> Dict[str, np.ndarray]:
        """ Fitted parameters, as saved to disk. """

        return {}

    def meta(self) -> Dict[str, Any]:
        """ Non-array description, as saved to disk. """

        return dict(format_version=FORMAT_VERSION, kind=self.kind, dim=self.dim,
                    measure=self.measure, fit_meta=self.fit_meta.to_dict())

    def describe(self) -> str:
        """ Model identifier: kind, dimension and a parameter hash. """

        h = hashlib.blake2b(digest_size=4)
        h.update(json.dumps(self.meta(), sort_keys=True).encode("utf-8"))
        for key in sorted(self.arrays()):
            h.update(np.ascontiguousarray(self.arrays()[key]).tobytes())

        return "{}[d={},{}]".format(self.kind, self.dim, h.hexdigest())

    def __repr__(self) -> str:
        return self.describe()


class ExactModel(DensityModel):
    """ A model that is the data law itself: the perfect-model case. """

    kind = "exact"

    def __init__(self, dist: Distribution) -> None:

        super().__init__(dist.dim, dist.measure, FitMeta(provenance="exact"))
        self.dist = dist

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        return self.dist.log_density(x)

    def as_distribution(self) -> Distribution:
        return self.dist

    def meta(self) -> Dict[str, Any]:

        out = super().meta()
        out["distribution"] = self.dist.to_dict()
        return out

    def describe(self) -> str:
        return "exact({})".format(self.dist.describe())


class GaussianModel(DensityModel):
    """ Full-covariance Gaussian fitted by maximum likelihood. """

    kind = "gaussian-mle"

    def __init__(self, mean: np.ndarray, cov: np.ndarray, fit_meta: Optional[FitMeta] = None) -> None:

        try:
            self.dist = full_gaussian(mean, cov)
        except ConfigError as err:
            logger.error("The fitted covariance is not positive definite, consider a larger ridge.")
            raise NumericalError("{}; increase the ridge".format(err))
        super().__init__(self.dist.dim, LEBESGUE, fit_meta)

    @property
    def mean(self) -> np.ndarray:
        return self.dist.mean

    @property
    def cov(self) -> np.ndarray:
        return self.dist.cov

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        return self.dist.log_density(x)

    def as_distribution(self) -> Distribution:
        return self.dist

    def arrays(self) -> Dict[str, np.ndarray]:
        return dict(mean=self.mean, cov=self.cov)


class GMMModel(DensityModel):
    """ Gaussian mixture fitted by expectation-maximization. """

    kind = "gmm-em"

    def __init__(self, weights: np.ndarray, means: np.ndarray, covs: np.ndarray,
                 fit_meta: Optional[FitMeta] = None) -> None:

        try:
            comps = [full_gaussian(m, c) for m, c in zip(means, covs)]
            self.dist = GaussianMixture(weights, comps)
        except ConfigError as err:
            raise NumericalError("invalid mixture parameters: {}".format(err))
        super().__init__(self.dist.dim, LEBESGUE, fit_meta)

    @property
    def weights(self) -> np.ndarray:
        return self.dist.weights

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.dist.components])

    @property
    def covs(self) -> np.ndarray:
        return np.stack([c.cov for c in self.dist.components])

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        return self.dist.log_density(x)

    def as_distribution(self) -> Distribution:
        return self.dist

    def arrays(self) -> Dict[str, np.ndarray]:
        return dict(weights=self.weights, means=self.means, covs=self.covs)


class HistogramModel(DensityModel):
    """ Piecewise-constant density on a regular grid.

    Points outside the grid are evaluated in the nearest edge bin.
    """

    kind = "histogram"

    def __init__(self, edges: np.ndarray, log_probs: np.ndarray, fit_meta: Optional[FitMeta] = None) -> None:

        self.edges = np.atleast_2d(np.asarray(edges, dtype=np.float64))
        self.log_probs = np.asarray(log_probs, dtype=np.float64)
        super().__init__(self.edges.shape[0], LEBESGUE, fit_meta)

        self.bins = self.edges.shape[1] - 1
        widths = np.diff(self.edges, axis=1)
        volumes = widths[0]
        for w in widths[1:]:
            volumes = np.multiply.outer(volumes, w)
        self.log_density_grid = self.log_probs - np.log(volumes)

    def bin_index(self, x: np.ndarray) -> Tuple[np.ndarray, ...]:
        """ Grid index of each row, clamped to the edge bins. """

        return tuple(np.clip(np.searchsorted(self.edges[j], x[:, j], side="right") - 1, 0, self.bins - 1)
                     for j in range(self.dim))

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        return self.log_density_grid[self.bin_index(x.astype(np.float64))]

    def arrays(self) -> Dict[str, np.ndarray]:
        return dict(edges=self.edges, log_probs=self.log_probs)


class PixelCategoricalModel(DensityModel):
    """ Independent Laplace-smoothed categorical per site (pixel). """

    kind = "pixel-categorical"

    def __init__(self, probs: np.ndarray, fit_meta: Optional[FitMeta] = None) -> None:

        try:
            self.dist = CategoricalProduct(probs)
        except ConfigError as err:
            raise NumericalError("invalid categorical parameters: {}".format(err))
        super().__init__(self.dist.dim, COUNTING, fit_meta)

    @property
    def probs(self) -> np.ndarray:
        return self.dist.probs

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        return self.dist.log_density(x)

    def as_distribution(self) -> Distribution:
        return self.dist

    def arrays(self) -> Dict[str, np.ndarray]:
        return dict(probs=self.probs)


def _png_compress(row: np.ndarray, level: int, shape: Tuple[int, int]) -> bytes:

    from PIL import Image

    buffer = io.BytesIO()
    Image.fromarray(row.reshape(shape).astype(np.uint8)).save(
        buffer, format="PNG", compress_level=level, optimize=False)

    return buffer.getvalue()


CODECS = {
    "zlib": (range(0, 10), lambda b, level, shape: zlib.compress(b, level)),
    "bz2": (range(1, 10), lambda b, level, shape: bz2.compress(b, compresslevel=level)),
    "lzma": (range(0, 10), lambda b, level, shape: lzma.compress(b, preset=level)),
    "png": (range(0, 10), None),
}


def codec_version(codec: str) -> str:
    """ Version string of the codec build, pinned in serialized models. """

    if codec in ("zlib",):
        return "zlib-{}".format(zlib.ZLIB_RUNTIME_VERSION)
    if codec == "png":
        import PIL
        return "pillow-{}/zlib-{}".format(PIL.__version__, zlib.ZLIB_RUNTIME_VERSION)

    return "python-{}".format(platform.python_version())


class CompressorModel(DensityModel):
    """ Pseudo log-density from a lossless codec:
    log r(y) = -(compressed length of y in bits) * ln 2.

    This is a score, not a normalized density.
    """

    kind = "compressor-proxy"
    normalized = False

    def __init__(self, codec: str = "zlib", level: int = 9, dim: Optional[int] = None,
                 image_shape: Optional[Sequence[int]] = None) -> None:

        if codec not in CODECS:
            logger.error("Unknown codec {}, choose among {}.".format(codec, ", ".join(CODECS)))
            raise ConfigError("unknown codec {!r}, expected one of {}".format(codec, ", ".join(CODECS)))
        if int(level) not in CODECS[codec][0]:
            raise ConfigError("level {} not valid for codec {}".format(level, codec))
        if image_shape is not None:
            image_shape = tuple(int(s) for s in image_shape)
            if dim is not None and image_shape[0] * image_shape[1] != int(dim):
                raise ConfigError("image shape {} does not match dim {}".format(image_shape, dim))
            dim = image_shape[0] * image_shape[1]

        super().__init__(dim, COUNTING if codec == "png" else LEBESGUE,
                         FitMeta(provenance="codec {}".format(codec_version(codec))))
        self.codec = codec
        self.level = int(level)
        self.image_shape = image_shape

    def encode(self, row: np.ndarray) -> bytes:
        """ Compress a single observation. """

        integral = np.all(np.mod(row, 1) == 0) and row.min(initial=0) >= 0 and row.max(initial=0) <= 255
        if self.codec == "png":
            if not integral:
                raise DataError("the png codec needs integer pixel values in [0, 255]")
            return _png_compress(row, self.level, self.image_shape or (1, row.shape[0]))

        raw = row.astype(np.uint8).tobytes() if integral else row.astype(np.float64).tobytes()
        return CODECS[self.codec][1](raw, self.level, None)

    def code_length_bits(self, x: np.ndarray) -> np.ndarray:
        """ Compressed length of each row, in bits. """

        return np.array([8 * len(self.encode(row)) for row in self._check(x)], dtype=np.float64)

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        return -self.code_length_bits(x) * LN2

    def meta(self) -> Dict[str, Any]:

        out = super().meta()
        out["codec"] = dict(identifier=self.codec, level=self.level, version=codec_version(self.codec),
                            image_shape=list(self.image_shape) if self.image_shape else None)
        return out


def model_log_density(model: DensityModel, x: np.ndarray) -> Union[float, np.ndarray]:
    """ Log-density of observations under a model.

    Args:
        model (DensityModel): the model.
        x (array): a single (dim,) observation or (m, dim) rows.

    Returns:
        (float or array): log-density in nats (pseudo log-density for
            compressor proxies).
    """

    single = np.ndim(x) == 1
    values = model.log_density(x)

    return float(values[0]) if single else values


def exact_model(dist: Distribution) -> ExactModel:
    """ Wrap a ground-truth law as a model. """

    return ExactModel(dist)


def _require_lebesgue(data: Dataset, what: str) -> np.ndarray:

    if data.measure != LEBESGUE:
        logger.error("{} needs real-valued data.".format(what))
        raise DataError("{} requires lebesgue-measure data".format(what))

    return np.asarray(data.points, dtype=np.float64)


def fit_gaussian(data: Dataset, ridge: float = 0.0) -> GaussianModel:
    """ Maximum-likelihood Gaussian.

    The covariance uses the population convention (divide by n),
    plus ridge * I.

    Args:
        data (Dataset): at least two real-valued observations.
        ridge (float): non-negative diagonal regularization.

    Returns:
        (GaussianModel): the fitted model.

    Raises:
        DataError: if fewer than two points are provided.
        NumericalError: if the covariance is not positive definite.
    """

    x = _require_lebesgue(data, "fit_gaussian")
    if data.n < 2:
        logger.error("At least two points are needed to fit a Gaussian.")
        raise DataError("fit_gaussian needs n >= 2, got {}".format(data.n))
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")

    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / data.n
    cov = 0.5 * (cov + cov.T) + ridge * np.eye(data.dim)

    model = GaussianModel(mean, cov)
    ll = float(model.log_density(x).mean())
    model.fit_meta = FitMeta(provenance=data.provenance.description, n_train=data.n,
                             iterations=1, train_log_likelihood=ll, trajectory=(ll,))
    logger.info("Gaussian fitted on {:d} points, train log-likelihood {:.6f}.".format(data.n, ll))

    return model


def _component_log_probs(x: np.ndarray, weights: np.ndarray, means: np.ndarray,
                         covs: np.ndarray) -> np.ndarray:

    out = np.empty((x.shape[0], len(weights)))
    for j in range(len(weights)):
        try:
            comp = Gaussian(means[j], covs[j])
        except ConfigError:
            logger.error("Mixture component {:d} lost positive definiteness.".format(j))
            raise NumericalError("component {} covariance is not positive definite; increase the ridge".format(j))
        with np.errstate(divide="ignore"):
            out[:, j] = np.log(weights[j]) + comp._log_density(x)

    return out


def fit_gmm_em(data: Dataset, k: int, max_iters: int = 200, tol: float = 1e-7,
               seed: int = 0, ridge: float = 1e-6) -> GMMModel:
    """ Fit a full-covariance Gaussian mixture with expectation-maximization.

    Components are seeded k-means++ style from the data. The average train
    log-likelihood is tracked at every iteration; fitting stops when its
    absolute improvement drops below tol or after max_iters iterations.
    A component whose responsibilities all vanish is re-seeded on a random
    data point; the fit fails if this happens k times.

    Args:
        data (Dataset): real-valued training data, n >= k.
        k (int): number of components.
        max_iters (int): maximum number of EM iterations.
        tol (float): absolute tolerance on the average log-likelihood improvement.
        seed (int): seed for the initialization and re-seeding.
        ridge (float): diagonal regularization added to each covariance.

    Returns:
        (GMMModel): the fitted mixture, its fit_meta holding the trajectory.
    """

    x = _require_lebesgue(data, "fit_gmm_em")
    n, d = x.shape
    if int(k) < 1 or int(k) > n:
        logger.error("The number of components must be between 1 and the number of points.")
        raise DataError("fit_gmm_em needs n >= k >= 1, got n={} k={}".format(n, k))
    if ridge < 0 or tol < 0 or max_iters < 1:
        raise ConfigError("ridge and tol must be non-negative and max_iters positive")
    k = int(k)
    seed = check_seed(seed)
    rng = substream(seed, 1)

    centred = x - x.mean(axis=0)
    global_cov = centred.T @ centred / n + ridge * np.eye(d)

    means, _ = kmeans_plusplus(x, n_clusters=k, random_state=seed % (2 ** 32))
    covs = np.stack([global_cov] * k)
    weights = np.full(k, 1.0 / k)

    monitor = EarlyStop(tolerance=tol, patience=1)
    reseeds = []
    iterations = 0

    for it in range(max_iters):

        log_prob = _component_log_probs(x, weights, means, covs)
        lse = logsumexp(log_prob, axis=1)
        monitor.check_convergence(float(lse.mean()))
        logger.debug("EM iteration {:d}: average log-likelihood {:.10f}".format(it, monitor.last))
        if monitor.stop_training:
            break

        resp = np.exp(log_prob - lse[:, np.newaxis])
        nk = resp.sum(axis=0)
        empty = nk < 1e-8

        for j in np.flatnonzero(~empty):
            means[j] = resp[:, j] @ x / nk[j]
            diff = x - means[j]
            cov = (resp[:, j, np.newaxis] * diff).T @ diff / nk[j]
            covs[j] = 0.5 * (cov + cov.T) + ridge * np.eye(d)
        weights = nk / n

        if empty.any():
            for j in np.flatnonzero(empty):
                reseeds.append(it)
                if len(reseeds) >= k:
                    logger.error("Mixture components collapsed {:d} times.".format(len(reseeds)))
                    raise NumericalError("EM re-seeded empty components {} times (k={})".format(len(reseeds), k))
                logger.warning("Component {:d} is empty at iteration {:d}, re-seeding it.".format(j, it))
                means[j] = x[rng.integers(n)]
                covs[j] = global_cov
                weights[j] = 1.0 / k
            weights = weights / weights.sum()
            monitor.reset()

        iterations += 1

    else:
        lse = logsumexp(_component_log_probs(x, weights, means, covs), axis=1)
        monitor.check_convergence(float(lse.mean()))

    model = GMMModel(weights, means, covs,
                     FitMeta(provenance=data.provenance.description, n_train=n, iterations=iterations,
                             train_log_likelihood=monitor.last, trajectory=tuple(monitor.history()),
                             converged=monitor.stop_training, reseeds=tuple(reseeds)))
    logger.info("EM fitted {:d} components in {:d} iterations, train log-likelihood {:.6f}.".format(
        k, iterations, monitor.last))
    if not monitor.stop_training:
        logger.warning("EM stopped at max_iters={:d} before reaching tol={:g}.".format(max_iters, tol))

    return model


def fit_histogram(data: Dataset, bins_per_dim: int,
                  range: Optional[Sequence[Sequence[float]]] = None,
                  alpha: float = 0.5) -> HistogramModel:
    """ Regular-grid histogram density.

    Every bin receives a pseudo-count alpha, so bin probabilities are
    (count + alpha) / (n + B * alpha) for B bins. Points outside the range
    are counted in the nearest edge bin.

    Args:
        data (Dataset): real-valued data with dim <= 3.
        bins_per_dim (int): number of bins along each coordinate.
        range (list[tuple[float, float]]): per-dimension bounds; defaults to
            the data range.
        alpha (float): pseudo-count added to every bin.

    Returns:
        (HistogramModel): the fitted histogram.
    """

    x = _require_lebesgue(data, "fit_histogram")
    if data.dim > 3:
        logger.error("Histograms are limited to 3 dimensions.")
        raise DataError("fit_histogram supports dim <= 3, got {}".format(data.dim))
    if int(bins_per_dim) < 1:
        raise ConfigError("bins_per_dim must be positive, got {}".format(bins_per_dim))
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    bins = int(bins_per_dim)

    if range is None:
        if data.n == 0:
            raise DataError("fit_histogram needs data or an explicit range")
        lo, hi = x.min(axis=0), x.max(axis=0)
        flat = lo == hi
        lo, hi = np.where(flat, lo - 0.5, lo), np.where(flat, hi + 0.5, hi)
    else:
        bounds = np.asarray(range, dtype=np.float64).reshape(data.dim, 2)
        lo, hi = bounds[:, 0], bounds[:, 1]
        if np.any(lo >= hi):
            raise ConfigError("histogram range must satisfy lower < upper")

    edges = np.stack([np.linspace(lo[j], hi[j], bins + 1) for j in np.arange(data.dim)])
    counts, _ = np.histogramdd(np.clip(x, lo, hi), bins=list(edges))
    probs = (counts + alpha) / (data.n + counts.size * alpha)

    return HistogramModel(edges, np.log(probs),
                          FitMeta(provenance=data.provenance.description, n_train=data.n, iterations=1))


def fit_pixel_categorical(data: Dataset, alpha: float = 1.0, K: int = 256) -> PixelCategoricalModel:
    """ Independent per-pixel categorical with Laplace smoothing,
    p = (count + alpha) / (n + K * alpha).

    Args:
        data (Dataset): counting-measure data with codes in [0, K-1].
        alpha (float): smoothing pseudo-count, positive.
        K (int): number of categories per site.

    Returns:
        (PixelCategoricalModel): the fitted model.
    """

    if data.measure != COUNTING:
        raise DataError("fit_pixel_categorical requires counting-measure data")
    if not alpha > 0:
        raise ConfigError("alpha must be positive, got {}".format(alpha))
    if int(K) < 1:
        raise ConfigError("K must be positive")
    K = int(K)

    x = np.asarray(data.points, dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >= K):
        logger.error("Pixel values must lie in [0, {:d}].".format(K - 1))
        raise DataError("values outside [0, {}] found in training data".format(K - 1))

    offsets = K * np.arange(data.dim, dtype=np.int64)
    counts = np.bincount((x + offsets).ravel(), minlength=data.dim * K).reshape(data.dim, K)
    probs = (counts + alpha) / (data.n + K * alpha)

    model = PixelCategoricalModel(probs)
    ll = float(model.log_density(x).mean()) if data.n else None
    model.fit_meta = FitMeta(provenance=data.provenance.description, n_train=data.n,
                             iterations=1, train_log_likelihood=ll)
    logger.info("Pixel categorical model fitted on {:d} images of {:d} sites.".format(data.n, data.dim))

    return model


def compressor_model(codec: str = "zlib", level: int = 9, dim: Optional[int] = None,
                     image_shape: Optional[Sequence[int]] = None) -> CompressorModel:
    """ Compression-based reference model.

    Args:
        codec (str): one of zlib, bz2, lzma, png.
        level (int): compression level (preset for lzma).
        dim (int): expected dimension, None to accept any.
        image_shape (tuple[int, int]): image rows and columns, used by png.

    Returns:
        (CompressorModel): the proxy.
    """

    return CompressorModel(codec, level, dim, image_shape)


def save_model(model: DensityModel, file_name: str) -> str:
    """ Save a model to a versioned .npz file: parameters as arrays,
    kind, fit metadata and codec as a JSON header.

    Args:
        model (DensityModel): the model to save.
        file_name (str): destination, ".npz" is appended if missing.

    Returns:
        (str): the written path.
    """

    if not file_name.endswith(".npz"):
        file_name += ".npz"
    try:
        np.savez(file_name, meta=np.array(json.dumps(model.meta(), sort_keys=True)), **model.arrays())
    except OSError as err:
        logger.error("Could not write model to {}.".format(file_name))
        raise DataError("could not write {}: {}".format(file_name, err))
    logger.info("Model {} saved to:\n{}".format(model.describe(), file_name))

    return file_name


def load_model(file_name: str) -> DensityModel:
    """ Load a model saved with save_model.

    Args:
        file_name (str): path of the .npz file.

    Returns:
        (DensityModel): the restored model.
    """

    try:
        with np.load(file_name, allow_pickle=False) as f:
            meta = json.loads(str(f["meta"]))
            arrays = {k: f[k] for k in f.files if k != "meta"}
    except (OSError, KeyError, ValueError) as err:
        logger.error("Could not read model from {}.".format(file_name))
        raise DataError("could not read model {}: {}".format(file_name, err))

    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError("unsupported model format version {!r}".format(meta.get("format_version")))

    kind = meta["kind"]
    fit_meta = FitMeta.from_dict(meta["fit_meta"])
    if kind == "exact":
        return ExactModel(distribution_from_dict(meta["distribution"]))
    if kind == "gaussian-mle":
        return GaussianModel(arrays["mean"], arrays["cov"], fit_meta)
    if kind == "gmm-em":
        return GMMModel(arrays["weights"], arrays["means"], arrays["covs"], fit_meta)
    if kind == "histogram":
        return HistogramModel(arrays["edges"], arrays["log_probs"], fit_meta)
    if kind == "pixel-categorical":
        return PixelCategoricalModel(arrays["probs"], fit_meta)
    if kind == "compressor-proxy":
        codec = meta["codec"]
        if codec["version"] != codec_version(codec["identifier"]):
            logger.warning("Model was saved with {}, running with {}.".format(
                codec["version"], codec_version(codec["identifier"])))
        return CompressorModel(codec["identifier"], codec["level"], meta["dim"], codec["image_shape"])

    raise DataError("unknown model kind {!r}".format(kind))
