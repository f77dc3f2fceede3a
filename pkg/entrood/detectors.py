"""
Out-of-distribution scoring rules and their threshold-free evaluation.

All scores are oriented so that higher means more in-distribution.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy.stats import rankdata
from sklearn.metrics import roc_auc_score, roc_curve

from entrood.density_models import DensityModel
from entrood.distributions import Dataset, Distribution, isotropic_gaussian
from entrood.errors import ConfigError, DataError, NumericalError
from entrood.estimators import Estimate, RunningMoments
from entrood.seeding import check_seed, map_chunks, substream

LIKELIHOOD = "likelihood"
LIKELIHOOD_RATIO = "likelihood-ratio"
TYPICALITY = "typicality"
DETECTORS = (LIKELIHOOD, LIKELIHOOD_RATIO, TYPICALITY)


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """ Per-sample (or per-batch) detector scores. """

    scores: np.ndarray
    detector_id: str
    model_ids: Tuple[str, ...] = ()
    provenance: str = ""
    batch_size: Optional[int] = None
    n_support_violations: int = 0

    def __post_init__(self) -> None:

        scores = np.array(self.scores, dtype=np.float64).ravel()
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return int(self.scores.shape[0])


@dataclass(frozen=True, eq=False)
class DetectorMetrics:
    """ AUROC and FPR at 95% TPR, in-distribution being the positive class. """

    auroc: float
    fpr_at_95_tpr: float
    n_in: int
    n_out: int
    detector_id: str = ""
    fpr: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    tpr: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def to_dict(self) -> Dict[str, Any]:

        return dict(auroc=self.auroc, fpr_at_95_tpr=self.fpr_at_95_tpr, n_in=self.n_in,
                    n_out=self.n_out, detector_id=self.detector_id)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "DetectorMetrics":
        return cls(**d)


def _check_data(model: DensityModel, data: Dataset) -> None:

    if model.dim is not None and data.n and model.dim != data.dim:
        logger.error("Model {} and data have different dimensions.".format(model.describe()))
        raise DataError("dimension mismatch: model dim {}, data dim {}".format(model.dim, data.dim))
    if model.normalized and model.measure != data.measure:
        raise DataError("measure mismatch: model is {}, data is {}".format(model.measure, data.measure))


def _log_likelihoods(model: DensityModel, data: Dataset, workers: int) -> np.ndarray:

    _check_data(model, data)
    return map_chunks(model.log_density, data.points, workers)


def score_likelihood(model: DensityModel, data: Dataset, workers: int = 1) -> ScoreSet:
    """ Raw likelihood detector, score = log model(x).

    Args:
        model (DensityModel): the density model.
        data (Dataset): observations to score.
        workers (int): number of threads.

    Returns:
        (ScoreSet): one score per row.
    """

    return ScoreSet(_log_likelihoods(model, data, workers), LIKELIHOOD, (model.describe(),),
                    data.provenance.description)


def score_likelihood_ratio(model: DensityModel, reference: DensityModel, data: Dataset,
                           workers: int = 1) -> ScoreSet:
    """ Likelihood-ratio detector, score = log model(x) - log reference(x).

    The entropy of the incoming data cancels in the expected score,
    which equals KL(Q || reference) - KL(Q || model).

    Args:
        model (DensityModel): the density model.
        reference (DensityModel): the reference model, possibly a compressor proxy.
        data (Dataset): observations to score.
        workers (int): number of threads.

    Returns:
        (ScoreSet): one score per row; points outside the support of both models score -inf
            and are counted in `n_support_violations`.
    """

    lp = _log_likelihoods(model, data, workers)
    lr = _log_likelihoods(reference, data, workers)

    # outside both supports: -inf - (-inf) is undefined, such points are out-of-distribution
    joint = np.isneginf(lp) & np.isneginf(lr)
    with np.errstate(invalid="ignore"):
        scores = np.where(joint, -np.inf, lp - lr)

    n_joint = int(joint.sum())
    if n_joint:
        logger.warning("{:d} points lie outside the support of both the model and the reference, "
                       "scored as -inf.".format(n_joint))
    if np.any(np.isnan(scores)):
        logger.error("Likelihood ratio is undefined for some points.")
        raise NumericalError("likelihood ratio produced NaN for {:d} points".format(int(np.isnan(scores).sum())))

    return ScoreSet(scores, LIKELIHOOD_RATIO, (model.describe(), reference.describe()),
                    data.provenance.description, n_support_violations=n_joint)


def typicality_reference(model: DensityModel, train_data: Dataset, workers: int = 1) -> Estimate:
    """ Plug-in training entropy, -mean log model(x) over the training data.

    Args:
        model (DensityModel): the fitted model.
        train_data (Dataset): in-distribution training data.
        workers (int): number of threads.

    Returns:
        (Estimate): the entropy estimate with its standard error.
    """

    if train_data.n == 0:
        raise DataError("typicality reference needs training data")

    moments = RunningMoments().update(_log_likelihoods(model, train_data, workers))

    return Estimate(-moments.mean, moments.std_error(), moments.n, "plug-in-train-entropy")


def score_typicality(model: DensityModel, train_entropy: Estimate, batch: Dataset, workers: int = 1) -> float:
    """ Typicality score of a batch, -|mean log model(x) + train entropy|.

    Args:
        model (DensityModel): the model.
        train_entropy (Estimate): entropy reference from typicality_reference.
        batch (Dataset): the test batch, non-empty.
        workers (int): number of threads.

    Returns:
        (float): the score, 0 for a perfectly typical batch.
    """

    if batch.n == 0:
        logger.error("Cannot score an empty batch.")
        raise DataError("typicality needs a non-empty batch")

    return -abs(float(np.mean(_log_likelihoods(model, batch, workers))) + train_entropy.value)


def score_typicality_batches(model: DensityModel, train_entropy: Estimate, data: Dataset,
                             batch_size: int = 64, workers: int = 1) -> ScoreSet:
    """ Typicality scores over disjoint contiguous batches of data.
    A trailing partial batch is dropped.

    Args:
        model (DensityModel): the model.
        train_entropy (Estimate): entropy reference.
        data (Dataset): test data, at least batch_size rows.
        batch_size (int): rows per batch.
        workers (int): number of threads.

    Returns:
        (ScoreSet): one score per batch.
    """

    if int(batch_size) < 1:
        raise ConfigError("batch_size must be positive")
    n_batches = data.n // int(batch_size)
    if n_batches == 0:
        raise DataError("{} rows is fewer than one batch of {}".format(data.n, batch_size))
    if n_batches * batch_size < data.n:
        logger.debug("Dropping {:d} trailing rows.".format(data.n - n_batches * batch_size))

    ll = _log_likelihoods(model, data, workers)[:n_batches * batch_size]
    means = ll.reshape(n_batches, int(batch_size)).mean(axis=1)

    return ScoreSet(-np.abs(means + train_entropy.value), TYPICALITY, (model.describe(),),
                    data.provenance.description, int(batch_size))


def calibrate_typicality_epsilon(model: DensityModel, train_entropy: Estimate, heldout: Dataset,
                                 batch_size: int = 64, quantile: float = 0.99,
                                 n_bootstrap: int = 1000, seed: int = 0, workers: int = 1) -> float:
    """ Bootstrap threshold for the typicality test: the given quantile of
    |mean log model(x) + train entropy| over batches resampled with
    replacement from held-out in-distribution data.

    Args:
        model (DensityModel): the model.
        train_entropy (Estimate): entropy reference.
        heldout (Dataset): held-out in-distribution data.
        batch_size (int): rows per batch.
        quantile (float): quantile in (0, 1).
        n_bootstrap (int): number of resampled batches.
        seed (int): bootstrap seed.
        workers (int): number of threads.

    Returns:
        (float): epsilon; batches deviating by more are flagged.
    """

    if not 0 < quantile < 1:
        raise ConfigError("quantile must be in (0, 1), got {}".format(quantile))
    if heldout.n == 0 or int(n_bootstrap) < 1:
        raise DataError("calibration needs held-out data and n_bootstrap >= 1")

    ll = _log_likelihoods(model, heldout, workers)
    rng = substream(check_seed(seed))
    idx = rng.integers(0, heldout.n, size=(int(n_bootstrap), int(batch_size)))
    deviations = np.abs(ll[idx].mean(axis=1) + train_entropy.value)

    epsilon = float(np.quantile(deviations, quantile))
    logger.info("Typicality epsilon at quantile {:g}: {:.6f}.".format(quantile, epsilon))

    return epsilon


def typicality_counterexample(dim: int, variance: float = 0.5) -> Tuple[Distribution, Distribution]:
    """ P = N(0, I) and Q = N(mu, v I) with ||mu||^2 = dim (1 - v).

    Q has the same expected log-likelihood under P as P itself, so the
    typicality test cannot tell them apart, while KL(Q || P) > 0.

    Args:
        dim (int): dimension.
        variance (float): v in (0, 1).

    Returns:
        (tuple[Distribution, Distribution]): P and Q.
    """

    if not 0 < variance < 1:
        raise ConfigError("variance must be in (0, 1), got {}".format(variance))

    return isotropic_gaussian(dim), isotropic_gaussian(dim, np.sqrt(1 - variance), variance)


def _as_scores(scores: Union[ScoreSet, np.ndarray], side: str) -> np.ndarray:

    values = scores.scores if isinstance(scores, ScoreSet) else np.asarray(scores, dtype=np.float64).ravel()
    if values.shape[0] == 0:
        logger.error("No {} scores to evaluate.".format(side))
        raise DataError("{} scores are empty".format(side))
    if np.any(np.isnan(values)):
        raise DataError("{} scores contain NaN".format(side))

    return values


def evaluate_detector(in_scores: Union[ScoreSet, np.ndarray],
                      out_scores: Union[ScoreSet, np.ndarray]) -> DetectorMetrics:
    """ Threshold-free evaluation of a detector.

    Scores are replaced by their joint ranks (ties averaged), so AUROC is
    P(in > out) + P(in = out) / 2 and any strictly increasing transform of
    the scores leaves the metrics unchanged.

    Args:
        in_scores (ScoreSet or array): scores of in-distribution samples.
        out_scores (ScoreSet or array): scores of out-of-distribution samples.

    Returns:
        (DetectorMetrics): AUROC, FPR at 95% TPR and the ROC curve.
    """

    s_in, s_out = _as_scores(in_scores, "in-distribution"), _as_scores(out_scores, "out-of-distribution")

    ranks = rankdata(np.concatenate([s_in, s_out]))
    labels = np.concatenate([np.ones(s_in.shape[0]), np.zeros(s_out.shape[0])])

    auroc = float(roc_auc_score(labels, ranks))
    fpr, tpr, _ = roc_curve(labels, ranks, drop_intermediate=False)
    fpr_at_95 = float(fpr[min(np.searchsorted(tpr, 0.95, side="left"), len(fpr) - 1)])

    detector_id = in_scores.detector_id if isinstance(in_scores, ScoreSet) else ""

    return DetectorMetrics(auroc, fpr_at_95, int(s_in.shape[0]), int(s_out.shape[0]), detector_id, fpr, tpr)
