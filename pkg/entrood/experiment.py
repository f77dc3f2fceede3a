"""
Config-driven experiments.

One config describes one (in-distribution, out-of-distribution, model)
triple. Running it fits the model, builds the decomposition ledgers on both
sides, the contrast statistics, scores and evaluates every detector, and
writes a JSON report, CSV tables and SVG plots. Every random draw uses a seed
derived from the config seed by label, so a config and a library version
fully determine the outputs.
"""

import copy
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import matplotlib.pyplot as plt
import numpy as np
import yaml
from loguru import logger

from entrood._version import __version__
from entrood.analysis import (ContrastStats, DecompositionLedger, chebyshev_bound, contrast_from_log_likelihoods,
                              contrast_stats, decomposition_ledger, empirical_ledger, gaussian_contrast_moments)
from entrood.data_io import ImageDatasetSpec, export_csv, load_idx, read_scores_csv, subsample
from entrood.density_models import (DensityModel, compressor_model, exact_model, fit_gaussian, fit_gmm_em,
                                    fit_histogram, fit_pixel_categorical, save_model)
from entrood.detectors import (DETECTORS, LIKELIHOOD, LIKELIHOOD_RATIO, TYPICALITY, DetectorMetrics, ScoreSet,
                               calibrate_typicality_epsilon, evaluate_detector, score_likelihood,
                               score_likelihood_ratio, score_typicality_batches, typicality_reference)
from entrood.distributions import KINDS, Dataset, Distribution, distribution_from_dict, sample
from entrood.errors import ConfigError, DataError, EntroodError, ExperimentError, UnavailableError
from entrood.plots import histogram_plot, line_plot, roc_plot
from entrood.seeding import GENERATOR_ID, check_seed, derive_seed

SCHEMA_VERSION = 1
IMAGES = "images"

REQUIRED = ("seed", "in_dist", "model")
OPTIONAL = ("schema_version", "id", "out_dist", "reference", "detectors", "samples", "outputs")

MODEL_FIELDS = {
    "exact": ((), ("distribution",)),
    "gaussian-mle": ((), ("ridge",)),
    "gmm-em": (("k",), ("max_iters", "tol", "ridge")),
    "histogram": (("bins_per_dim",), ("range", "alpha")),
    "pixel-categorical": ((), ("alpha", "K")),
    "compressor-proxy": ((), ("codec", "level", "image_shape")),
}
DETECTOR_FIELDS = {
    LIKELIHOOD: (),
    LIKELIHOOD_RATIO: (),
    TYPICALITY: ("batch_size", "epsilon_quantile", "n_bootstrap"),
}
IMAGE_SPLIT_FIELDS = ("path", "labels", "dims")

DEFAULT_SAMPLES = dict(n_train=10000, n_eval=10000, n_pairs=100000, n_ledger=100000)
DEFAULT_OUTPUTS = dict(dir="entrood_out", formats=["json", "csv"], plots=True, save_model=False)
DEFAULT_TYPICALITY = dict(batch_size=64, epsilon_quantile=0.99, n_bootstrap=1000)

NOTES = (
    "chebyshev_bound is a plug-in bound: mu and sigma2 are estimated from the same pairs "
    "as empirical_p_z_gt_0.",
    "Estimation tolerances (Monte Carlo sizes, k-NN order, typicality batch size and epsilon quantile) "
    "are engineering choices.",
)
IMAGE_NOTE = "Image ledgers are empirical: the data law is unknown, so KL and entropy terms are not reported."


@dataclass
class ExperimentConfig:
    """ A validated experiment description (schema version 1). """

    id: str
    seed: int
    in_dist: Dict[str, Any]
    out_dist: Dict[str, Any]
    model: Dict[str, Any]
    reference: Optional[Dict[str, Any]] = None
    detectors: List[Dict[str, Any]] = field(default_factory=lambda: [dict(name=LIKELIHOOD)])
    samples: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_SAMPLES))
    outputs: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(DEFAULT_OUTPUTS))
    schema_version: int = SCHEMA_VERSION

    @property
    def is_images(self) -> bool:
        return self.in_dist.get("kind") == IMAGES

    def to_dict(self) -> Dict[str, Any]:
        """ Plain mapping, as echoed in reports and re-parsable. """

        return copy.deepcopy(dict(schema_version=self.schema_version, id=self.id, seed=self.seed,
                                  in_dist=self.in_dist, out_dist=self.out_dist, model=self.model,
                                  reference=self.reference, detectors=self.detectors,
                                  samples=self.samples, outputs=self.outputs))


def _check_fields(spec: Any, path: str, required: Sequence[str], optional: Sequence[str],
                  errors: List[str]) -> bool:

    if not isinstance(spec, Mapping):
        errors.append("{}: expected a mapping".format(path))
        return False
    errors += ["{}.{}: unknown field".format(path, key)
               for key in spec if key not in required and key not in optional]
    errors += ["{}.{}: required field missing".format(path, key)
               for key in required if key not in spec]
    return True


def _check_image_side(spec: Mapping, path: str, splits: Sequence[str], errors: List[str]) -> None:

    if not _check_fields(spec, path, ("kind",) + tuple(splits), ("train", "test"), errors):
        return
    for split in ("train", "test"):
        if split in spec and _check_fields(spec[split], "{}.{}".format(path, split), ("path",),
                                           IMAGE_SPLIT_FIELDS, errors):
            dims = spec[split].get("dims")
            if dims is not None and (not isinstance(dims, (list, tuple)) or len(dims) != 2):
                errors.append("{}.{}.dims: expected [rows, cols]".format(path, split))


def _check_distribution(spec: Any, path: str, errors: List[str]) -> Optional[Distribution]:

    try:
        return distribution_from_dict(spec, path)
    except ConfigError as err:
        errors += err.errors
        return None


def _check_model(spec: Any, path: str, errors: List[str], images: bool, reference: bool) -> None:

    if not isinstance(spec, Mapping):
        errors.append("{}: expected a mapping".format(path))
        return
    kind = spec.get("kind")
    if kind not in MODEL_FIELDS:
        errors.append("{}.kind: unknown model kind {!r}, expected one of {}".format(
            path, kind, ", ".join(MODEL_FIELDS)))
        return
    required, optional = MODEL_FIELDS[kind]
    _check_fields(spec, path, ("kind",) + required, optional, errors)

    if kind == "compressor-proxy" and not reference:
        errors.append("{}.kind: a compressor proxy can only be used as reference".format(path))
    if kind == "exact" and images:
        errors.append("{}.kind: exact models need a known data law, not images".format(path))
    if kind == "exact" and reference and "distribution" not in spec:
        errors.append("{}.distribution: required field missing for an exact reference".format(path))
    if kind == "exact" and "distribution" in spec:
        _check_distribution(spec["distribution"], "{}.distribution".format(path), errors)
    if kind == "gmm-em" and not (isinstance(spec.get("k"), int) and spec.get("k") >= 1):
        errors.append("{}.k: must be a positive integer".format(path))


def config_from_dict(d: Any) -> ExperimentConfig:
    """ Validate a config mapping.

    Args:
        d (dict): the parsed document.

    Returns:
        (ExperimentConfig): the validated config, defaults filled in.

    Raises:
        ConfigError: listing every problem found.
    """

    errors = []
    if not isinstance(d, Mapping):
        raise ConfigError("config must be a mapping")

    errors += ["{}: unknown field".format(key) for key in d if key not in REQUIRED + OPTIONAL]
    if "seed" not in d:
        errors.append("seed required")
    else:
        try:
            check_seed(d["seed"])
        except ConfigError as err:
            errors.append("seed: {}".format(err))
    errors += ["{}: required field missing".format(key) for key in REQUIRED if key not in d and key != "seed"]
    if "schema_version" in d and d["schema_version"] != SCHEMA_VERSION:
        errors.append("schema_version: unsupported version {!r}, expected {}".format(
            d["schema_version"], SCHEMA_VERSION))
    if "id" in d and not isinstance(d["id"], str):
        errors.append("id: expected a string")

    in_spec = d.get("in_dist")
    out_spec = d.get("out_dist", in_spec)
    images = isinstance(in_spec, Mapping) and in_spec.get("kind") == IMAGES
    if images:
        _check_image_side(in_spec, "in_dist", ("train", "test"), errors)
        if isinstance(out_spec, Mapping) and out_spec.get("kind") == IMAGES:
            _check_image_side(out_spec, "out_dist", ("test",), errors)
        elif out_spec is not None:
            errors.append("out_dist.kind: must be images when in_dist is images")
    elif in_spec is not None:
        p = _check_distribution(in_spec, "in_dist", errors)
        q = _check_distribution(out_spec, "out_dist", errors) if out_spec is not None else None
        if p is not None and q is not None and (p.dim != q.dim or p.measure != q.measure):
            errors.append("out_dist: dimension/measure {}/{} differs from in_dist {}/{}".format(
                q.dim, q.measure, p.dim, p.measure))

    if "model" in d:
        _check_model(d["model"], "model", errors, images, reference=False)
    if d.get("reference") is not None:
        _check_model(d["reference"], "reference", errors, images, reference=True)

    detectors = d.get("detectors", [dict(name=LIKELIHOOD)])
    names = []
    if not isinstance(detectors, list) or not detectors:
        errors.append("detectors: expected a non-empty list")
        detectors = []
    for i, det in enumerate(detectors):
        path = "detectors[{}]".format(i)
        if not isinstance(det, Mapping) or det.get("name") not in DETECTOR_FIELDS:
            name = det.get("name") if isinstance(det, Mapping) else det
            errors.append("{}.name: unknown detector {!r}, expected one of {}".format(
                path, name, ", ".join(DETECTORS)))
            continue
        _check_fields(det, path, ("name",), DETECTOR_FIELDS[det["name"]], errors)
        if det["name"] in names:
            errors.append("{}.name: duplicate detector {!r}".format(path, det["name"]))
        names.append(det["name"])
        if det["name"] == LIKELIHOOD_RATIO and d.get("reference") is None:
            errors.append("{}: the likelihood-ratio detector needs a reference model".format(path))
        q = det.get("epsilon_quantile", 0.5)
        if not isinstance(q, (int, float)) or not 0 < q < 1:
            errors.append("{}.epsilon_quantile: must be in (0, 1)".format(path))

    samples = dict(DEFAULT_SAMPLES)
    if "samples" in d and _check_fields(d["samples"], "samples", (), tuple(DEFAULT_SAMPLES), errors):
        samples.update(d["samples"])
    for key, minimum in (("n_train", 2), ("n_eval", 1), ("n_pairs", 2), ("n_ledger", 2)):
        if not isinstance(samples[key], int) or isinstance(samples[key], bool) or samples[key] < minimum:
            errors.append("samples.{}: must be an integer >= {}".format(key, minimum))
    for det in detectors:
        if isinstance(det, Mapping) and det.get("name") == TYPICALITY:
            size = det.get("batch_size", DEFAULT_TYPICALITY["batch_size"])
            if not isinstance(size, int) or size < 1:
                errors.append("detectors: typicality batch_size must be a positive integer")
            elif isinstance(samples["n_eval"], int) and not images and size > samples["n_eval"]:
                errors.append("detectors: typicality batch_size {} exceeds samples.n_eval".format(size))

    outputs = copy.deepcopy(DEFAULT_OUTPUTS)
    if "outputs" in d and _check_fields(d["outputs"], "outputs", (), tuple(DEFAULT_OUTPUTS), errors):
        outputs.update(d["outputs"])
    if not isinstance(outputs["formats"], list) or not set(outputs["formats"]) <= {"json", "csv"}:
        errors.append("outputs.formats: expected a list among json, csv")

    if errors:
        for err in errors:
            logger.error("Invalid config: {}".format(err))
        raise ConfigError("{} config error(s): {}".format(len(errors), "; ".join(errors)), errors)

    return ExperimentConfig(d.get("id", "experiment"), int(d["seed"]), copy.deepcopy(dict(in_spec)),
                            copy.deepcopy(dict(out_spec)), copy.deepcopy(dict(d["model"])),
                            copy.deepcopy(dict(d["reference"])) if d.get("reference") is not None else None,
                            [dict(det) for det in detectors], samples, outputs)


def parse_config(text: str) -> ExperimentConfig:
    """ Parse and validate a YAML experiment config.

    Args:
        text (str): the YAML document.

    Returns:
        (ExperimentConfig): the validated config.

    Raises:
        ConfigError: on YAML syntax errors or with every validation problem.
    """

    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as err:
        logger.error("The config is not valid YAML.")
        raise ConfigError("invalid YAML: {}".format(err))

    return config_from_dict(d)


def load_config(file_name: str) -> ExperimentConfig:
    """ Read and parse a config file. """

    try:
        with open(file_name) as f:
            return parse_config(f.read())
    except OSError as err:
        raise ConfigError("could not read config {}: {}".format(file_name, err))


def _set_dim(spec: Any, value: int) -> None:

    if isinstance(spec, dict) and spec.get("kind") in KINDS:
        spec["dim"] = value
        for comp in spec.get("components", []):
            _set_dim(comp, value)


def expand_sweep(cfg: ExperimentConfig, param: str, values: Sequence[Any]) -> List[ExperimentConfig]:
    """ One config per value of a parameter.

    `dim` sets the dimension of every distribution in the config (which must
    then have broadcastable parameters); any other name is a dotted path
    into the config, e.g. `samples.n_eval` or `out_dist.variance`.

    Args:
        cfg (ExperimentConfig): the template.
        param (str): parameter name.
        values (list): values to sweep over.

    Returns:
        (list[ExperimentConfig]): validated configs, ids suffixed with the value.
    """

    configs = []
    for value in values:
        d = cfg.to_dict()
        if param == "dim":
            for key in ("in_dist", "out_dist"):
                _set_dim(d[key], value)
            for key in ("model", "reference"):
                if d.get(key) is not None:
                    _set_dim(d[key].get("distribution"), value)
        else:
            *parents, leaf = param.split(".")
            node = d
            for key in parents:
                if not isinstance(node.get(key), dict):
                    raise ConfigError("sweep parameter {!r}: {} is not a mapping".format(param, key))
                node = node[key]
            node[leaf] = value
        d["id"] = "{}-{}{}".format(cfg.id, param.split(".")[-1], value)
        configs.append(config_from_dict(d))

    return configs


@dataclass(eq=False)
class ExperimentReport:
    """ Results of one experiment. Scores, ROC curves and timings are
    written to separate files, everything else to report.json. """

    config: Dict[str, Any]
    dim: int
    model_id: str
    reference_id: Optional[str]
    fit: Dict[str, Any]
    ledger_in: DecompositionLedger
    ledger_out: DecompositionLedger
    contrast: ContrastStats
    contrast_exact: Optional[Dict[str, Any]]
    detectors: Dict[str, DetectorMetrics]
    typicality: Optional[Dict[str, Any]] = None
    bits_per_dim: Optional[Dict[str, float]] = None
    notes: List[str] = field(default_factory=list)
    library_version: str = __version__
    generator: str = GENERATOR_ID
    scores: Dict[str, Tuple[ScoreSet, ScoreSet]] = field(default_factory=dict)
    wall_clock_s: float = 0.0
    stage_seconds: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:

        return dict(schema_version=SCHEMA_VERSION, library_version=self.library_version,
                    generator=self.generator, config=self.config, dim=self.dim, model_id=self.model_id,
                    reference_id=self.reference_id, fit=self.fit, ledger_in=self.ledger_in.to_dict(),
                    ledger_out=self.ledger_out.to_dict(), contrast=self.contrast.to_dict(),
                    contrast_exact=self.contrast_exact,
                    detectors={k: m.to_dict() for k, m in self.detectors.items()},
                    typicality=self.typicality, bits_per_dim=self.bits_per_dim, notes=list(self.notes))

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ExperimentReport":

        return cls(d["config"], d["dim"], d["model_id"], d["reference_id"], d["fit"],
                   DecompositionLedger.from_dict(d["ledger_in"]), DecompositionLedger.from_dict(d["ledger_out"]),
                   ContrastStats.from_dict(d["contrast"]), d["contrast_exact"],
                   {k: DetectorMetrics.from_dict(m) for k, m in d["detectors"].items()},
                   d.get("typicality"), d.get("bits_per_dim"), d.get("notes", []),
                   d["library_version"], d["generator"])


@contextmanager
def _stage(name: str, timings: Dict[str, float]) -> Iterator[None]:

    logger.info("Stage '{}' started.".format(name))
    start = time.perf_counter()
    try:
        yield
    except ExperimentError:
        raise
    except (EntroodError, ValueError, ArithmeticError, OSError) as err:
        logger.error("Stage '{}' failed: {}".format(name, err))
        raise ExperimentError(name, err) from err
    finally:
        timings[name] = time.perf_counter() - start


def build_model(spec: Mapping[str, Any], data_dist: Optional[Distribution], train: Dataset,
                seed: int) -> DensityModel:
    """ Build or fit the model described by a config model spec.

    Args:
        spec (dict): the validated model spec.
        data_dist (Distribution): the in-distribution law, used by exact models.
        train (Dataset): training data for fitted models.
        seed (int): seed for randomized fits.

    Returns:
        (DensityModel): the model.
    """

    kind = spec["kind"]
    if kind == "exact":
        if "distribution" in spec:
            return exact_model(distribution_from_dict(spec["distribution"]))
        return exact_model(data_dist)
    if kind == "gaussian-mle":
        return fit_gaussian(train, ridge=spec.get("ridge", 0.0))
    if kind == "gmm-em":
        return fit_gmm_em(train, spec["k"], max_iters=spec.get("max_iters", 200), tol=spec.get("tol", 1e-7),
                          seed=seed, ridge=spec.get("ridge", 1e-6))
    if kind == "histogram":
        return fit_histogram(train, spec["bins_per_dim"], range=spec.get("range"), alpha=spec.get("alpha", 0.5))
    if kind == "pixel-categorical":
        return fit_pixel_categorical(train, alpha=spec.get("alpha", 1.0), K=spec.get("K", 256))

    return compressor_model(spec.get("codec", "zlib"), spec.get("level", 9), dim=train.dim,
                            image_shape=spec.get("image_shape"))


def _image_split(side: Mapping[str, Any], split: str) -> Dataset:

    spec = side[split]
    return load_idx(ImageDatasetSpec(spec["path"], tuple(spec["dims"]) if spec.get("dims") else None,
                                     spec.get("labels"), split))


def _limit(data: Dataset, n: int, seed: int) -> Dataset:

    return subsample(data, n, seed) if n < data.n else data


def run_experiment(cfg: ExperimentConfig, workers: int = 1, out_dir: Optional[str] = None,
                   formats: Optional[Sequence[str]] = None, write: bool = True) -> ExperimentReport:
    """ Run an experiment and write its outputs.

    Args:
        cfg (ExperimentConfig): the validated config.
        workers (int): number of threads for sampling and scoring.
        out_dir (str): output directory, overrides cfg.outputs.dir.
        formats (list[str]): report formats, overrides cfg.outputs.formats.
        write (bool): write outputs (report, CSVs, plots) to disk.

    Returns:
        (ExperimentReport): the report.

    Raises:
        ExperimentError: naming the failing stage and wrapping the cause.
    """

    timings = {}
    start = time.perf_counter()
    seed = cfg.seed
    samples = cfg.samples
    names = [det["name"] for det in cfg.detectors]
    logger.info("Running experiment '{}' with seed {}.".format(cfg.id, seed))

    with _stage("data", timings):
        if cfg.is_images:
            p = q = None
            train = _limit(_image_split(cfg.in_dist, "train"), samples["n_train"], derive_seed(seed, "data/train"))
            eval_in = _limit(_image_split(cfg.in_dist, "test"), samples["n_eval"], derive_seed(seed, "data/eval_in"))
            eval_out = _limit(_image_split(cfg.out_dist, "test"), samples["n_eval"],
                              derive_seed(seed, "data/eval_out"))
            heldout = train
            if not train.dim == eval_in.dim == eval_out.dim:
                raise DataError("image sizes differ between train ({}), in test ({}) and out test ({})".format(
                    train.dim, eval_in.dim, eval_out.dim))
        else:
            p = distribution_from_dict(cfg.in_dist, "in_dist")
            q = distribution_from_dict(cfg.out_dist, "out_dist")
            train = sample(p, samples["n_train"], derive_seed(seed, "data/train"), workers)
            eval_in = sample(p, samples["n_eval"], derive_seed(seed, "data/eval_in"), workers)
            eval_out = sample(q, samples["n_eval"], derive_seed(seed, "data/eval_out"), workers)
            heldout = sample(p, samples["n_eval"], derive_seed(seed, "data/heldout"), workers) \
                if TYPICALITY in names else None

    with _stage("fit", timings):
        model = build_model(cfg.model, p, train, derive_seed(seed, "fit/model"))
        reference = build_model(cfg.reference, p, train, derive_seed(seed, "fit/reference")) \
            if cfg.reference is not None else None

    with _stage("ledger", timings):
        if cfg.is_images:
            ledger_in = empirical_ledger(eval_in, model, "in_dist:test", workers)
            ledger_out = empirical_ledger(eval_out, model, "out_dist:test", workers)
        else:
            ledger_in = decomposition_ledger(p, model, samples["n_ledger"], derive_seed(seed, "ledger/in"), workers)
            ledger_out = decomposition_ledger(q, model, samples["n_ledger"], derive_seed(seed, "ledger/out"), workers)

    with _stage("scores", timings):
        loglik = (score_likelihood(model, eval_in, workers), score_likelihood(model, eval_out, workers))

    with _stage("contrast", timings):
        contrast_exact = None
        if cfg.is_images:
            m = min(len(loglik[0]), len(loglik[1]))
            contrast = contrast_from_log_likelihoods(loglik[0].scores[:m], loglik[1].scores[:m])
        else:
            contrast = contrast_stats(p, q, model, samples["n_pairs"], derive_seed(seed, "contrast"), workers)
            model_dist = model.as_distribution()
            if model_dist is not None:
                try:
                    mu, sigma2 = gaussian_contrast_moments(p, q, model_dist)
                    contrast_exact = dict(mu=mu, sigma2=sigma2,
                                          chebyshev_bound=chebyshev_bound(mu, sigma2) if sigma2 > 0 else None)
                except UnavailableError:
                    pass

    scores = dict(loglik=loglik)
    metrics = {}
    typicality = None
    with _stage("detectors", timings):
        for det in cfg.detectors:
            name = det["name"]
            if name == LIKELIHOOD:
                scores[name] = loglik
            elif name == LIKELIHOOD_RATIO:
                scores[name] = (score_likelihood_ratio(model, reference, eval_in, workers),
                                score_likelihood_ratio(model, reference, eval_out, workers))
            else:
                settings = dict(DEFAULT_TYPICALITY, **{k: v for k, v in det.items() if k != "name"})
                entropy = typicality_reference(model, train, workers)
                scores[name] = tuple(score_typicality_batches(model, entropy, data, settings["batch_size"], workers)
                                     for data in (eval_in, eval_out))
                epsilon = calibrate_typicality_epsilon(model, entropy, heldout, settings["batch_size"],
                                                       settings["epsilon_quantile"], settings["n_bootstrap"],
                                                       derive_seed(seed, "typicality/epsilon"), workers)
                typicality = dict(train_entropy=entropy.to_dict(), epsilon=epsilon, **settings,
                                  flagged_in=float(np.mean(-scores[name][0].scores > epsilon)),
                                  flagged_out=float(np.mean(-scores[name][1].scores > epsilon)))
            metrics[name] = evaluate_detector(*scores[name])
            logger.info("Detector {}: AUROC={:.4f}, FPR@95TPR={:.4f}.".format(
                name, metrics[name].auroc, metrics[name].fpr_at_95_tpr))

    notes = list(NOTES)
    bits = None
    if cfg.is_images:
        notes.append(IMAGE_NOTE)
        bits = {"in": ledger_in.bits_per_dim, "out": ledger_out.bits_per_dim}

    report = ExperimentReport(cfg.to_dict(), train.dim, model.describe(),
                              reference.describe() if reference is not None else None, model.fit_meta.to_dict(),
                              ledger_in, ledger_out, contrast, contrast_exact, metrics, typicality, bits, notes,
                              scores=scores)

    if write:
        out_dir = out_dir or cfg.outputs["dir"]
        with _stage("outputs", timings):
            report.wall_clock_s = time.perf_counter() - start
            report.stage_seconds = timings
            write_report(report, out_dir, formats or cfg.outputs["formats"])
            if cfg.outputs.get("plots", True):
                emit_plots(report, out_dir)
            if cfg.outputs.get("save_model", False):
                save_model(model, os.path.join(out_dir, "model.npz"))

    report.wall_clock_s = time.perf_counter() - start
    report.stage_seconds = timings
    logger.info("Experiment '{}' finished in {:.1f}s.".format(cfg.id, report.wall_clock_s))

    return report


def _ledger_record(side: str, ledger: DecompositionLedger) -> Dict[str, Any]:

    kl, entropy = ledger.kl_term, ledger.entropy_term
    return dict(side=side, avg_log_likelihood=ledger.avg_log_likelihood.value,
                avg_log_likelihood_se=ledger.avg_log_likelihood.std_error,
                kl=kl.value if kl else None, kl_se=kl.std_error if kl else None,
                entropy=entropy.value if entropy else None, entropy_se=entropy.std_error if entropy else None,
                residual=ledger.residual, bits_per_dim=ledger.bits_per_dim, n=ledger.n)


def _write_json(payload: Dict[str, Any], path: str) -> str:

    try:
        with open(path, "w") as f:
            f.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    except OSError as err:
        logger.error("Could not write {}.".format(path))
        raise DataError("could not write {}: {}".format(path, err))

    return path


def _make_dir(out_dir: str) -> None:

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        logger.error("Could not create the output directory {}.".format(out_dir))
        raise DataError("could not create {}: {}".format(out_dir, err))


def write_report(report: ExperimentReport, out_dir: str, formats: Sequence[str] = ("json", "csv")) -> List[str]:
    """ Write report.json, the timing sidecar and the CSV tables.

    Args:
        report (ExperimentReport): the report.
        out_dir (str): destination directory, created if missing.
        formats (list[str]): any of json, csv.

    Returns:
        (list[str]): written paths.
    """

    _make_dir(out_dir)

    written = []
    if "json" in formats:
        written.append(_write_json(report.to_dict(), os.path.join(out_dir, "report.json")))

    written.append(_write_json(dict(wall_clock_s=report.wall_clock_s, stages=report.stage_seconds),
                               os.path.join(out_dir, "timing.json")))

    if "csv" in formats:
        for name, (s_in, s_out) in report.scores.items():
            written.append(export_csv(s_in, os.path.join(out_dir, "scores_{}_in.csv".format(name))))
            written.append(export_csv(s_out, os.path.join(out_dir, "scores_{}_out.csv".format(name))))
        written.append(export_csv([m.to_dict() for m in report.detectors.values()],
                                  os.path.join(out_dir, "metrics.csv")))
        written.append(export_csv([_ledger_record("in", report.ledger_in), _ledger_record("out", report.ledger_out)],
                                  os.path.join(out_dir, "ledgers.csv")))
        contrast = report.contrast
        written.append(export_csv([dict(mu=contrast.mu, sigma2=contrast.sigma2,
                                        chebyshev_bound=contrast.chebyshev_bound,
                                        empirical_p_z_gt_0=contrast.empirical_p_z_gt_0.value,
                                        empirical_p_z_gt_0_se=contrast.empirical_p_z_gt_0.std_error,
                                        n_pairs=contrast.n_pairs, n_excluded=contrast.n_excluded)],
                                  os.path.join(out_dir, "contrast.csv")))

    logger.info("Report written to:\n{}".format(out_dir))

    return written


def load_report(path: str) -> ExperimentReport:
    """ Load a report written by write_report, with its score CSVs when present.

    Args:
        path (str): report.json or the directory containing it.

    Returns:
        (ExperimentReport): the report; detector ROC curves are recomputed
            from the score files.
    """

    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    try:
        with open(path) as f:
            report = ExperimentReport.from_dict(json.load(f))
    except (OSError, ValueError, KeyError) as err:
        logger.error("Could not load report {}.".format(path))
        raise DataError("could not load report {}: {}".format(path, err))

    out_dir = os.path.dirname(path)
    for name in ["loglik"] + list(report.detectors):
        files = [os.path.join(out_dir, "scores_{}_{}.csv".format(name, side)) for side in ("in", "out")]
        if all(os.path.exists(f) for f in files):
            report.scores[name] = tuple(read_scores_csv(f) for f in files)
            if name in report.detectors:
                report.detectors[name] = evaluate_detector(*report.scores[name])

    return report


def emit_plots(report: ExperimentReport, out_dir: str) -> List[str]:
    """ Write the report's SVG plots: log-likelihood histograms,
    bound and empirical P(Z > 0) at the report dimension, and ROC curves.

    Args:
        report (ExperimentReport): the report, with its scores.
        out_dir (str): destination directory.

    Returns:
        (list[str]): written paths.
    """

    _make_dir(out_dir)
    loglik = report.scores.get("loglik", (None, None))
    in_ll = loglik[0].scores if loglik[0] is not None else None
    out_ll = loglik[1].scores if loglik[1] is not None else None

    paths = [os.path.join(out_dir, name) for name in ("loglik_histograms.svg", "bound_vs_dim.svg", "roc_curves.svg")]

    fig, _ = histogram_plot(in_ll, out_ll, show=False, print_out=True, file_name=paths[0],
                            labels=("in-distribution log-likelihood", "out-of-distribution log-likelihood"),
                            title=report.config.get("id", "experiment"))
    plt.close(fig)

    fig, _ = line_plot(_bound_series([report]), x_val=[report.dim], show=False, print_out=True, file_name=paths[1],
                       title="P(Z > 0)", xlabel="dimension", ylabel="probability")
    plt.close(fig)

    curves = {name: (m.fpr, m.tpr) for name, m in report.detectors.items() if len(m.fpr)}
    fig, _ = roc_plot(curves, show=False, print_out=True, file_name=paths[2])
    plt.close(fig)

    logger.info("Plots written to:\n{}".format("\n".join(paths)))

    return paths


def _bound_series(reports: Sequence[ExperimentReport]) -> Dict[str, List[Optional[float]]]:

    series = {"plug-in Chebyshev bound": [r.contrast.chebyshev_bound for r in reports],
              "empirical P(Z > 0)": [r.contrast.empirical_p_z_gt_0.value for r in reports]}
    if all(r.contrast_exact is not None for r in reports):
        series["exact Chebyshev bound"] = [r.contrast_exact["chebyshev_bound"] for r in reports]

    return series


def emit_sweep_plots(reports: Sequence[ExperimentReport], out_dir: str) -> str:
    """ Chebyshev bound and empirical P(Z > 0) against dimension over a sweep.

    Args:
        reports (list[ExperimentReport]): one report per swept dimension.
        out_dir (str): destination directory.

    Returns:
        (str): the written path.
    """

    if not reports:
        raise DataError("cannot plot an empty sweep")
    _make_dir(out_dir)

    reports = sorted(reports, key=lambda r: r.dim)
    path = os.path.join(out_dir, "bound_vs_dim.svg")
    fig, _ = line_plot(_bound_series(reports), x_val=[r.dim for r in reports], show=False, print_out=True,
                       file_name=path, title="P(Z > 0) against dimension", xlabel="dimension",
                       ylabel="probability", logx=True)
    plt.close(fig)

    return path
