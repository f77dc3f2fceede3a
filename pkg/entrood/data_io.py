"""
Dataset ingestion and export: IDX image files (MNIST family),
subsampling, and CSV export of scores and report records.
"""

import csv
import gzip
import os
import struct
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from entrood.detectors import ScoreSet
from entrood.distributions import COUNTING, Dataset, Provenance
from entrood.errors import DataError
from entrood.seeding import check_seed, substream

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

FLOAT_FORMAT = "%#.9g"
SCORE_HEADER = ("index", "score", "detector_id")


@dataclass(frozen=True)
class ImageDatasetSpec:
    """ Location and expected shape of an IDX image file. """

    path: str
    expected_dims: Optional[Tuple[int, int]] = (28, 28)
    label_path: Optional[str] = None
    split: str = "train"

    def __post_init__(self) -> None:

        if self.split not in ("train", "test"):
            raise DataError("split must be train or test, got {!r}".format(self.split))


def _open(path: str, mode: str):

    return gzip.open(path, mode) if str(path).endswith(".gz") else open(path, mode)


def _read_idx(path: str, magic: int) -> np.ndarray:
    """ Parse an unsigned-byte IDX file into an array of its declared shape. """

    try:
        with _open(path, "rb") as f:
            raw = f.read()
    except OSError as err:
        logger.error("Could not read IDX file {}.".format(path))
        raise DataError("could not read {}: {}".format(path, err))

    if len(raw) < 4:
        raise DataError("{}: truncated IDX file at byte offset {} (no magic number)".format(path, len(raw)))
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        logger.error("Bad magic number in {}.".format(path))
        raise DataError("{}: bad magic number, expected 0x{:08x}, found 0x{:08x}".format(path, magic, found))

    n_dims = magic & 0xFF
    offset = 4 + 4 * n_dims
    if len(raw) < offset:
        raise DataError("{}: truncated IDX header at byte offset {}, expected {} bytes".format(
            path, len(raw), offset))
    shape = struct.unpack(">{}I".format(n_dims), raw[4:offset])

    end = offset + int(np.prod(shape, dtype=np.int64))
    if len(raw) < end:
        logger.error("IDX file {} is truncated.".format(path))
        raise DataError("{}: truncated IDX data at byte offset {}, expected {} bytes".format(
            path, len(raw), end))

    return np.frombuffer(raw, dtype=np.uint8, count=end - offset, offset=offset).reshape(shape)


def load_idx(spec: Union[ImageDatasetSpec, str]) -> Dataset:
    """ Load an IDX image tensor (and optional labels) as counting-measure data.

    Args:
        spec (ImageDatasetSpec or str): the file spec, or a bare path.

    Returns:
        (Dataset): n x (rows * cols) pixel codes in [0, 255].
    """

    if isinstance(spec, str):
        spec = ImageDatasetSpec(spec, expected_dims=None)

    images = _read_idx(spec.path, IMAGES_MAGIC)
    if spec.expected_dims is not None and tuple(images.shape[1:]) != tuple(spec.expected_dims):
        logger.error("Unexpected image size in {}.".format(spec.path))
        raise DataError("{}: images are {}x{}, expected {}x{}".format(
            spec.path, images.shape[1], images.shape[2], *spec.expected_dims))

    labels = None
    if spec.label_path is not None:
        labels = _read_idx(spec.label_path, LABELS_MAGIC)
        if labels.shape[0] != images.shape[0]:
            raise DataError("{} has {} labels for {} images".format(spec.label_path, labels.shape[0],
                                                                    images.shape[0]))

    data = Dataset(images.reshape(images.shape[0], -1).astype(np.int64), COUNTING,
                   Provenance("idx({}, split={})".format(os.path.basename(spec.path), spec.split)),
                   labels)
    logger.info("Loaded {:d} images of {}x{} from {}.".format(data.n, images.shape[1], images.shape[2],
                                                              spec.path))

    return data


def write_idx(points: np.ndarray, shape: Optional[Sequence[int]], path: str) -> str:
    """ Write unsigned bytes in IDX format, gzipped when path ends in .gz.

    Args:
        points (array): (n, rows * cols) or (n, rows, cols) images, or (n,) labels.
        shape (tuple[int, int]): image rows and columns, None for labels.
        path (str): destination.

    Returns:
        (str): the written path.
    """

    points = np.asarray(points)
    if points.size and (points.min() < 0 or points.max() > 255 or np.any(np.mod(points, 1) != 0)):
        raise DataError("IDX unsigned-byte data must be integers in [0, 255]")

    if shape is None:
        magic, dims = LABELS_MAGIC, (points.shape[0],)
    else:
        magic, dims = IMAGES_MAGIC, (points.shape[0],) + tuple(int(s) for s in shape)
    body = points.astype(np.uint8).reshape(dims)

    payload = struct.pack(">{}I".format(len(dims) + 1), magic, *dims) + body.tobytes()
    try:
        if path.endswith(".gz"):
            with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as f:
                f.write(payload)
        else:
            with open(path, "wb") as f:
                f.write(payload)
    except OSError as err:
        raise DataError("could not write {}: {}".format(path, err))

    return path


def subsample(data: Dataset, n: int, seed: int) -> Dataset:
    """ Uniform subsample without replacement.

    Args:
        data (Dataset): the source dataset.
        n (int): number of rows to keep, n <= data.n.
        seed (int): root seed.

    Returns:
        (Dataset): the subsample, provenance chained.
    """

    if not 0 <= int(n) <= data.n:
        logger.error("Cannot draw {} rows out of {}.".format(n, data.n))
        raise DataError("subsample size {} exceeds dataset size {}".format(n, data.n))
    seed = check_seed(seed)

    idx = substream(seed).choice(data.n, size=int(n), replace=False)
    labels = data.labels[idx] if data.labels is not None else None

    return Dataset(data.points[idx], data.measure,
                   data.provenance.chain("subsample(n={})".format(n), seed), labels)


def _format(value: Any) -> str:

    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    if value is None:
        return ""

    return str(value)


def export_csv(records: Union[ScoreSet, Sequence[Dict[str, Any]]], path: str,
               fieldnames: Optional[Sequence[str]] = None) -> str:
    """ Write scores or report records as CSV, floats with 9 significant digits.

    Args:
        records (ScoreSet or list[dict]): a ScoreSet (one row per score) or
            flat records sharing the same keys.
        path (str): destination.
        fieldnames (list[str]): column order for records, defaults to the
            keys of the first record.

    Returns:
        (str): the written path.
    """

    if isinstance(records, ScoreSet):
        header = SCORE_HEADER
        rows = [(i, float(s), records.detector_id) for i, s in enumerate(records.scores)]
    else:
        records = list(records)
        if fieldnames is None:
            if not records:
                raise DataError("cannot infer CSV columns from an empty record list")
            fieldnames = list(records[0])
        header = tuple(fieldnames)
        rows = [tuple(r.get(k) for k in header) for r in records]

    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows([_format(v) for v in row] for row in rows)
    except OSError as err:
        logger.error("Could not write CSV to {}.".format(path))
        raise DataError("could not write {}: {}".format(path, err))
    logger.debug("Wrote {:d} rows to {}.".format(len(rows), path))

    return path


def read_scores_csv(path: str) -> ScoreSet:
    """ Read a ScoreSet written by export_csv.

    Args:
        path (str): the CSV file.

    Returns:
        (ScoreSet): the scores in file order.
    """

    try:
        with open(path, newline="") as f:
            rows: List[Dict[str, str]] = list(csv.DictReader(f))
    except OSError as err:
        raise DataError("could not read {}: {}".format(path, err))

    if rows and set(rows[0]) != set(SCORE_HEADER):
        raise DataError("{}: expected columns {}".format(path, ", ".join(SCORE_HEADER)))

    detector_id = rows[0]["detector_id"] if rows else os.path.splitext(os.path.basename(path))[0]

    return ScoreSet(np.array([float(r["score"]) for r in rows], dtype=np.float64), detector_id,
                    provenance="csv({})".format(os.path.basename(path)))
