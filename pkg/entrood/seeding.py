"""
Seeded random streams and chunked execution.

All randomness in entrood flows from a root seed through counter-based
Philox substreams. Work is split in fixed-size chunks, each chunk owning
its own substream, so results do not depend on how many workers run them.
"""

import hashlib
import multiprocessing
from multiprocessing.pool import ThreadPool
from typing import Callable, List, Sequence, TypeVar

import numpy as np
from loguru import logger

from entrood.errors import ConfigError

CHUNK_SIZE = 8192
GENERATOR_ID = "numpy.random.Philox/numpy-{}".format(np.__version__)

T = TypeVar("T")


def check_seed(seed: int) -> int:
    """ Validate a root seed.

    Args:
        seed (int): the seed, must be an integer in [0, 2**64).

    Returns:
        (int): the validated seed.

    Raises:
        ConfigError: if the seed is not a valid 64-bit unsigned integer.
    """

    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        logger.error("Seeds must be integers, got {}.".format(type(seed).__name__))
        raise ConfigError("seed must be an integer, got {!r}".format(seed))
    if not 0 <= int(seed) < 2 ** 64:
        logger.error("Seed {} outside of the 64-bit unsigned range.".format(seed))
        raise ConfigError("seed must be in [0, 2**64), got {}".format(seed))

    return int(seed)


def substream(seed: int, *stream: int) -> np.random.Generator:
    """ Build the generator of a given substream.

    Args:
        seed (int): root seed.
        stream (int): stream indices, hashed together with the root seed.

    Returns:
        (np.random.Generator): a Philox generator for the substream.
    """

    sequence = np.random.SeedSequence(entropy=check_seed(seed),
                                      spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, label: str) -> int:
    """ Derive a labelled child seed from a root seed.

    Args:
        seed (int): root seed.
        label (str): name of the consumer (e.g. "contrast", "fit").

    Returns:
        (int): a 64-bit seed, a deterministic function of (seed, label).
    """

    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    words = np.frombuffer(digest, dtype=">u4").astype(np.uint64).tolist()
    sequence = np.random.SeedSequence(entropy=[check_seed(seed)] + words)

    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def chunk_bounds(n: int, chunk_size: int = CHUNK_SIZE) -> List[range]:
    """ Split n rows in consecutive fixed-size chunks.

    Args:
        n (int): number of rows.
        chunk_size (int): rows per chunk, the last chunk may be shorter.

    Returns:
        (list[range]): the row ranges.
    """

    return [range(start, min(start + chunk_size, n))
            for start in range(0, n, chunk_size)]


def _n_workers(workers: int) -> int:
    """ Resolve the requested number of workers.

    Args:
        workers (int): requested workers, -1 to use all CPUs.

    Returns:
        (int): the number of workers to start.
    """

    if workers is None or workers == 0:
        return 1
    if workers < 0:
        try:
            return multiprocessing.cpu_count()
        except NotImplementedError:
            logger.warning("Could not count the CPU processors, running on a single worker.")
            return 1

    return int(workers)


def run_chunks(func: Callable[[int], T], n_chunks: int, workers: int = 1) -> List[T]:
    """ Run func on every chunk index and return results in chunk order.

    Args:
        func (Callable): function of the chunk index.
        n_chunks (int): number of chunks.
        workers (int): number of threads, -1 for all CPUs.

    Returns:
        (list): func(0), ..., func(n_chunks - 1).
    """

    n_workers = min(_n_workers(workers), max(n_chunks, 1))
    if n_workers <= 1:
        return [func(i) for i in range(n_chunks)]

    with ThreadPool(n_workers) as pool:
        return pool.map(func, range(n_chunks))


def map_chunks(func: Callable[[np.ndarray], np.ndarray], data: np.ndarray,
               workers: int = 1, chunk_size: int = CHUNK_SIZE) -> np.ndarray:
    """ Apply a row-wise function over fixed-size chunks of data.

    Args:
        func (Callable): maps an (m, d) array to an (m,) array.
        data (array): (n, d) input rows.
        workers (int): number of threads.
        chunk_size (int): rows per chunk.

    Returns:
        (array): the (n,) concatenated results.
    """

    bounds = chunk_bounds(data.shape[0], chunk_size)
    if not bounds:
        return np.empty(0, dtype=np.float64)

    parts = run_chunks(lambda i: np.asarray(func(data[bounds[i].start:bounds[i].stop]),
                                            dtype=np.float64),
                       len(bounds), workers)

    return np.concatenate(parts)


def concat_draws(draw: Callable[[np.random.Generator, int], np.ndarray], n: int,
                 seed: int, stream: Sequence[int] = (), workers: int = 1) -> List[np.ndarray]:
    """ Draw n rows chunk by chunk, each chunk from its own substream.

    Args:
        draw (Callable): draw(rng, m) returns m rows.
        n (int): total number of rows.
        seed (int): root seed.
        stream (tuple[int]): prefix of the substream key.
        workers (int): number of threads.

    Returns:
        (list[array]): per-chunk draws in chunk order.
    """

    bounds = chunk_bounds(n)

    return run_chunks(lambda i: draw(substream(seed, *stream, i), len(bounds[i])),
                      len(bounds), workers)
