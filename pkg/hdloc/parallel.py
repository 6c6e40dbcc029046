import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from .exceptions import InvalidInputError

logger = logging.getLogger(__name__)

T = TypeVar("T")


def map_replications(func: Callable[[int], T], indices: Iterable[int], parallelism: int = 1) -> List[T]:
    """
    Apply ``func`` to every replication index and return results in index order.

    With ``parallelism > 1`` the calls run in a process pool, so ``func`` must
    be picklable (a module-level function or a ``functools.partial`` of one).
    Results never depend on the worker count as long as ``func`` seeds from
    its index.
    """
    if int(parallelism) != parallelism or parallelism < 1:
        raise InvalidInputError(f"parallelism must be a positive integer, got {parallelism}")
    indices = list(indices)
    if parallelism == 1 or len(indices) < 2:
        return [func(index) for index in indices]
    workers = min(int(parallelism), len(indices))
    chunksize = max(1, len(indices) // (4 * workers))
    logger.info("Running %d replications on %d workers", len(indices), workers)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, indices, chunksize=chunksize))
