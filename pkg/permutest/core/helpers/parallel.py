import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from dotenv import load_dotenv

from permutest.utils.load_yaml import load_config

load_dotenv()  # PERMUTEST_THREADS may come from a local .env file

config = load_config("general")["cli_configs"]

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """
    Number of worker threads to use: the CPU count, capped by the
    PERMUTEST_THREADS environment variable when it is set to a positive integer.
    """
    workers = os.cpu_count() or 1
    raw = os.getenv(config["threads_env_var"])
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            cap = 0
        if cap >= 1:
            workers = min(workers, cap)
    return max(workers, 1)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = None) -> List[R]:
    """
    Order-preserving map over a thread pool.

    Every item must carry its own randomness (an RngStream or pre-drawn
    indices) so that the result does not depend on the schedule.
    """
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))
