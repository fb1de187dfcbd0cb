"""
Parallel Utilities

Counter-based per-trial seeds and a process pool for independent trials.
"""

import logging
from multiprocessing import Pool
from typing import Callable, List, Sequence, TypeVar

import numpy as np

T = TypeVar('T')
R = TypeVar('R')


def derive_seed(master_seed: int, cell: int, trial: int) -> int:
    """
    64-bit seed for (cell, trial), independent of execution order.

    Args:
        master_seed: experiment master seed
        cell: index of the grid cell in enumeration order
        trial: trial index within the cell

    Returns:
        int: seed usable with numpy.random.default_rng
    """
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(cell), int(trial)))
    return int(sequence.generate_state(1, np.uint64)[0])


def map_tasks(worker: Callable[[T], R], tasks: Sequence[T], jobs: int = 1) -> List[R]:
    """
    Apply worker to every task, in a process pool when jobs > 1.

    Results come back in task order. The worker must be a module-level function.
    """
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    processes = min(jobs, len(tasks))
    logging.info(f"Dispatching {len(tasks)} tasks to {processes} workers")
    with Pool(processes=processes) as pool:
        return pool.map(worker, tasks)

