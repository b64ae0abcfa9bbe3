import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

THREADS_ENV = "TTCLOCK_THREADS"

Item = TypeVar("Item")
Result = TypeVar("Result")


def get_optional_env_int(value: Optional[str]) -> Optional[int]:
    if value is None:
        return None

    normalized_value = value.strip()
    if not normalized_value:
        return None

    try:
        parsed_value = int(normalized_value)
    except ValueError:
        print(f"Warning: invalid integer env value '{value}', ignoring limit", file=sys.stderr)
        return None

    if parsed_value < 0:
        print(f"Warning: negative integer env value '{value}', ignoring limit", file=sys.stderr)
        return None

    return parsed_value


def resolve_worker_count(item_count: int) -> int:
    """Workers for `item_count` tasks; TTCLOCK_THREADS caps it, 0 or unset means one per CPU."""
    limit = get_optional_env_int(os.getenv(THREADS_ENV))
    available = os.cpu_count() or 1
    if limit:
        available = min(available, limit)
    return max(1, min(available, item_count))


def ordered_map(
    function: Callable[[Item], Result],
    items: Iterable[Item],
    workers: Optional[int] = None,
) -> List[Result]:
    """Map over a process pool, returning results in input order."""
    items = list(items)
    if workers is None:
        workers = resolve_worker_count(len(items))
    if workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]

    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(function, items))
