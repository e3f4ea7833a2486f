from decimal import ROUND_HALF_UP, Decimal
from concurrent.futures import ThreadPoolExecutor


def round_half_up(value: float, digits: int = 1) -> float:
    """Round like the published tables do (0.05 -> 0.1), not banker's rounding."""
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


def parallel_map(func, items, threads: int = 1):
    """Order-preserving map; runs inline when threads == 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def format_size(n_bytes: float) -> str:
    """kB / MB with a 1024 base, two decimals."""
    kb = n_bytes / 1024
    if kb >= 1024:
        return f"{kb / 1024:.2f} MB"
    return f"{kb:.2f} kB"
