import math
from typing import Tuple

from scipy.stats import norm


def wilson_interval(successes: int, total: int, alpha: float = 0.05) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        return (0.0, 1.0)
    z = float(norm.ppf(1.0 - alpha / 2.0))
    p = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2.0 * total)) / denom
    margin = (z * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total))) / denom
    # clamp so that low <= p <= high survives roundoff at p in {0, 1}
    low = min(max(0.0, center - margin), p)
    high = max(min(1.0, center + margin), p)
    return (low, high)
