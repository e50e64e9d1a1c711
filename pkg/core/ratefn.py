"""
Long-queue decay rates for JSQ started from all queues of length one (critical load).

Filling level k+1 from empty to full in time s costs s * V(1/s), where
V(c) = inf{ l(a) + l(b) : a - b = c } is the cheapest way to tilt the unit arrival and
service streams so that their difference is c. Splitting [0, T] evenly among the j - 2 levels
is optimal by convexity, which gives T * V((j - 2) / T).
"""
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

from core.skorokhod import GridPath
from utils.logger import ratefn_logger
from utils.schemas import ControlPolicy, VariationalInstance

UNDERFLOW = 1e-300
DEFAULT_RESTARTS = 32
BOUNDARY_TOL = 1e-8


def ell(z):
    """l(z) = z log z - z + 1 with l(0) = 1. Accepts scalars or arrays."""
    arr = np.asarray(z, dtype=float)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise ValueError(f"l(z) needs z >= 0, got {z}")
    out = np.where(arr < UNDERFLOW, 1.0, xlogy(arr, arr) - arr + 1.0)
    return float(out) if out.ndim == 0 else out


def two_rate_min(c: float) -> Tuple[float, float, float]:
    """
    Minimizer of l(a) + l(b) subject to a - b = c: a = (c + sqrt(c^2 + 4)) / 2 and b = 1 / a.
    """
    if c < 0.0:
        raise ValueError(f"two_rate_min needs c >= 0, got {c}")
    root = math.sqrt(c * c + 4.0)
    a = (c + root) / 2.0
    # 1/a avoids the cancellation in (root - c) / 2 for large c
    b = 2.0 / (c + root)
    return a, b, ell(a) + ell(b)


def decay_rate(j: int, T: float) -> float:
    """T * V((j - 2) / T): exponential decay rate of P(some queue reaches length j by T)."""
    if j < 3:
        raise ValueError(f"decay rate is defined for j >= 3, got {j}")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    return T * two_rate_min((j - 2) / T)[2]


def large_T_limit(j: int, T: float) -> float:
    """(j - 2)^2 / (4T), the leading behaviour of decay_rate for long horizons."""
    return (j - 2) ** 2 / (4.0 * T)


def optimal_path(j: int, T: float) -> Tuple[ControlPolicy, Callable[[int, np.ndarray], np.ndarray]]:
    """
    Constant control phi_0 = a, rho_k = b (k <= j) driving zeta_k(t) = 0 v (a_j t - (k - 2)) ^ 1
    with a_j = (j - 2) / T.
    """
    if j < 3:
        raise ValueError(f"optimal path is defined for j >= 3, got {j}")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    a_j = (j - 2) / T
    a, b, _ = two_rate_min(a_j)
    control = ControlPolicy.constant(T, phi0=a, rho=[b] * j)

    def zeta(k: int, t) -> np.ndarray:
        return np.clip(a_j * np.asarray(t, dtype=float) - (k - 2), 0.0, 1.0)

    return control, zeta


def lln_fixed_point(lam: float, M: int) -> np.ndarray:
    """Zero-cost stationary profile (lambda, 0, 0, ...) for lambda <= 1."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"fixed point (lambda, 0, ...) needs lambda in [0, 1], got {lam}")
    out = np.zeros(M)
    out[0] = lam
    return out


def segment_cost(length: float) -> float:
    return length * two_rate_min(1.0 / length)[2]


def partition_cost(j: int, T: float, lengths: Sequence[float]) -> float:
    """Objective of the variational search for segment lengths summing to T."""
    if len(lengths) != j - 2:
        raise ValueError(f"j={j} needs {j - 2} segments, got {len(lengths)}")
    if any(s <= 0.0 for s in lengths):
        raise ValueError("segment lengths must be positive")
    if abs(sum(lengths) - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"segment lengths sum to {sum(lengths)}, expected {T}")
    return float(sum(segment_cost(s) for s in lengths))


def make_instance(j: int, T: float, lengths: Sequence[float]) -> VariationalInstance:
    tau = [0.0]
    for s in lengths[:-1]:
        tau.append(tau[-1] + s)
    tau.append(T)
    theta = [1.0 / s for s in lengths]
    rates = [two_rate_min(th)[:2] for th in theta]
    return VariationalInstance(j=j, T=T, partition=tau, theta=theta, rates=rates)


def _pair_descent(lengths: np.ndarray, T: float, refine: int, tol: float = 1e-13) -> np.ndarray:
    """
    Coordinate descent over pairs of segments: each move shifts time between two segments,
    keeping the sum at T, and minimizes their joint cost exactly in one dimension.
    """
    m = lengths.size
    floor = 1e-12 * T
    for _ in range(refine):
        moved = 0.0
        for i in range(m):
            for k in range(i + 1, m):
                pool = lengths[i] + lengths[k]
                res = minimize_scalar(
                    lambda s: segment_cost(s) + segment_cost(pool - s),
                    bounds=(floor, pool - floor), method="bounded",
                    options={"xatol": 1e-12 * max(1.0, pool)},
                )
                moved = max(moved, abs(res.x - lengths[i]))
                lengths[i], lengths[k] = res.x, pool - res.x
        if moved < tol * T:
            break
    return lengths


def variational_search(j: int, T: float, refine: int = 50, restarts: int = DEFAULT_RESTARTS,
                       seed: int = 0) -> Tuple[VariationalInstance, float]:
    """
    Minimize the partition cost over 0 = tau_1 < ... < tau_{j-1} = T from random feasible
    starts. The result certifies numerically that no partition beats decay_rate(j, T).
    """
    if j < 3:
        raise ValueError(f"variational search needs j >= 3, got {j}")
    if refine < 1:
        raise ValueError("refine budget must be at least 1")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    m = j - 2
    if m == 1:
        return make_instance(j, T, [T]), segment_cost(T)

    rng = np.random.Generator(np.random.Philox(seed))
    best_lengths: Optional[np.ndarray] = None
    best_value = math.inf
    for _ in range(max(1, restarts)):
        start = rng.dirichlet(np.ones(m)) * T
        lengths = _pair_descent(start, T, refine)
        lengths[-1] = T - lengths[:-1].sum()
        value = partition_cost(j, T, lengths.tolist())
        if value < best_value:
            best_value, best_lengths = value, lengths.copy()

    closed = decay_rate(j, T)
    ratefn_logger.log(f"variational search j={j} T={T}: best {best_value:.12g} vs closed form {closed:.12g}")
    return make_instance(j, T, best_lengths.tolist()), best_value


def hitting_times(zeta: GridPath, j: int, tol: float = BOUNDARY_TOL) -> List[float]:
    """tau_i = first mesh time with zeta_i >= 1 - tol, i = 1..j-1 (inf if never)."""
    out = []
    for i in range(1, j):
        hits = np.flatnonzero(zeta.coordinate(i) >= 1.0 - tol)
        out.append(float(zeta.times[hits[0]]) if hits.size else math.inf)
    return out


def instance_from_path(j: int, T: float, zeta: GridPath, tol: float = BOUNDARY_TOL) -> Tuple[VariationalInstance, float]:
    """
    Partition read off a fluid path's boundary hitting times, with the per-segment Lagrange pairs
    and the lower bound sum_i (tau_{i+1} - tau_i) V(theta_i) on the path's cost.
    """
    tau = hitting_times(zeta, j, tol)
    if tau[0] != 0.0 or not all(math.isfinite(t) for t in tau):
        raise ValueError("path must start full at level 1 and reach level j - 1 by T")
    tau[-1] = T
    lengths = [b - a for a, b in zip(tau, tau[1:])]
    return make_instance(j, T, lengths), partition_cost(j, T, lengths)


def rate_report(j: int, T: float) -> Dict[str, float]:
    a_j = (j - 2) / T
    a, b, _ = two_rate_min(a_j)
    return {
        "j": j,
        "T": T,
        "a_j": a_j,
        "a": a,
        "b": b,
        "rate": decay_rate(j, T),
        "large_T_limit": large_T_limit(j, T),
    }
