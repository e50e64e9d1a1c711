"""
Skorokhod problem for the infinite reflection matrix with domain (-inf, cap] per coordinate,
solved on a shared time mesh.

Coordinate k is reflected in one dimension after adding the previous coordinate's reflection
term: phi_k = psi_k + eta_{k-1} - eta_k, eta_0 = 0. The first m coordinates of a solution do not
depend on coordinates beyond m, so truncating to M tracked coordinates is exact for them.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.errors import DomainError, MeshMismatchError
from utils.logger import skorokhod_logger

DEFAULT_TOL_COMP = 1e-9


@dataclass(frozen=True)
class GridPath:
    """Multi-coordinate path on a time mesh. values[k - 1] holds coordinate k."""
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values)
        if values.ndim == 1:
            values = values[np.newaxis, :]
        if times.ndim != 1 or times.size == 0:
            raise DomainError("empty mesh")
        if values.ndim != 2 or values.shape[1] != times.size:
            raise MeshMismatchError(f"values shape {values.shape} does not match {times.size} mesh points")
        if values.shape[0] < 1:
            raise ValueError("a GridPath needs at least one coordinate")
        if times[0] != 0.0:
            raise DomainError(f"mesh must start at 0, got {times[0]}")
        if times.size > 1 and not np.all(np.diff(times) > 0.0):
            raise DomainError("mesh must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def coordinate(self, k: int) -> np.ndarray:
        """Coordinate k (1-based); coordinates beyond M are identically 0."""
        if k < 1:
            raise IndexError(f"coordinates start at 1, got {k}")
        if k > self.M:
            return np.zeros_like(self.times, dtype=self.values.dtype)
        return self.values[k - 1]

    def head(self, m: int) -> "GridPath":
        return GridPath(self.times, self.values[:m])

    def same_mesh(self, other: "GridPath") -> bool:
        return self.times.shape == other.times.shape and np.array_equal(self.times, other.times)

    def to_frame(self, prefix: str = "x") -> pd.DataFrame:
        """Column 0 is time, columns 1..M the coordinates."""
        frame = pd.DataFrame({"time": self.times})
        for k in range(1, self.M + 1):
            frame[f"{prefix}{k}"] = self.values[k - 1]
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "GridPath":
        times = frame.iloc[:, 0].to_numpy(dtype=float)
        values = frame.iloc[:, 1:].to_numpy().T
        return cls(times, values)

    def to_csv(self, path: str, prefix: str = "x") -> None:
        self.to_frame(prefix).to_csv(path, index=False, float_format="%.12g")

    @classmethod
    def read_csv(cls, path: str) -> "GridPath":
        return cls.from_frame(pd.read_csv(path))

    def to_records(self) -> List[Dict[str, Any]]:
        return [
            {"time": float(t), "values": self.values[:, i].tolist()}
            for i, t in enumerate(self.times)
        ]

    @classmethod
    def from_records(cls, records: Sequence[Dict[str, Any]]) -> "GridPath":
        times = [r["time"] for r in records]
        values = np.array([r["values"] for r in records]).T
        return cls(np.asarray(times, dtype=float), values)


@dataclass(frozen=True)
class SPSolution:
    phi: GridPath
    eta: GridPath

    @property
    def M(self) -> int:
        return self.phi.M


def reflect_1d(psi: Sequence[float], cap: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    One-dimensional reflection below `cap` in running-maximum form:
    eta(t) = max_{s <= t} (psi(s) - cap)^+, phi = psi - eta.
    Integer inputs with an integer cap stay in exact integer arithmetic.
    """
    psi = np.asarray(psi)
    if psi.size == 0:
        raise DomainError("empty mesh")
    if psi[0] > cap:
        raise DomainError(f"initial point {psi[0]} outside domain (-inf, {cap}]")
    excess = np.maximum(psi - cap, 0)
    eta = np.maximum.accumulate(excess)
    return psi - eta, eta


def solve_sp(psi: GridPath, cap: float = 1.0) -> SPSolution:
    """Sequential construction: (phi_k, eta_k) = reflect_1d(psi_k + eta_{k-1})."""
    phi = np.empty_like(psi.values)
    eta = np.empty_like(psi.values)
    carry = np.zeros_like(psi.times, dtype=psi.values.dtype)
    for k in range(psi.M):
        try:
            phi[k], eta[k] = reflect_1d(psi.values[k] + carry, cap)
        except DomainError as e:
            skorokhod_logger.log(f"ERROR: Skorokhod input rejected at coordinate {k + 1}: {e}")
            raise DomainError(str(e), coordinate=k + 1) from e
        carry = eta[k]
    return SPSolution(GridPath(psi.times, phi), GridPath(psi.times, eta))


def sup_distance(a: GridPath, b: GridPath) -> float:
    """sum_k 2^{-k} max_t |a_k(t) - b_k(t)| over the coordinates both paths carry."""
    if not a.same_mesh(b):
        raise MeshMismatchError("sup_distance needs both paths on the same mesh")
    m = min(a.M, b.M)
    gaps = np.max(np.abs(a.values[:m] - b.values[:m]), axis=1)
    weights = 0.5 ** np.arange(1, m + 1)
    return float(np.dot(weights, gaps))


def complementarity_residual(solution: SPSolution, cap: float = 1.0) -> np.ndarray:
    """Per coordinate sum over steps of (cap - phi_k) * d eta_k at the step's right endpoint."""
    d_eta = np.diff(solution.eta.values, axis=1)
    slack = cap - solution.phi.values[:, 1:]
    return np.sum(slack * d_eta, axis=1)


def complementarity_violations(psi: GridPath, solution: SPSolution, cap: float = 1.0,
                               tol_comp: float = DEFAULT_TOL_COMP) -> List[Tuple[int, int]]:
    """
    (coordinate, step) pairs breaking the discrete SP conditions: phi above cap, eta
    decreasing or nonzero at 0, eta growing while phi is off the boundary, or the identity
    phi_k = psi_k + eta_{k-1} - eta_k failing.
    """
    bad: List[Tuple[int, int]] = []
    phi, eta = solution.phi.values, solution.eta.values
    prev_eta = np.zeros_like(psi.times)
    for k in range(solution.M):
        for step in np.flatnonzero(phi[k] > cap + tol_comp):
            bad.append((k + 1, int(step)))
        if eta[k][0] != 0:
            bad.append((k + 1, 0))
        d_eta = np.diff(eta[k])
        for step in np.flatnonzero(d_eta < 0):
            bad.append((k + 1, int(step) + 1))
        grows = d_eta > tol_comp
        off = np.abs(phi[k][1:] - cap) > tol_comp
        for step in np.flatnonzero(grows & off):
            bad.append((k + 1, int(step) + 1))
        gap = np.abs(phi[k] - (psi.values[k] + prev_eta - eta[k]))
        for step in np.flatnonzero(gap > tol_comp):
            bad.append((k + 1, int(step)))
        prev_eta = eta[k]
    return sorted(set(bad))
