import math
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.errors import ControlLookupError

Policy = Literal["jsq", "jiq", "controlled"]

# Relative slack when comparing times against mesh endpoints.
TIME_TOL = 1e-12


class InitialOccupancy(BaseModel):
    """Occupancy fractions x_1 >= x_2 >= ... (fraction of queues holding at least i jobs)."""
    x: List[float] = []

    @field_validator("x")
    @classmethod
    def _ordered(cls, x: List[float]) -> List[float]:
        prev = 1.0
        for i, v in enumerate(x, start=1):
            if not math.isfinite(v) or v < 0.0 or v > 1.0:
                raise ValueError(f"x_{i} = {v} outside [0, 1]")
            if v > prev:
                raise ValueError(f"occupancy must be nonincreasing: x_{i} = {v} > x_{i - 1} = {prev}")
            prev = v
        while x and x[-1] == 0.0:
            x = x[:-1]
        return x

    @classmethod
    def empty(cls) -> "InitialOccupancy":
        return cls(x=[])

    @classmethod
    def ones(cls) -> "InitialOccupancy":
        return cls(x=[1.0])

    @classmethod
    def parse(cls, spec: Union[str, List[float], "InitialOccupancy"]) -> "InitialOccupancy":
        if isinstance(spec, InitialOccupancy):
            return spec
        if isinstance(spec, str):
            key = spec.strip().lower()
            if key in ("empty", "zero", "zeros"):
                return cls.empty()
            if key in ("ones", "one"):
                return cls.ones()
            return cls(x=[float(v) for v in key.split(",") if v.strip()])
        return cls(x=list(spec))

    @property
    def support(self) -> int:
        return len(self.x)

    def to_counts(self, n: int) -> List[int]:
        counts = []
        for i, v in enumerate(self.x, start=1):
            c = round(v * n)
            if abs(c - v * n) > 1e-9 * max(1, n):
                raise ValueError(f"x_{i} = {v} is not a multiple of 1/{n}")
            counts.append(int(c))
        return counts

    def as_array(self, M: int) -> np.ndarray:
        out = np.zeros(M)
        k = min(M, len(self.x))
        out[:k] = self.x[:k]
        return out


class ControlPolicy(BaseModel):
    """
    Piecewise-constant control on mesh[0] = 0 < ... < mesh[-1] = T.
    Segment s carries the arrival control phi0[s] and service controls rho[s][k-1], k = 1..M_c;
    coordinates beyond M_c use 1.
    """
    mesh: List[float]
    phi0: List[float]
    rho: List[List[float]] = []

    @model_validator(mode="after")
    def _check(self) -> "ControlPolicy":
        mesh = self.mesh
        if len(mesh) < 2:
            raise ValueError("control mesh needs at least two breakpoints")
        if mesh[0] != 0.0:
            raise ValueError(f"control mesh must start at 0, got {mesh[0]}")
        for a, b in zip(mesh, mesh[1:]):
            if not b > a:
                raise ValueError(f"control mesh must be strictly increasing ({a} -> {b})")
        segments = len(mesh) - 1
        if len(self.phi0) != segments:
            raise ValueError(f"phi0 has {len(self.phi0)} values for {segments} segments")
        rho = self.rho or [[] for _ in range(segments)]
        if len(rho) != segments:
            raise ValueError(f"rho has {len(rho)} rows for {segments} segments")
        for s, (p, row) in enumerate(zip(self.phi0, rho)):
            for v in [p, *row]:
                if not math.isfinite(v) or v < 0.0:
                    raise ValueError(f"segment {s}: control values must be finite and >= 0, got {v}")
        width = max((len(row) for row in rho), default=0)
        rho = [list(row) + [1.0] * (width - len(row)) for row in rho]
        # Merge equal consecutive segments so "identically 1" has a single canonical form
        merged_mesh, merged_phi0, merged_rho = [mesh[0]], [], []
        for s in range(segments):
            if merged_phi0 and self.phi0[s] == merged_phi0[-1] and rho[s] == merged_rho[-1]:
                merged_mesh[-1] = mesh[s + 1]
                continue
            merged_mesh.append(mesh[s + 1])
            merged_phi0.append(self.phi0[s])
            merged_rho.append(rho[s])
        # trailing unit columns carry no information
        while merged_rho and merged_rho[0] and all(row[-1] == 1.0 for row in merged_rho):
            merged_rho = [row[:-1] for row in merged_rho]
        self.__dict__["mesh"] = merged_mesh
        self.__dict__["phi0"] = merged_phi0
        self.__dict__["rho"] = merged_rho
        return self

    @classmethod
    def constant(cls, T: float, phi0: float = 1.0, rho: Optional[List[float]] = None) -> "ControlPolicy":
        return cls(mesh=[0.0, T], phi0=[phi0], rho=[list(rho or [])])

    @classmethod
    def null(cls, T: float) -> "ControlPolicy":
        return cls.constant(T)

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "ControlPolicy":
        """
        Accepts {"mesh": [...], "segments": [{"phi0": v, "rho": [...]}, ...]} or the field layout
        {"mesh": [...], "phi0": [...], "rho": [[...], ...]}.
        """
        if "segments" in doc:
            segments = doc["segments"]
            return cls(
                mesh=doc.get("mesh", []),
                phi0=[seg.get("phi0", 1.0) for seg in segments],
                rho=[seg.get("rho", []) for seg in segments],
            )
        return cls(**doc)

    def to_document(self) -> Dict[str, Any]:
        return {
            "mesh": list(self.mesh),
            "segments": [{"phi0": p, "rho": list(r)} for p, r in zip(self.phi0, self.rho)],
        }

    @property
    def horizon(self) -> float:
        return self.mesh[-1]

    @property
    def n_segments(self) -> int:
        return len(self.phi0)

    @property
    def n_coords(self) -> int:
        return len(self.rho[0]) if self.rho else 0

    @property
    def is_null(self) -> bool:
        return all(p == 1.0 for p in self.phi0) and self.n_coords == 0

    def segment_index(self, t: float) -> int:
        T = self.horizon
        if t < -TIME_TOL * max(1.0, T) or t > T + TIME_TOL * max(1.0, T):
            raise ControlLookupError(f"control lookup at t={t} outside [0, {T}]")
        s = int(np.searchsorted(self.mesh, t, side="right")) - 1
        return min(max(s, 0), self.n_segments - 1)

    def phi0_at(self, t: float) -> float:
        return self.phi0[self.segment_index(t)]

    def rho_matrix(self, M: int) -> np.ndarray:
        """(segments, M) service controls, padded with 1 beyond M_c."""
        out = np.ones((self.n_segments, M))
        k = min(M, self.n_coords)
        if k:
            out[:, :k] = np.asarray(self.rho, dtype=float)[:, :k]
        return out

    def last_active_coordinate(self) -> int:
        """Largest k with rho_k != 1 on some segment (0 if none)."""
        last = 0
        for row in self.rho:
            for k, v in enumerate(row, start=1):
                if v != 1.0:
                    last = max(last, k)
        return last


class SystemConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    n: int = Field(ge=1)
    lambda_n: float = Field(alias="lambda", ge=0.0)
    horizon_T: float = Field(alias="T", gt=0.0)
    init: InitialOccupancy = InitialOccupancy()
    policy: Policy = "jsq"
    control: Optional[ControlPolicy] = None
    max_level: int = Field(default=64, ge=2)

    @field_validator("init", mode="before")
    @classmethod
    def _parse_init(cls, v: Any) -> Any:
        if isinstance(v, (str, list)):
            return InitialOccupancy.parse(v)
        return v

    @model_validator(mode="after")
    def _check(self) -> "SystemConfig":
        if not math.isfinite(self.lambda_n):
            raise ValueError("lambda must be finite")
        self.init.to_counts(self.n)
        if self.init.support >= self.max_level:
            raise ValueError(f"initial occupancy reaches level {self.init.support} >= max_level={self.max_level}")
        if self.policy == "controlled":
            if self.control is None:
                raise ValueError("controlled policy requires a control")
            if self.control.horizon < self.horizon_T * (1.0 - TIME_TOL):
                raise ValueError(f"control horizon {self.control.horizon} shorter than T={self.horizon_T}")
        return self


EventKind = Literal["E", "G", "F", "CUSTOM"]


class RareEventSpec(BaseModel):
    """
    E_j: some queue reaches length >= j by T; G_j: X_j > 0 at some time; F_j: X_{j-1} = 1 at
    some time. CUSTOM carries a predicate on a recorded SamplePath.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: EventKind
    j: int = Field(default=1, ge=1)
    name: Optional[str] = None
    predicate: Optional[Callable[[Any], bool]] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _check(self) -> "RareEventSpec":
        if self.kind == "CUSTOM" and self.predicate is None:
            raise ValueError("CUSTOM events need a predicate")
        return self

    @classmethod
    def parse(cls, label: str) -> "RareEventSpec":
        label = label.strip()
        kind, level = label[:1].upper(), label[1:]
        if kind not in ("E", "G", "F") or not level.isdigit():
            raise ValueError(f"event label {label!r} must look like E3, G1 or F4")
        return cls(kind=kind, j=int(level))

    @property
    def label(self) -> str:
        if self.kind == "CUSTOM":
            return self.name or "CUSTOM"
        return f"{self.kind}{self.j}"


ESTIMATE_COLUMNS = ["n", "lambda", "T", "policy", "event", "p_hat", "ci_low", "ci_high",
                    "log_rate", "replications", "seed"]


class EstimateResult(BaseModel):
    n: int
    lam: float
    T: float
    policy: str
    event: str
    p_hat: float
    ci_low: float
    ci_high: float
    replications: int
    hits: int
    log_rate: float
    seed: int

    @model_validator(mode="after")
    def _check(self) -> "EstimateResult":
        if not 0.0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1.0:
            raise ValueError(f"inconsistent interval {self.ci_low} <= {self.p_hat} <= {self.ci_high}")
        if self.hits == 0 and self.log_rate != float("-inf"):
            raise ValueError("log_rate must be -inf when there are no hits")
        return self

    @property
    def log_rate_text(self) -> Union[float, str]:
        return "-inf" if self.log_rate == float("-inf") else self.log_rate

    def csv_row(self) -> Dict[str, Any]:
        return {
            "n": self.n, "lambda": self.lam, "T": self.T, "policy": self.policy,
            "event": self.event, "p_hat": self.p_hat, "ci_low": self.ci_low,
            "ci_high": self.ci_high, "log_rate": self.log_rate_text,
            "replications": self.replications, "seed": self.seed,
        }

    def to_json(self) -> Dict[str, Any]:
        out = self.model_dump()
        out["log_rate"] = self.log_rate_text
        return out


class VariationalInstance(BaseModel):
    """Partition 0 = tau_1 < ... < tau_{j-1} = T with segment speeds and Lagrange pairs."""
    j: int = Field(ge=3)
    T: float = Field(gt=0.0)
    partition: List[float]
    theta: List[float]
    rates: List[Tuple[float, float]]

    @model_validator(mode="after")
    def _check(self) -> "VariationalInstance":
        tau = self.partition
        if len(tau) != self.j - 1:
            raise ValueError(f"partition needs {self.j - 1} times, got {len(tau)}")
        if tau[0] != 0.0 or abs(tau[-1] - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError("partition must run from 0 to T")
        if any(not b > a for a, b in zip(tau, tau[1:])):
            raise ValueError("partition must be strictly increasing")
        if len(self.theta) != self.j - 2 or any(th <= 0.0 for th in self.theta):
            raise ValueError("one positive speed per segment required")
        if any(a < 0.0 or b < 0.0 for a, b in self.rates):
            raise ValueError("rates must be nonnegative")
        return self

    @property
    def segment_lengths(self) -> List[float]:
        return [b - a for a, b in zip(self.partition, self.partition[1:])]


Command = Literal["simulate", "estimate", "compare", "rate", "fluid"]
OutputFormat = Literal["csv", "json", "both"]


class ExperimentConfig(BaseModel):
    """Flags and --config documents are merged into this model before any work starts."""
    model_config = ConfigDict(populate_by_name=True)

    command: Command
    n: List[int] = [1000]
    lam: List[float] = Field(default=[0.5], alias="lambda")
    T: float = 1.0
    policies: List[Policy] = ["jsq"]
    init: Union[str, List[float]] = "empty"
    event: str = "E3"
    replications: int = 1000
    base_seed: int = Field(default=0, alias="seed")
    out: str = "output"
    format: OutputFormat = "csv"
    dt_sample: Optional[float] = None
    threads: int = Field(default=1, ge=1)
    control: Optional[str] = None
    optimal: Optional[Tuple[int, float]] = None
    dt: Optional[float] = None
    max_level: int = 64
    j: Optional[int] = None
    search: bool = False
    refine: int = 50
    restarts: int = 32

    @field_validator("n", "lam", "policies", mode="before")
    @classmethod
    def _listify(cls, v: Any) -> Any:
        if v is None or isinstance(v, (list, tuple)):
            return v
        return [v]
