"""
Event-driven simulation of the n-server occupancy process.

State is the count vector c_i = n X_i (queues holding at least i jobs). Arrivals come at total
rate n lambda phi_0(t); queues of length exactly i complete service at rate (c_i - c_{i+1}) rho_i(t).
Uncontrolled runs use phi_0 = rho = 1. Next-event times are drawn from one exponential clock over
the aggregate rate (competing clocks), integrating the hazard across control breakpoints.

Along with X the run records the free process Y and the reflection terms eta in units of 1/n:
Y_1 collects arrivals minus level-1 departures and Y_i (i >= 2) level-i departures. An arrival
pushes one unit through eta_1..eta_d, where d is the number of full levels below the queue it
joins, so eta_i only grows at arrivals that found X_i = 1. When the queue sits above the full
prefix (JIQ sending a job to a random queue), the unit is carried from Y_{d+1} to Y_L.
"""
import json
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.skorokhod import GridPath
from utils.errors import ControlLookupError, MaxLevelExceeded
from utils.logger import simulator_logger
from utils.schemas import ControlPolicy, SystemConfig

ARRIVAL = 0
DEPARTURE = 1
EVENT_NAMES = {ARRIVAL: "arrival", DEPARTURE: "departure"}


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


class UniformStream:
    """Uniforms on [0, 1) drawn in growing blocks; consumption order fixes the path."""

    def __init__(self, rng: np.random.Generator, block: int = 32, max_block: int = 4096):
        self._rng = rng
        self._block = block
        self._max_block = max_block
        self._buf: List[float] = []
        self._i = 0

    def next(self) -> float:
        if self._i == len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._block = min(2 * self._block, self._max_block)
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


@dataclass(frozen=True)
class RateSchedule:
    """Piecewise-constant rates: segment s runs until ends[s] with arrival rate arrival[s]."""
    ends: List[float]
    arrival: List[float]
    rho: List[List[float]]

    @classmethod
    def uncontrolled(cls, config: SystemConfig) -> "RateSchedule":
        unit = [1.0] * (config.max_level + 2)
        return cls([config.horizon_T], [config.n * config.lambda_n * 1.0], [unit])

    @classmethod
    def from_control(cls, config: SystemConfig, control: ControlPolicy) -> "RateSchedule":
        T = config.horizon_T
        if control.horizon < T * (1.0 - 1e-12):
            raise ControlLookupError(f"control defined up to {control.horizon}, horizon is {T}")
        width = config.max_level + 2
        rho = control.rho_matrix(width)
        ends, arrival, rows = [], [], []
        start = 0.0
        for s in range(control.n_segments):
            if start >= T:
                break
            end = min(control.mesh[s + 1], T)
            if s == control.n_segments - 1:
                end = T
            ends.append(end)
            arrival.append(config.n * config.lambda_n * control.phi0[s])
            # index 0 is unused so that row[i] is rho_i
            rows.append([1.0] + rho[s, : width - 1].tolist())
            start = end
        return cls(ends, arrival, rows)


@dataclass(frozen=True)
class SamplePath:
    """
    One realization on [0, final_time]. Row 0 of each matrix is the initial state, row e the
    state after event e. counts, free and eta are integers in units of 1/n, column k - 1 holding
    coordinate k.
    """
    n: int
    final_time: float
    policy: str
    times: np.ndarray
    kinds: np.ndarray
    levels: np.ndarray
    counts: np.ndarray
    free: np.ndarray
    eta: np.ndarray

    @property
    def event_times(self) -> np.ndarray:
        return self.times[1:]

    @property
    def n_events(self) -> int:
        return int(self.kinds.size)

    @property
    def width(self) -> int:
        return int(self.counts.shape[1])

    @property
    def max_level_reached(self) -> int:
        occupied = np.flatnonzero(self.counts.max(axis=0) > 0)
        return int(occupied[-1]) + 1 if occupied.size else 0

    @property
    def final_counts(self) -> np.ndarray:
        return self.counts[-1]

    def coordinate(self, k: int) -> np.ndarray:
        """X_k at every recorded time (0 beyond the recorded width)."""
        if k > self.width:
            return np.zeros(self.times.size)
        return self.counts[:, k - 1] / self.n

    def grid_path(self, which: str = "counts", scaled: bool = False) -> GridPath:
        """counts / free / eta as a GridPath on the event mesh; scaled=True keeps integer units of 1/n."""
        data = {"counts": self.counts, "free": self.free, "eta": self.eta}[which]
        values = data.T if scaled else data.T / self.n
        return GridPath(self.times, values)

    def to_grid_paths(self) -> Dict[str, GridPath]:
        """X, Y and eta as fractions on the event mesh."""
        return {"X": self.grid_path("counts"), "Y": self.grid_path("free"), "eta": self.grid_path("eta")}

    def state_at(self, t: float) -> np.ndarray:
        """Right-continuous occupancy X(t)."""
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.counts[max(idx, 0)] / self.n

    def sample_grid(self, dt: float) -> GridPath:
        """Right-continuous X sampled every dt on [0, T]."""
        if dt <= 0:
            raise ValueError(f"sampling step must be positive, got {dt}")
        steps = int(math.floor(self.final_time / dt + 1e-9))
        grid = np.arange(steps + 1) * dt
        idx = np.searchsorted(self.times, grid, side="right") - 1
        return GridPath(grid, self.counts[idx].T / self.n)

    def iter_jsonl(self) -> Iterator[str]:
        """One JSON object per line: the initial state, then every event with the post-state."""
        def sparse(row: np.ndarray) -> Dict[str, int]:
            return {str(k + 1): int(v) for k, v in enumerate(row) if v}

        yield json.dumps({"time": 0.0, "kind": "init", "level": 0, "counts": sparse(self.counts[0])})
        for e in range(self.n_events):
            yield json.dumps({
                "time": float(self.times[e + 1]),
                "kind": EVENT_NAMES[int(self.kinds[e])],
                "level": int(self.levels[e]),
                "counts": sparse(self.counts[e + 1]),
            })

    def summary(self) -> Dict[str, object]:
        return {
            "policy": self.policy,
            "n": self.n,
            "T": self.final_time,
            "events": self.n_events,
            "arrivals": int(np.sum(self.kinds == ARRIVAL)),
            "departures": int(np.sum(self.kinds == DEPARTURE)),
            "max_level_reached": self.max_level_reached,
            "final_occupancy": (self.final_counts / self.n).tolist(),
        }


def _initial_state(config: SystemConfig) -> Tuple[List[int], List[int], int, int]:
    n, L = config.n, config.max_level
    init = config.init.to_counts(n)
    # c[0] = n and c[L + 1] = 0 are sentinels
    c = [n] + [0] * (L + 1)
    for i, v in enumerate(init, start=1):
        c[i] = v
    pi = 0
    while pi + 1 <= L and c[pi + 1] == n:
        pi += 1
    top = len(init)
    while top > 0 and c[top] == 0:
        top -= 1
    return c, init, pi, top


def run_chain(config: SystemConfig, schedule: RateSchedule, rng: np.random.Generator,
              record: bool = True, hit: Optional[Tuple[int, int]] = None):
    """
    Drive the occupancy chain on [0, T].

    record=True returns the event log (times, kinds, levels, init counts). With `hit` =
    (index, threshold) the run instead stops as soon as c[index] >= threshold and returns
    whether that happened by T.
    """
    n, L = config.n, config.max_level
    jiq = config.policy == "jiq"
    c, init, pi, top = _initial_state(config)
    ends, arrival, rhos = schedule.ends, schedule.arrival, schedule.rho
    n_segments = len(ends)
    stream = UniformStream(rng)
    uniform = stream.next
    log = math.log

    times: List[float] = []
    kinds: List[int] = []
    levels: List[int] = []

    if hit is not None:
        hit_index, hit_threshold = hit
        if c[hit_index] >= hit_threshold:
            return True

    t = 0.0
    seg = 0
    while True:
        e = -log(1.0 - uniform())
        # advance through segments until the integrated hazard reaches e
        while True:
            rho = rhos[seg]
            arr_rate = arrival[seg]
            total = arr_rate
            for i in range(1, top + 1):
                total += (c[i] - c[i + 1]) * rho[i]
            end = ends[seg]
            if total > 0.0:
                t_next = t + e / total
                if t_next <= end:
                    break
                e = max(e - total * (end - t), 0.0)
            t = end
            seg += 1
            if seg == n_segments:
                break
        if seg == n_segments:
            break
        t = t_next

        x = uniform() * total
        if x < arr_rate:
            kind = ARRIVAL
            if not jiq:
                level = pi + 1
            elif c[1] < n:
                level = 1
            else:
                # no idle server: join a uniformly chosen queue, length k w.p. (c_k - c_{k+1}) / n
                y = uniform() * n
                level = top + 1
                for k in range(1, top + 1):
                    w = c[k] - c[k + 1]
                    if y < w:
                        level = k + 1
                        break
                    y -= w
            if level >= L:
                simulator_logger.log(f"CRITICAL: max_level {L} reached at t={t:.6g}; aborting run")
                raise MaxLevelExceeded(t, level, L)
            c[level] += 1
            if level > top:
                top = level
            if c[level] == n:
                pi = level
        else:
            kind = DEPARTURE
            x -= arr_rate
            level = 0
            for i in range(1, top + 1):
                w = (c[i] - c[i + 1]) * rho[i]
                if w > 0.0:
                    level = i
                    if x < w:
                        break
                    x -= w
            c[level] -= 1
            if level == pi:
                pi -= 1
            if level == top and c[level] == 0:
                top -= 1

        if record:
            times.append(t)
            kinds.append(kind)
            levels.append(level)
        if hit is not None and kind == ARRIVAL and c[hit_index] >= hit_threshold:
            return True

    if hit is not None:
        return False
    return times, kinds, levels, init


def assemble_path(config: SystemConfig, times: Sequence[float], kinds: Sequence[int],
                  levels: Sequence[int], init: Sequence[int]) -> SamplePath:
    """Rebuild X, Y and eta (units of 1/n) from the event log."""
    kinds_arr = np.asarray(kinds, dtype=np.int8)
    levels_arr = np.asarray(levels, dtype=np.int64)
    E = kinds_arr.size
    width = max([len(init), int(levels_arr.max()) if E else 0, 1])
    # one spare zero coordinate above the highest level reached
    width += 1
    rows = np.arange(1, E + 1)
    arrivals = kinds_arr == ARRIVAL

    d_counts = np.zeros((E + 1, width), dtype=np.int64)
    d_counts[0, : len(init)] = init
    d_counts[rows, levels_arr - 1] = np.where(arrivals, 1, -1)
    counts = np.cumsum(d_counts, axis=0)

    # pushes stop at the full prefix of the pre-event state
    full_prefix = np.cumprod(counts[:-1] == config.n, axis=1).sum(axis=1)
    depth = np.where(arrivals, np.minimum(levels_arr - 1, full_prefix), 0)
    carried = arrivals & (levels_arr - 1 > depth)

    d_free = np.zeros((E + 1, width), dtype=np.int64)
    d_free[0, : len(init)] = init
    d_free[rows[arrivals], 0] += 1
    d_free[rows[~arrivals], levels_arr[~arrivals] - 1] -= 1
    d_free[rows[carried], depth[carried]] -= 1
    d_free[rows[carried], levels_arr[carried] - 1] += 1

    d_eta = np.zeros((E + 1, width), dtype=np.int64)
    d_eta[1:] = np.arange(width)[None, :] < depth[:, None]

    return SamplePath(
        n=config.n,
        final_time=config.horizon_T,
        policy=config.policy,
        times=np.concatenate([[0.0], np.asarray(times, dtype=float)]),
        kinds=kinds_arr,
        levels=levels_arr,
        counts=counts,
        free=np.cumsum(d_free, axis=0),
        eta=np.cumsum(d_eta, axis=0),
    )


def simulate_path(config: SystemConfig, seed: int) -> SamplePath:
    """Exact realization under JSQ or JIQ; deterministic in (config, seed)."""
    if config.policy not in ("jsq", "jiq"):
        raise ValueError(f"simulate_path handles jsq/jiq, got {config.policy}; use simulate_controlled")
    log = run_chain(config, RateSchedule.uncontrolled(config), make_generator(seed))
    path = assemble_path(config, *log)
    simulator_logger.debug(f"{config.policy} n={config.n} seed={seed}: {path.n_events} events")
    return path


def simulate_controlled(config: SystemConfig, control: Optional[ControlPolicy], seed: int) -> SamplePath:
    """
    JSQ routing under tilted rates: arrivals at n lambda phi_0(t), level-i departures at
    (c_i - c_{i+1}) rho_i(t). With control identically 1 the path equals simulate_path's under JSQ.
    """
    control = control or config.control
    if control is None:
        raise ValueError("simulate_controlled needs a control")
    schedule = RateSchedule.from_control(config, control)
    routed = config.model_copy(update={"policy": "controlled", "control": control})
    log = run_chain(routed, schedule, make_generator(seed))
    path = assemble_path(routed, *log)
    simulator_logger.debug(f"controlled n={config.n} seed={seed}: {path.n_events} events")
    return path


def schedule_for(config: SystemConfig) -> RateSchedule:
    if config.policy == "controlled":
        return RateSchedule.from_control(config, config.control)
    return RateSchedule.uncontrolled(config)


def simulate(config: SystemConfig, seed: int) -> SamplePath:
    """Dispatch on the configured policy."""
    if config.policy == "controlled":
        return simulate_controlled(config, config.control, seed)
    return simulate_path(config, seed)
