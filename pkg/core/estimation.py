"""Rare-event Monte Carlo over independent replications with scheduling-independent seeding."""
import math
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from core.simulator import SamplePath, make_generator, run_chain, schedule_for, simulate
from utils.logger import estimation_logger
from utils.schemas import EstimateResult, RareEventSpec, SystemConfig
from utils.stats import wilson_interval

CHUNK = 2000


def derive_seed(base_seed: int, replication: int) -> int:
    """64-bit seed for replication r, a pure hash of (base_seed, r)."""
    if base_seed < 0 or replication < 0:
        raise ValueError("seeds and replication indices must be nonnegative")
    state = np.random.SeedSequence([int(base_seed), int(replication)]).generate_state(1, np.uint64)
    return int(state[0])


def hit_target(config: SystemConfig, event: RareEventSpec) -> Tuple[int, int]:
    """(index, threshold) such that the event holds once c[index] >= threshold."""
    if event.kind in ("E", "G"):
        index, threshold = event.j, 1
    elif event.kind == "F":
        index, threshold = event.j - 1, config.n
    else:
        raise ValueError(f"{event.kind} events are evaluated on recorded paths")
    if index >= config.max_level:
        raise ValueError(f"event {event.label} needs max_level > {index}, got {config.max_level}")
    return index, threshold


def event_occurs(path: SamplePath, event: RareEventSpec) -> bool:
    """Evaluate an event on a recorded path."""
    if event.kind == "CUSTOM":
        return bool(event.predicate(path))
    if event.kind in ("E", "G"):
        return bool(np.any(path.coordinate(event.j) > 0.0))
    if event.j == 1:
        return True
    return bool(np.any(path.counts[:, event.j - 2] == path.n)) if event.j - 1 <= path.width else False


def replication_hit(config: SystemConfig, event: RareEventSpec, seed: int) -> bool:
    if event.kind == "CUSTOM":
        return event_occurs(simulate(config, seed), event)
    return run_chain(config, schedule_for(config), make_generator(seed), record=False,
                     hit=hit_target(config, event))


def count_hits(config: SystemConfig, event: RareEventSpec, base_seed: int, start: int, stop: int) -> int:
    """Hits over replications start..stop-1; the unit of work handed to pool workers."""
    hits = 0
    for r in range(start, stop):
        if replication_hit(config, event, derive_seed(base_seed, r)):
            hits += 1
    return hits


def _chunks(replications: int, size: int) -> List[Tuple[int, int]]:
    return [(s, min(s + size, replications)) for s in range(0, replications, size)]


def estimate_event(config: SystemConfig, event: RareEventSpec, replications: int, base_seed: int,
                   workers: int = 1, chunk: Optional[int] = None) -> EstimateResult:
    """
    p_hat = hits / replications with a 95% Wilson interval and log_rate = log(p_hat) / n.
    Replications are split into fixed chunks, so the hit count does not depend on `workers`.
    """
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    if event.kind != "CUSTOM":
        hit_target(config, event)
    chunks = _chunks(replications, chunk or CHUNK)

    if workers > 1 and event.kind == "CUSTOM":
        estimation_logger.log("Warning: CUSTOM event predicates run sequentially in-process.")
        workers = 1

    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(count_hits, config, event, base_seed, a, b) for a, b in chunks]
            hits = sum(f.result() for f in futures)
    else:
        hits = sum(count_hits(config, event, base_seed, a, b) for a, b in chunks)

    p_hat = hits / replications
    ci_low, ci_high = wilson_interval(hits, replications)
    log_rate = math.log(p_hat) / config.n if hits else float("-inf")
    result = EstimateResult(
        n=config.n, lam=config.lambda_n, T=config.horizon_T, policy=config.policy,
        event=event.label, p_hat=p_hat, ci_low=ci_low, ci_high=ci_high,
        replications=replications, hits=hits, log_rate=log_rate, seed=base_seed,
    )
    estimation_logger.log(
        f"{config.policy} n={config.n} lambda={config.lambda_n} {event.label}: "
        f"{hits}/{replications} hits, p_hat={p_hat:.6g} [{ci_low:.6g}, {ci_high:.6g}]"
    )
    return result


def _level_match(path: SamplePath, k: int, target: float) -> np.ndarray:
    return np.abs(path.coordinate(k) - target) <= 0.5 / path.n


def idle_imbalance_event(j: int, c: float) -> RareEventSpec:
    """X_1 = ... = X_j = c and X_{j+1} = 0 at some time: busy servers hold long queues, the rest idle."""
    if j < 2 or not 0.0 < c < 1.0:
        raise ValueError("idle imbalance event needs j >= 2 and c in (0, 1)")

    def predicate(path: SamplePath) -> bool:
        hit = path.coordinate(j + 1) == 0.0
        for k in range(1, j + 1):
            hit &= _level_match(path, k, c)
        return bool(np.any(hit))

    return RareEventSpec(kind="CUSTOM", j=j, name=f"idle_imbalance(j={j},c={c})", predicate=predicate)


def unit_imbalance_event(j: int, c: float) -> RareEventSpec:
    """X_1 = 1, X_2 = ... = X_j = c and X_{j+1} = 0 at some time."""
    if j < 2 or not 0.0 < c < 1.0:
        raise ValueError("unit imbalance event needs j >= 2 and c in (0, 1)")

    def predicate(path: SamplePath) -> bool:
        hit = (path.coordinate(1) == 1.0) & (path.coordinate(j + 1) == 0.0)
        for k in range(2, j + 1):
            hit &= _level_match(path, k, c)
        return bool(np.any(hit))

    return RareEventSpec(kind="CUSTOM", j=j, name=f"unit_imbalance(j={j},c={c})", predicate=predicate)
