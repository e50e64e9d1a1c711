import math
import os

import numpy as np
import pytest
from scipy.linalg import expm

from core.estimation import (derive_seed, estimate_event, event_occurs, idle_imbalance_event,
                             replication_hit, unit_imbalance_event)
from core.ratefn import decay_rate
from core.simulator import simulate_path
from utils.schemas import EstimateResult, RareEventSpec, SystemConfig
from utils.stats import wilson_interval


def _config(n, lam, T, init="empty", policy="jsq", **kw):
    return SystemConfig(n=n, lambda_n=lam, horizon_T=T, init=init, policy=policy, **kw)


def mm1_reach_probability(lam, start, level, T, cap=50):
    """P(an M/M/1 queue started at `start` reaches `level` by T), via the absorbed generator."""
    Q = np.zeros((cap + 1, cap + 1))
    for i in range(level):
        if i < cap:
            Q[i, i + 1] = lam
        if i > 0:
            Q[i, i - 1] = 1.0
        Q[i, i] = -Q[i].sum()
    p = expm(Q * T)[start]
    return float(p[level:].sum())


def test_derive_seed_is_pure():
    assert derive_seed(7, 3) == derive_seed(7, 3)
    seeds = {derive_seed(7, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(7, 0) != derive_seed(8, 0)
    with pytest.raises(ValueError):
        derive_seed(-1, 0)


def test_event_parsing():
    event = RareEventSpec.parse("E3")
    assert (event.kind, event.j, event.label) == ("E", 3, "E3")
    assert RareEventSpec.parse("f4").label == "F4"
    for bad in ("X3", "E", "Ethree"):
        with pytest.raises(ValueError):
            RareEventSpec.parse(bad)


def test_wilson_interval_edges():
    low, high = wilson_interval(0, 100)
    assert low == 0.0 and 0.0 < high < 0.05
    low, high = wilson_interval(100, 100)
    assert high == 1.0 and 0.95 < low < 1.0
    low, high = wilson_interval(30, 100)
    assert low < 0.3 < high
    assert (low + high) / 2 == pytest.approx(0.3, abs=0.01)


def test_certain_event():
    config = _config(20, 0.99, 1.0, init="ones")
    result = estimate_event(config, RareEventSpec.parse("G1"), replications=50, base_seed=0)
    assert result.p_hat == 1.0
    assert result.log_rate == 0.0
    assert result.ci_high == 1.0


def test_impossible_event():
    config = _config(5, 0.0, 1.0, init="ones")
    result = estimate_event(config, RareEventSpec.parse("E2"), replications=100, base_seed=0)
    assert result.p_hat == 0.0
    assert result.hits == 0
    assert result.log_rate == float("-inf")
    assert result.ci_low == 0.0
    assert result.csv_row()["log_rate"] == "-inf"


def test_estimate_rejects_bad_requests():
    config = _config(5, 0.5, 1.0, max_level=4)
    with pytest.raises(ValueError):
        estimate_event(config, RareEventSpec.parse("E3"), replications=0, base_seed=0)
    with pytest.raises(ValueError):
        estimate_event(config, RareEventSpec.parse("E4"), replications=10, base_seed=0)


@pytest.mark.parametrize("label", ["E3", "G3", "F3"])
def test_early_stop_agrees_with_recorded_path(label):
    config = _config(10, 1.1, 2.0, init="ones")
    event = RareEventSpec.parse(label)
    for r in range(200):
        seed = derive_seed(1, r)
        assert replication_hit(config, event, seed) == event_occurs(simulate_path(config, seed), event)


def test_single_server_against_matrix_exponential():
    config = _config(1, 1.0, 1.0, init="ones")
    oracle = mm1_reach_probability(1.0, start=1, level=3, T=1.0)
    result = estimate_event(config, RareEventSpec.parse("E3"), replications=100_000, base_seed=42)
    half_width = (result.ci_high - result.ci_low) / 2
    assert abs(result.p_hat - oracle) <= 3 * half_width


def test_worker_count_does_not_change_hits():
    config = _config(5, 1.0, 1.0, init="ones")
    event = RareEventSpec.parse("E3")
    serial = estimate_event(config, event, replications=3000, base_seed=9, workers=1, chunk=1000)
    pooled = estimate_event(config, event, replications=3000, base_seed=9, workers=2, chunk=1000)
    assert serial.hits == pooled.hits
    assert serial == pooled


def test_custom_imbalance_events():
    config = _config(2, 0.5, 0.5, init="1,0.5")
    unit = unit_imbalance_event(2, 0.5)
    result = estimate_event(config, unit, replications=20, base_seed=0, workers=4)
    assert result.p_hat == 1.0
    assert result.event.startswith("unit_imbalance")
    idle = idle_imbalance_event(2, 0.5)
    path = simulate_path(_config(2, 0.5, 0.5, init="0.5,0.5"), 0)
    assert event_occurs(path, idle)
    with pytest.raises(ValueError):
        idle_imbalance_event(1, 0.5)
    with pytest.raises(ValueError):
        unit_imbalance_event(3, 1.0)


def test_estimate_result_validation():
    with pytest.raises(ValueError):
        EstimateResult(n=1, lam=1.0, T=1.0, policy="jsq", event="E3", p_hat=0.5, ci_low=0.6,
                       ci_high=0.7, replications=2, hits=1, log_rate=math.log(0.5), seed=0)


def _workers():
    return int(os.environ.get("JSQ_LDP_THREADS", os.cpu_count() or 1))


@pytest.mark.slow
def test_empirical_rate_approaches_decay_rate():
    target = decay_rate(3, 1.0)
    distances, slack = [], []
    for n in (10, 20, 40):
        config = _config(n, 0.99, 1.0, init="ones")
        result = estimate_event(config, RareEventSpec.parse("E3"), replications=1_000_000,
                                base_seed=2024, workers=_workers())
        assert result.hits > 0
        rate = -math.log(result.p_hat) / n
        distances.append(abs(rate - target))
        slack.append((result.ci_high - result.ci_low) / (2 * result.p_hat * n))
    assert distances[-1] / target <= 0.5
    for i in range(2):
        assert distances[i + 1] <= distances[i] + slack[i] + slack[i + 1]


@pytest.mark.slow
def test_jsq_is_rarer_than_jiq():
    for n in (20, 40, 60):
        rates = {}
        for policy in ("jsq", "jiq"):
            config = _config(n, 0.99, 10.0, init="ones", policy=policy)
            rates[policy] = estimate_event(config, RareEventSpec.parse("E3"), replications=100_000,
                                           base_seed=7, workers=_workers()).log_rate
        assert rates["jsq"] <= rates["jiq"]
