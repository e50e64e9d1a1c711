from typing import Any, Dict

from core.ratefn import rate_report, variational_search
from utils.logger import ratefn_logger


def rate_agent(state: Dict[str, Any]) -> Dict[str, Any]:
    """
    Closed-form decay rate, its long-horizon approximation and the optimal control pair;
    optionally the variational search certificate.
    """
    config = state["config"]
    report = rate_report(config.j, config.T)

    if config.search:
        instance, value = variational_search(config.j, config.T, refine=config.refine,
                                             restarts=config.restarts, seed=config.base_seed)
        report["search"] = {
            "value": value,
            "gap": value - report["rate"],
            "partition": instance.partition,
            "theta": instance.theta,
            "segment_lengths": instance.segment_lengths,
        }

    state["results"]["rate"] = report
    state["summary"] = report
    ratefn_logger.log(f"Rate for j={config.j}, T={config.T}: {report['rate']:.12g} (large-T {report['large_T_limit']:.6g})")
    return state
