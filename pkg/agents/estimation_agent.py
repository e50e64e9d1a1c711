from typing import Any, Dict

from core.estimation import estimate_event
from utils.errors import MaxLevelExceeded
from utils.logger import estimation_logger
from utils.schemas import RareEventSpec


def estimation_agent(state: Dict[str, Any]) -> Dict[str, Any]:
    """
    Rare-event estimates for every (policy, n, lambda) sweep point.
    Replications of each point are spread over `threads` worker processes.
    """
    config = state["config"]
    event = RareEventSpec.parse(config.event)
    results = []

    try:
        for system in state["system_configs"]:
            results.append(estimate_event(system, event, config.replications, config.base_seed,
                                          workers=config.threads))
    except MaxLevelExceeded as e:
        estimation_logger.log(f"CRITICAL: {e}")
        state["errors"] = state.get("errors", []) + [str(e)]
        state["exit_code"] = 3
        return state

    state["results"]["estimates"] = results
    state["summary"] = {
        "event": event.label,
        "points": len(results),
        "log_rates": {f"{r.policy}@n={r.n},lambda={r.lam}": r.log_rate_text for r in results},
    }
    estimation_logger.log(f"Estimation complete for {len(results)} sweep points.")
    return state
