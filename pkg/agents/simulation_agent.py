from typing import Any, Dict

from core.simulator import simulate
from utils.errors import MaxLevelExceeded
from utils.logger import simulator_logger


def simulation_agent(state: Dict[str, Any]) -> Dict[str, Any]:
    """
    Run one sample path for the (single) configured system with the base seed.
    """
    config = state["config"]
    system = state["system_configs"][0]
    if len(state["system_configs"]) > 1:
        simulator_logger.log("Warning: simulate runs the first sweep point only.")

    try:
        path = simulate(system, config.base_seed)
    except MaxLevelExceeded as e:
        simulator_logger.log(f"CRITICAL: {e}")
        state["errors"] = state.get("errors", []) + [str(e)]
        state["exit_code"] = 3
        return state

    state["results"]["path"] = path
    state["summary"] = path.summary()
    simulator_logger.log(
        f"Simulation complete: {path.n_events} events, max level {path.max_level_reached}, "
        f"X_1(T)={path.final_counts[0] / path.n:.6g}"
    )
    return state
