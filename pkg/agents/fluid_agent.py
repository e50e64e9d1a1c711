from typing import Any, Dict

from core.fluid import cost, integrate
from core.ratefn import decay_rate
from utils.errors import TruncationError
from utils.logger import fluid_logger
from utils.schemas import InitialOccupancy


def fluid_agent(state: Dict[str, Any]) -> Dict[str, Any]:
    """
    Integrate the controlled fluid path and evaluate the cost of its control.
    """
    config = state["config"]
    control = state["results"]["control"]
    lam = config.lam[0]
    x0 = InitialOccupancy.parse(config.init)
    T = control.horizon

    try:
        path = integrate(control, x0, T, dt=config.dt, lam=lam)
    except TruncationError as e:
        fluid_logger.log(f"CRITICAL: {e}")
        state["errors"] = state.get("errors", []) + [str(e)]
        state["exit_code"] = 3
        return state

    value = cost(control, path, lam)
    summary = {"T": T, "lambda": lam, "dt": float(path.mesh[1] - path.mesh[0]) if path.mesh.size > 1 else T,
               "M": path.M, "cost": value, "final_zeta": path.zeta.values[:, -1].tolist(),
               "final_shortest_level": int(path.shortest_levels()[-1])}
    if config.optimal is not None:
        j, T_opt = config.optimal
        summary["closed_form_rate"] = decay_rate(int(j), float(T_opt))
    state["results"]["fluid"] = path
    state["summary"] = summary
    fluid_logger.log(f"Fluid integration complete: M={path.M}, cost={value:.12g}")
    return state
