from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from core.ratefn import optimal_path
from utils.errors import ConfigError
from utils.logger import config_logger
from utils.parsing import load_json_document, validate_document
from utils.schemas import ControlPolicy, ExperimentConfig, InitialOccupancy, RareEventSpec, SystemConfig

# Defaults that differ per command; the generic ones live on ExperimentConfig
COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "fluid": {"init": "ones", "lambda": [1.0]},
    "compare": {"policies": ["jsq", "jiq"]},
}


def _validation_message(e: ValidationError) -> str:
    first = e.errors()[0]
    field = ".".join(str(p) for p in first.get("loc", ())) or "<root>"
    return f"{field}: {first.get('msg')}"


def load_control(config: ExperimentConfig) -> Optional[ControlPolicy]:
    """Control from --optimal j T or from a control JSON file (errors carry file locations)."""
    if config.optimal is not None:
        j, T = config.optimal
        control, _ = optimal_path(int(j), float(T))
        return control
    if config.control:
        doc = load_json_document(config.control, component_name="ControlPolicy")
        return validate_document(config.control, doc, ControlPolicy.from_document, component_name="ControlPolicy")
    return None


def build_experiment_config(raw: Dict[str, Any]) -> ExperimentConfig:
    command = raw.get("command")
    defaults = dict(COMMAND_DEFAULTS.get(command, {}))
    # optimal-path controls assume lambda = 1
    if raw.get("optimal") is not None and "lambda" not in raw and "lam" not in raw:
        defaults["lambda"] = [1.0]
    merged = {**defaults, **{k: v for k, v in raw.items() if k != "config_path"}}
    config_path = raw.get("config_path")
    if config_path:
        return validate_document(config_path, merged, lambda d: ExperimentConfig(**d), component_name="ExperimentConfig")
    try:
        return ExperimentConfig(**merged)
    except ValidationError as e:
        raise ConfigError(_validation_message(e)) from e


def system_configs(config: ExperimentConfig, control: Optional[ControlPolicy]) -> List[SystemConfig]:
    """Every sweep point as a validated SystemConfig; the first failure aborts before any work."""
    out = []
    init = InitialOccupancy.parse(config.init)
    for policy in config.policies:
        for n in config.n:
            for lam in config.lam:
                try:
                    out.append(SystemConfig(
                        n=n, lambda_n=lam, horizon_T=config.T, init=init, policy=policy,
                        control=control if policy == "controlled" else None,
                        max_level=config.max_level,
                    ))
                except ValidationError as e:
                    raise ConfigError(
                        f"sweep point (n={n}, lambda={lam}, policy={policy}) invalid: {_validation_message(e)}"
                    ) from e
    return out


def _check_command(config: ExperimentConfig, control: Optional[ControlPolicy]) -> None:
    if config.command in ("estimate", "compare"):
        if config.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {config.replications}", field="replications")
        event = RareEventSpec.parse(config.event)
        if event.kind == "F":
            reach = event.j - 1
        else:
            reach = event.j
        if reach >= config.max_level:
            raise ConfigError(f"event {event.label} needs max_level > {reach}", field="event")
    if config.command == "simulate" and config.dt_sample is not None and config.dt_sample <= 0:
        raise ConfigError(f"dt_sample must be positive, got {config.dt_sample}", field="dt_sample")
    if config.command == "rate":
        if config.j is None or config.j < 3:
            raise ConfigError(f"rate needs j >= 3, got {config.j}", field="j")
        if not config.T > 0:
            raise ConfigError(f"rate needs T > 0, got {config.T}", field="T")
        if config.search and config.refine < 1:
            raise ConfigError("refine budget must be at least 1", field="refine")
    if config.command == "fluid":
        if control is None:
            raise ConfigError("fluid needs --control FILE or --optimal J T", field="control")
        if config.dt is not None and config.dt <= 0:
            raise ConfigError(f"dt must be positive, got {config.dt}", field="dt")
        if any(lam < 0 for lam in config.lam):
            raise ConfigError("lambda must be nonnegative", field="lambda")
        InitialOccupancy.parse(config.init)


def config_validation_agent(state: Dict[str, Any]) -> Dict[str, Any]:
    """
    Merge flags and the optional --config document into an ExperimentConfig and validate
    every sweep point. Failures are recorded in state with exit code 2.
    """
    raw = dict(state.get("raw_config", {}))
    raw.setdefault("command", state.get("command"))
    try:
        config = build_experiment_config(raw)
        control = load_control(config)
        if control is not None and config.optimal is not None and config.command in ("fluid", "simulate"):
            config = config.model_copy(update={"T": float(config.optimal[1])})
        if control is not None and config.command == "simulate" and "controlled" not in config.policies:
            config = config.model_copy(update={"policies": ["controlled"]})
        _check_command(config, control)
        if config.command in ("simulate", "estimate", "compare"):
            state["system_configs"] = system_configs(config, control)
        state["config"] = config
        state["results"] = {"control": control}
        config_logger.log(f"Configuration valid for '{config.command}' ({len(state.get('system_configs', []))} sweep points)")
    except (ConfigError, ValueError) as e:
        message = str(e) if isinstance(e, ConfigError) else f"<flags>: {e}"
        config_logger.log(f"ERROR: {message}")
        state["errors"] = state.get("errors", []) + [message]
        state["exit_code"] = 2
    return state
