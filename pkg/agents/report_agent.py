import json
import os
from typing import Any, Dict, List

from utils.export import (ensure_dir, estimates_frame, plot_frame, write_frame, write_json,
                          write_jsonl)
from utils.logger import report_logger


def _write_simulate(config, results: Dict[str, Any], out: str) -> List[str]:
    """path.jsonl always; the sampled grid and the X/Y/eta processes follow --format."""
    path = results["path"]
    files = [os.path.join(out, "path.jsonl")]
    write_jsonl(files[0], path.iter_jsonl())
    grid = path.sample_grid(config.dt_sample) if config.dt_sample is not None else None
    if grid is not None and config.format in ("csv", "both"):
        files.append(os.path.join(out, "path_grid.csv"))
        grid.to_csv(files[-1])
    if config.format in ("json", "both"):
        if grid is not None:
            files.append(os.path.join(out, "path_grid.json"))
            write_json(files[-1], grid.to_records())
        files.append(os.path.join(out, "path_processes.json"))
        write_json(files[-1], {name: g.to_records() for name, g in path.to_grid_paths().items()})
    return files


def _write_estimates(config, results: Dict[str, Any], out: str) -> List[str]:
    estimates = results["estimates"]
    files = []
    if config.format in ("csv", "both"):
        files.append(os.path.join(out, "estimates.csv"))
        write_frame(files[-1], estimates_frame(estimates))
        files.append(os.path.join(out, "plot_data.csv"))
        write_frame(files[-1], plot_frame(estimates))
    if config.format in ("json", "both"):
        files.append(os.path.join(out, "estimates.json"))
        write_json(files[-1], [r.to_json() for r in estimates])
    return files


def _write_fluid(config, results: Dict[str, Any], out: str) -> List[str]:
    path = results["fluid"]
    files = []
    if config.format in ("csv", "both"):
        files.append(os.path.join(out, "fluid_path.csv"))
        write_frame(files[-1], path.to_frame())
    if config.format in ("json", "both"):
        files.append(os.path.join(out, "fluid_path.json"))
        write_json(files[-1], path.to_records())
    return files


WRITERS = {
    "simulate": _write_simulate,
    "estimate": _write_estimates,
    "compare": _write_estimates,
    "fluid": _write_fluid,
}


def report_agent(state: Dict[str, Any]) -> Dict[str, Any]:
    """
    Persist command outputs and log the final summary. `rate` prints its JSON on stdout.
    """
    config = state["config"]
    command = config.command
    outputs: List[str] = []

    try:
        if command == "rate":
            print(json.dumps(state["summary"], indent=2))
            if state.get("raw_config", {}).get("out"):
                path = os.path.join(ensure_dir(config.out), "rate.json")
                write_json(path, state["summary"])
                outputs.append(path)
        else:
            out = ensure_dir(config.out)
            outputs.extend(WRITERS[command](config, state["results"], out))
            if command == "fluid":
                path = os.path.join(out, "fluid_cost.json")
                write_json(path, state["summary"])
                outputs.append(path)
    except OSError as e:
        report_logger.log(f"ERROR: could not write outputs: {e}")
        state["errors"] = state.get("errors", []) + [str(e)]
        state["exit_code"] = 3
        return state

    state["outputs"] = outputs
    report_logger.log("=" * 50)
    report_logger.log(f"{command.upper()} SUMMARY")
    report_logger.log("=" * 50)
    for key, value in state.get("summary", {}).items():
        report_logger.log(f"{key}: {value}")
    for path in outputs:
        report_logger.log(f"Wrote {path}")
    return state
