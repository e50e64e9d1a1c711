import argparse
import os
import sys
from typing import Any, Dict, List, Optional

from graph.graph_builder import build_graph
from utils.errors import ConfigError
from utils.logger import PipelineLogger
from utils.parsing import load_json_document

logger = PipelineLogger("Main")

THREADS_ENV = "JSQ_LDP_THREADS"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _system_flags(p: argparse.ArgumentParser, sweep: bool) -> None:
    nargs = "+" if sweep else None
    p.add_argument("--n", type=int, nargs=nargs, help="server count(s)")
    p.add_argument("--lambda", dest="lambda", type=float, nargs=nargs, help="arrival intensity per server")
    p.add_argument("--T", type=float, help="time horizon")
    p.add_argument("--init", help="'empty', 'ones' or comma-separated occupancy fractions")
    p.add_argument("--max-level", dest="max_level", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jsq-ldp",
        description="Simulation and large-deviation analysis of Join-the-Shortest-Queue systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_path", help="JSON config file (flags override)")
    common.add_argument("--out", help="output directory (default: output)")

    files = argparse.ArgumentParser(add_help=False, parents=[common])
    files.add_argument("--format", choices=["csv", "json", "both"], help="file outputs (default: csv)")

    p = sub.add_parser("simulate", parents=[files], help="one sample path")
    _system_flags(p, sweep=False)
    p.add_argument("--policy", choices=["jsq", "jiq", "controlled"])
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", dest="dt_sample", type=float, help="also write X sampled every dt")
    p.add_argument("--control", help="control JSON for the controlled policy")
    p.add_argument("--optimal", nargs=2, metavar=("J", "T"), help="optimal-path control for (j, T)")

    for name, help_text in (("estimate", "rare-event probability sweep"),
                            ("compare", "estimate with both jsq and jiq")):
        p = sub.add_parser(name, parents=[files], help=help_text)
        _system_flags(p, sweep=True)
        if name == "estimate":
            p.add_argument("--policy", dest="policies", nargs="+", choices=["jsq", "jiq"])
        p.add_argument("--event", help="E<j>, G<j> or F<j>")
        p.add_argument("--replications", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")

    p = sub.add_parser("rate", parents=[common], help="closed-form decay rate")
    p.add_argument("--j", type=int, required=False)
    p.add_argument("--T", type=float)
    p.add_argument("--search", action="store_true", default=None, help="run the variational certificate")
    p.add_argument("--refine", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("fluid", parents=[files], help="controlled fluid path and its cost")
    p.add_argument("--control", help="control JSON file")
    p.add_argument("--optimal", nargs=2, metavar=("J", "T"), help="optimal-path control for (j, T)")
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--init")
    p.add_argument("--dt", type=float)
    return parser


def raw_config(args: argparse.Namespace) -> Dict[str, Any]:
    """defaults < --config document < explicit flags."""
    flags = {k: v for k, v in vars(args).items() if v is not None}
    raw: Dict[str, Any] = {}
    if flags.get("config_path"):
        doc = load_json_document(flags["config_path"], component_name="ExperimentConfig")
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object", source=flags["config_path"], line=1)
        raw.update(doc)
    if "threads" not in flags and "threads" not in raw and os.environ.get(THREADS_ENV):
        raw["threads"] = os.environ[THREADS_ENV]
    if "optimal" in flags:
        flags["optimal"] = (int(flags["optimal"][0]), float(flags["optimal"][1]))
    for key in ("n", "lambda"):
        if key in flags and not isinstance(flags[key], list):
            flags[key] = [flags[key]]
    if "policy" in flags:
        flags["policies"] = [flags.pop("policy")]
    raw.update(flags)
    return raw


def initial_state(command: str, raw: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "command": command,
        "raw_config": raw,
        "config": None,
        "system_configs": [],
        "results": {},
        "outputs": [],
        "summary": {},
        "errors": [],
        "exit_code": EXIT_OK,
    }


def run(argv: Optional[List[str]] = None) -> Dict[str, Any]:
    """Parse arguments, run the command pipeline and return the final state."""
    args = build_parser().parse_args(argv)
    try:
        raw = raw_config(args)
    except ConfigError as e:
        logger.log(f"ERROR: {e}")
        state = initial_state(args.command, {})
        state["errors"] = [str(e)]
        state["exit_code"] = EXIT_VALIDATION
        return state

    app = build_graph(args.command).compile()
    return app.invoke(initial_state(args.command, raw))


def main(argv: Optional[List[str]] = None) -> int:
    """
    Exit codes: 0 success, 2 validation failure, 3 runtime abort.
    """
    final_state = run(argv)
    for message in final_state.get("errors", []):
        print(f"error: {message}", file=sys.stderr)
    return final_state.get("exit_code", EXIT_OK)


if __name__ == "__main__":
    sys.exit(main())
