from langgraph.graph import StateGraph, END
from graph.state import ExperimentState
from agents.config_validation_agent import config_validation_agent
from agents.simulation_agent import simulation_agent
from agents.estimation_agent import estimation_agent
from agents.fluid_agent import fluid_agent
from agents.rate_agent import rate_agent
from agents.report_agent import report_agent
from utils.logger import PipelineLogger

logger = PipelineLogger("GraphBuilder")

COMMAND_NODES = {
    "simulate": ("simulation", simulation_agent),
    "estimate": ("estimation", estimation_agent),
    "compare": ("estimation", estimation_agent),
    "fluid": ("fluid", fluid_agent),
    "rate": ("rate", rate_agent),
}

def route_validation(state: ExperimentState):
    """
    Conditional routing:
    - Valid configuration -> 'run'
    - Any validation error -> 'invalid' (END)
    """
    if state.get("errors"):
        return "invalid"
    return "run"

def route_run(state: ExperimentState):
    if state.get("exit_code", 0) != 0:
        return "aborted"
    return "report"

def build_graph(command: str):
    """
    Build the experiment pipeline: config_validation -> <command node> -> report.
    """
    if command not in COMMAND_NODES:
        raise ValueError(f"unknown command {command!r}")
    node_name, node = COMMAND_NODES[command]
    graph = StateGraph(ExperimentState)

    # Add nodes
    graph.add_node("config_validation", config_validation_agent)
    graph.add_node(node_name, node)
    graph.add_node("report", report_agent)

    # Conditional Edges
    graph.add_conditional_edges(
        "config_validation",
        route_validation,
        {
            "run": node_name,
            "invalid": END
        }
    )
    graph.add_conditional_edges(
        node_name,
        route_run,
        {
            "report": "report",
            "aborted": END
        }
    )
    graph.add_edge("report", END)

    # Set entry point
    graph.set_entry_point("config_validation")

    logger.debug(f"Pipeline built for '{command}'")
    return graph
