from typing import TypedDict, Dict, List, Any, Optional

class ExperimentState(TypedDict):
    command: str
    raw_config: Dict[str, Any]
    config: Optional[Any]
    system_configs: List[Any]
    results: Dict[str, Any]
    outputs: List[str]
    summary: Dict[str, Any]
    errors: List[str]
    exit_code: int
