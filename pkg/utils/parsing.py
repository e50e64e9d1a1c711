import json
from typing import Any, Callable, Optional, TypeVar

from pydantic import ValidationError

from utils.errors import ConfigError
from utils.logger import PipelineLogger

# Logger for parsing issues
parser_logger = PipelineLogger("JSONParser")

T = TypeVar("T")


def load_json_document(path: str, component_name: str = "Unknown") -> Any:
    """
    Read a JSON document (config or control file).
    Syntax errors are reported with line and column; a missing file is a ConfigError too.
    """
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        parser_logger.log(f"ERROR: Could not read {path} for {component_name}: {e}")
        raise ConfigError(f"cannot read file: {e.strerror or e}", source=path) from e

    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        parser_logger.log(f"CRITICAL: Failed to parse JSON for {component_name} at {path}:{e.lineno}:{e.colno}: {e.msg}")
        raise ConfigError(e.msg, source=path, line=e.lineno, column=e.colno) from e


def locate_field(text: str, field: str) -> Optional[int]:
    """1-based line of the first `"field":` key in a JSON text, if present."""
    needle = f'"{field}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def validate_document(path: str, doc: Any, build: Callable[[Any], T], component_name: str = "Unknown") -> T:
    """
    Apply a pydantic constructor to a parsed document and turn the first validation error into a
    ConfigError naming the offending field and, when it can be found, its line in the file.
    """
    try:
        return build(doc)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ()))
        line = None
        try:
            with open(path, "r") as f:
                key = next((str(p) for p in reversed(first.get("loc", ())) if isinstance(p, str)), None)
                if key:
                    line = locate_field(f.read(), key)
        except OSError:
            pass
        parser_logger.log(f"ERROR: {component_name} document {path} failed validation at {field or '<root>'}: {first.get('msg')}")
        raise ConfigError(first.get("msg", "invalid value"), source=path, line=line, field=field or None) from e
