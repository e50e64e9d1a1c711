from typing import Optional


class JsqLdpError(Exception):
    """Base class for toolkit errors."""


class DomainError(JsqLdpError, ValueError):
    """Skorokhod input outside the domain (initial point above the cap, empty mesh)."""

    def __init__(self, message: str, coordinate: Optional[int] = None):
        if coordinate is not None:
            message = f"coordinate {coordinate}: {message}"
        super().__init__(message)
        self.coordinate = coordinate


class MeshMismatchError(JsqLdpError, ValueError):
    pass


class ControlLookupError(JsqLdpError, ValueError):
    pass


class MaxLevelExceeded(JsqLdpError, RuntimeError):
    """A queue reached the configured max_level; the run is aborted."""

    def __init__(self, time: float, level: int, max_level: int):
        super().__init__(
            f"queue length {level} reached max_level={max_level} at t={time:.6g}; "
            f"raise max_level or check the configuration"
        )
        self.time = time
        self.level = level
        self.max_level = max_level


class TruncationError(JsqLdpError, RuntimeError):
    """Highest tracked fluid coordinate approached the boundary: increase M."""


class ConfigError(JsqLdpError, ValueError):
    def __init__(self, message: str, source: str = "<flags>", line: Optional[int] = None,
                 column: Optional[int] = None, field: Optional[str] = None):
        where = source
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        if field:
            where += f" [{field}]"
        super().__init__(f"{where}: {message}")
        self.source = source
        self.line = line
        self.column = column
        self.field = field
