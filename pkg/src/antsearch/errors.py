"""Exception types shared across the package."""


class AntSearchError(Exception):
    """Base class for all package errors."""


class ConfigError(AntSearchError):
    """A run configuration field is missing, malformed, or out of bounds."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DescriptorError(AntSearchError):
    """An architecture descriptor violates the search-space rules."""


class GraphError(AntSearchError):
    """An operation on the pheromone graph violated its preconditions."""


class ProtocolError(AntSearchError):
    """A wire message violated the evaluator protocol schema."""


class EvaluationFailed(AntSearchError):
    """One evaluation failed; the search degrades it to a zero score."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class CheckpointError(AntSearchError):
    """A checkpoint file could not be loaded or does not match the schema."""
