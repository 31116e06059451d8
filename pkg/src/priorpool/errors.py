"""Common exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all priorpool errors."""


class SchemaError(ToolkitError):
    """A document (JSON session file, survey CSV, ...) does not match its schema."""
