"""
Exception hierarchy for the planner.

Every error raised deliberately by the package derives from WorkflowError so
the command-line surface can report it without a traceback.
"""


class WorkflowError(Exception):
    """Base class for all planner errors."""


class WorkflowParseError(WorkflowError):
    """A workflow, pool, or report file could not be read or decoded."""


class InputError(WorkflowError, ValueError):
    """An operation received an argument outside its domain."""


class ContractViolation(WorkflowError):
    """An engine precondition was broken by the caller."""


class UnsupportedModeError(WorkflowError):
    """The operation does not support the instance's execution mode."""


class OracleSizeError(WorkflowError):
    """The exact oracle refused an instance beyond its size guard."""


class GenerationError(WorkflowError):
    """Synthetic instance generation gave up after its bounded attempts."""


class UnknownMethodError(WorkflowError):
    """The harness was asked for a method it does not know."""
