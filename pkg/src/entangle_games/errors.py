"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
these rather than bare ValueError/RuntimeError for the corresponding
failure classes.
"""


class ParameterError(ValueError):
    """A parameter is outside its documented domain (exit code 2)."""


class UnreachableError(RuntimeError):
    """Source and destination are not connected in the scenario (exit code 3)."""


class CapacityError(ValueError):
    """A request exceeds the dense-simulation capacity limits (exit code 4)."""
