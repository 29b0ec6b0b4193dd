"""Exception hierarchy.

Invalid arguments raise plain ``ValueError`` (usage errors).  The two
subclasses below let the command line map failures onto distinct exit codes.
"""


class DataError(ValueError):
    """Input data is malformed (ragged CSV, negative entries, zero rows...)."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or hit a singular point."""
