"""Exception hierarchy.

``InputError`` covers everything a user can fix by editing their input
(schema violations, impossible dimensions, unidentified parameters);
``SingularityError`` covers numerical failures of otherwise valid input.
The CLI maps them to exit codes 2 and 3 respectively.
"""


class SlopeSynthError(Exception):
    """Base class for all errors raised by this package."""


class InputError(SlopeSynthError, ValueError):
    """Invalid input: bad schema, bad dimensions, out-of-domain values."""


class AssemblyError(InputError):
    """The stacked system cannot be assembled (e.g. unidentified parameters)."""


class SingularityError(SlopeSynthError, ArithmeticError):
    """A matrix that must be positive-definite or invertible is not."""
