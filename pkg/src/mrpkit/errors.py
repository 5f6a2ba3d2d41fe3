"""Exception types shared across the package."""


class MrpError(Exception):
    """Base class for all package errors."""


class InputError(MrpError):
    """Invalid user input: schema violations, bad enum levels, broken invariants.

    Maps to CLI exit code 2.
    """


class RunError(MrpError):
    """Runtime failure on valid input (e.g. an empty rejection-filter result).

    Maps to CLI exit code 1.
    """
