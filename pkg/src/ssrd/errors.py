"""Shared exception types, mapped to CLI exit codes."""


class DataError(Exception):
    """Bad input data: missing files, malformed rows, invalid values. Exit code 3."""


class InfeasibleError(Exception):
    """No feasible investment sequence exists for the given (N, k, T). Exit code 4."""


class InvalidActionError(Exception):
    """MDP action violates the mask or size constraints. Never silently repaired."""
