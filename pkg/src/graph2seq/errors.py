"""Exception hierarchy shared across the toolkit.

DataError maps to CLI exit code 1 (bad input data), ContractError to
exit code 2 (caller violated an API precondition).
"""


class Graph2SeqError(Exception):
    """Base class for all toolkit errors."""


class DataError(Graph2SeqError):
    """Input data could not be parsed or is inconsistent."""


class ContractError(Graph2SeqError):
    """An API precondition was violated by the caller."""


class ConfigError(ContractError):
    """Invalid or inconsistent configuration."""
