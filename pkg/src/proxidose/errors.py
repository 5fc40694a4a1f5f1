"""Exception hierarchy with machine-readable error categories.

Every error raised by the library carries a short ``category`` slug that the
CLI prints as ``error:<category>: <message>`` so callers can dispatch on it.
"""

from __future__ import annotations


class ProxidoseError(Exception):
    """Base class for all library errors."""

    category = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(ProxidoseError):
    category = "config"


class UnknownScenarioError(ProxidoseError):
    category = "unknown-scenario"


class SpecValidationError(ProxidoseError):
    category = "invalid-spec"


class DataError(ProxidoseError):
    category = "non-finite"


class BinningError(ProxidoseError):
    category = "degenerate-discretization"


class TooFewDistinctValuesError(BinningError):
    category = "too-few-distinct-values"


class EmptyBinError(ProxidoseError):
    category = "empty-bin"


class BinUnderflowError(ProxidoseError):
    category = "bin-underflow"


class ProxyBinsError(ProxidoseError):
    """Tested-treatment bin count must exceed the proxy bin count."""

    category = "proxy-bins"


class AssumptionViolation(ProxidoseError):
    category = "assumption-violation"


class DegenerateInputError(ProxidoseError):
    category = "degenerate-input"


class SingularSystemError(ProxidoseError):
    category = "singular-system"
