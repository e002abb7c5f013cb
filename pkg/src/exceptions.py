# src/exceptions.py

"""
Exception hierarchy for Pledgepoint.
"""

from typing import Optional


class CrowdfundingError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(CrowdfundingError):
    """Invalid input to a domain operation (self-referral, negative amount, late event...)."""


class AssumptionViolation(CrowdfundingError):
    """A modelling assumption does not hold, e.g. a disconnected positive-value support."""


class MarketDomainError(CrowdfundingError):
    """Cost-function argument outside its domain, or an attempt to sell securities."""


class UnsupportedMechanismError(CrowdfundingError):
    """The operation is not defined for the requested mechanism kind."""


class OracleSizeError(CrowdfundingError):
    """
    The brute-force search would enumerate too many profiles.

    Args:
        count: Number of profiles the search would visit
        limit: Configured maximum
    """

    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"enumeration needs {count:,} profiles, limit is {limit:,}")


class ConfigError(CrowdfundingError):
    """Problem in an experiment file; carries the 1-based line number when it can be located."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        self.message = message
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
