"""Exception hierarchy shared by all modules."""


class FlexAuctionError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FlexAuctionError, ValueError):
    """An argument lies outside the domain of the operation."""


class RangeError(FlexAuctionError, ValueError):
    """A target value lies above the range of a monotone map."""


class ModelError(FlexAuctionError, ValueError):
    """A consumer type model is malformed or violates a required assumption."""


class ContractViolation(FlexAuctionError, ValueError):
    """A caller broke a documented precondition."""


class CapacityError(FlexAuctionError, RuntimeError):
    """A brute-force enumeration would exceed its size guard."""


class ConfigError(FlexAuctionError, ValueError):
    """A configuration or input file could not be parsed."""
