"""Optimal auctions for consumers with nested flexibility sets."""

from .dist import ConsumerTypeModel, PiecewiseLinearDensity, uniform_model
from .errors import (
    CapacityError,
    ConfigError,
    ContractViolation,
    DomainError,
    FlexAuctionError,
    ModelError,
    RangeError,
)
from .flex import FlexibilityStructure, assign_goods, is_adequate, minimal_removals
from .mechanism import AuctionOutcome, OptimalAuction, TypeProfile, allocate, critical_bid, run_auction

__version__ = "0.1.0"
