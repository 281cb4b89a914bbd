"""
Exception types for gym-smooth-auctions.
"""


class AuctionError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(AuctionError, ValueError):
    """Invalid shapes, temperatures, estimator settings or CLI configuration."""


class DomainError(AuctionError, ValueError):
    """An argument lies outside the validity range of a closed-form formula."""
