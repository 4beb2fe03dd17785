"""Human review of model annotations: store, leases, HTTP API."""

from .api import create_app
from .store import (
    RULE_MISSING_ANNOTATION,
    RULE_MISSING_CORRECTION,
    InvalidReviewError,
    ReviewStore,
    ReviewSubmission,
    StaleLeaseError,
    UnknownItemError,
)

__all__ = [
    "RULE_MISSING_ANNOTATION",
    "RULE_MISSING_CORRECTION",
    "InvalidReviewError",
    "ReviewStore",
    "ReviewSubmission",
    "StaleLeaseError",
    "UnknownItemError",
    "create_app",
]
