"""Blinded expert-rating backend: plans, slice rendering, HTTP service."""

from .plan import (
    Assignment,
    CaseEntry,
    RATING_BANDS,
    ReviewPlan,
    category_for,
    create_plan,
)
from .service import ReviewService, create_app

__all__ = [
    "Assignment",
    "CaseEntry",
    "RATING_BANDS",
    "ReviewPlan",
    "category_for",
    "create_plan",
    "ReviewService",
    "create_app",
]
