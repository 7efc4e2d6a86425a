"""Dense distinct queries: selection, assignment, losses and a synthetic benchmark."""

from .geometry import Box, GeometryError, area, giou, iou
from .selection import Query, QuerySet, distinct_query_selection, topk_per_level

__version__ = "0.1.0"

__all__ = [
    "Box",
    "GeometryError",
    "Query",
    "QuerySet",
    "area",
    "distinct_query_selection",
    "giou",
    "iou",
    "topk_per_level",
]
