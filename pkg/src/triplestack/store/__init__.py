"""Indexed, transactional in-memory triple store."""

from .core import (
    ERASED,
    EVENT_KINDS,
    SUBPROPERTY_OF,
    ChainIndex,
    Event,
    LiteralQuery,
    Record,
    Rollback,
    Store,
    StorePermissionError,
    Subscription,
    between,
    gc_paused,
    icase,
    prefix,
)
from .literals import LiteralTable, StoredLiteral, numeric_value, sort_key

__all__ = [
    "ERASED", "EVENT_KINDS", "SUBPROPERTY_OF", "ChainIndex", "Event", "LiteralQuery",
    "Record", "Rollback", "Store", "StorePermissionError", "Subscription",
    "between", "gc_paused", "icase", "prefix", "LiteralTable", "StoredLiteral", "numeric_value", "sort_key",
]
