"""The ordered literal table.

Numeric literals sort first, by value.  All others sort case-insensitively,
with ties broken so that uppercase precedes lowercase (``A a B b``).  Literals
that compare equal on text are ordered by language tag, then datatype.
"""

from __future__ import annotations

import re
from typing import Iterator, Optional, Union

from sortedcontainers import SortedKeyList

from ..rdfio import Literal

_INT = re.compile(r"[+-]?\d+\Z")
_FLOAT = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?\Z")

_TOP = "\U0010ffff"


def numeric_value(text: str) -> Optional[Union[int, float]]:
    """The number denoted by *text* if its whole lexical form is an integer
    or decimal float, else ``None``."""
    if _INT.match(text):
        return int(text)
    if _FLOAT.match(text):
        value = float(text)
        if value == value and value not in (float("inf"), float("-inf")):
            return value
    return None


_ASCII_FLAGS = {c: "0" if chr(c).isupper() else "1" for c in range(128)}


def case_flags(text: str) -> str:
    """One character per character of *text*: ``0`` if uppercase, else
    ``1``.  Comparing these strings puts uppercase first."""
    if text.isascii():
        return text.translate(_ASCII_FLAGS)
    return "".join("0" if c.isupper() else "1" for c in text)


_UNSET = object()


def sort_key(lit: Literal, num=_UNSET) -> tuple:
    text = lit.text
    if num is _UNSET:
        num = numeric_value(text)
    tail = (text.lower(), case_flags(text), text, lit.lang or "", lit.datatype or "")
    if num is not None:
        return (0, num) + tail
    return (1, 0) + tail


class StoredLiteral:
    __slots__ = ("value", "numeric", "use_count", "key")

    def __init__(self, value: Literal):
        self.value = value
        self.numeric = numeric_value(value.text)
        self.use_count = 0
        self.key = sort_key(value, self.numeric)

    def __repr__(self):
        return f"StoredLiteral({self.value!r}, uses={self.use_count})"


class LiteralTable:
    """Deduplicated, reference-counted, totally ordered literal store."""

    def __init__(self):
        self._by_value: dict = {}
        self._sorted = SortedKeyList(key=lambda sl: sl.key)
        self._numeric_count = 0

    def __len__(self):
        return len(self._by_value)

    def __iter__(self) -> Iterator[StoredLiteral]:
        return iter(self._sorted)

    def get(self, value: Literal) -> Optional[StoredLiteral]:
        return self._by_value.get(value)

    def acquire(self, value: Literal) -> tuple:
        """Add one use of *value*; returns ``(stored, is_new)``."""
        stored = self._by_value.get(value)
        new = stored is None
        if new:
            stored = self._by_value[value] = StoredLiteral(value)
            self._sorted.add(stored)
            if stored.numeric is not None:
                self._numeric_count += 1
        stored.use_count += 1
        return stored, new

    def acquire_many(self, values) -> list:
        """Add one use of each value; returns the values that were new."""
        by_value = self._by_value
        new = []
        for value in values:
            stored = by_value.get(value)
            if stored is None:
                stored = by_value[value] = StoredLiteral(value)
                new.append(stored)
                if stored.numeric is not None:
                    self._numeric_count += 1
            stored.use_count += 1
        self._sorted.update(new)
        return [sl.value for sl in new]

    def release(self, value: Literal) -> bool:
        """Drop one use of *value*; returns True when that was the last use."""
        stored = self._by_value[value]
        stored.use_count -= 1
        if stored.use_count:
            return False
        del self._by_value[value]
        self._sorted.remove(stored)
        if stored.numeric is not None:
            self._numeric_count -= 1
        return True

    def _numerics(self):
        return self._sorted.islice(0, self._numeric_count)

    def search(self, kind: str, key) -> Iterator[StoredLiteral]:
        """Yield stored literals in table order.

        ``prefix``: text starts with *key*, ignoring case.
        ``range``: numeric value within ``key = (lo, hi)``, inclusive.
        ``icase``: text equals *key* ignoring case.
        ``exact``: text equals *key*.
        """
        if kind == "range":
            lo, hi = key
            if lo > hi:
                raise ValueError(f"invalid range: {lo} > {hi}")
            for stored in self._sorted.irange_key(min_key=(0, lo)):
                if stored.numeric is None or stored.numeric > hi:
                    return
                yield stored
            return
        if kind not in ("prefix", "icase", "exact"):
            raise ValueError(f"unknown literal search kind {kind!r}")
        folded = key.lower()
        if kind == "prefix":
            for stored in self._numerics():
                if stored.value.text.lower().startswith(folded):
                    yield stored
            upper = (1, 0, folded + _TOP)
        else:
            for stored in self._numerics():
                text = stored.value.text
                if text.lower() == folded and (kind == "icase" or text == key):
                    yield stored
            upper = (1, 0, folded, "2")
        for stored in self._sorted.irange_key(min_key=(1, 0, folded), max_key=upper):
            if kind == "exact" and stored.value.text != key:
                continue
            yield stored
