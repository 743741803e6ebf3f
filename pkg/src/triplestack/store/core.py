"""In-memory indexed triple store.

Resources are interned to integer handles.  Each live triple is a
:class:`Record` linked into five hashed index chains (S, P, O, SP, PO) plus
an unindexed list.  The predicate position hashes on the root of the
predicate's ``rdfs:subPropertyOf`` hierarchy, so a chain can hold records
of sibling predicates; lookups filter on the exact predicate.

All modifications go through transactions.  A transaction only records
actions; they are applied at commit, after the readers have drained, and
monitors are told about them at that point.
"""

from __future__ import annotations

import contextlib
import gc
import itertools
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, NamedTuple, Optional

from ..rdfio import RDFS_NS, BNode, Iri, Literal, Triple
from .literals import LiteralTable, numeric_value
from .locking import StoreLock

log = logging.getLogger(__name__)

SUBPROPERTY_OF = RDFS_NS + "subPropertyOf"
ERASED = 0x1
RESIZE_LOAD = 4

EVENT_KINDS = frozenset({
    "assert", "retract", "update", "new_literal", "old_literal",
    "transaction_begin", "transaction_end", "load",
})


@contextlib.contextmanager
def gc_paused():
    """Suspend cyclic garbage collection while building many acyclic
    objects; collection passes would otherwise dominate bulk loads."""
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


class StorePermissionError(RuntimeError):
    """A write was attempted while this thread has an open match iterator."""


class Rollback(Exception):
    """Raise inside a transaction to discard it.  The enclosing
    :meth:`Store.with_transaction` returns False instead of raising."""


@dataclass(frozen=True)
class LiteralQuery:
    """Object pattern matching a set of literals.

    kind is ``prefix`` (case-insensitive), ``range`` (numeric, inclusive,
    key is ``(lo, hi)``), ``icase`` or ``exact`` (text equality).
    """

    kind: str
    key: object

    def __post_init__(self):
        if self.kind == "range":
            lo, hi = self.key
            if lo > hi:
                raise ValueError(f"invalid range: {lo} > {hi}")
        elif self.kind not in ("prefix", "icase", "exact"):
            raise ValueError(f"unknown literal query kind {self.kind!r}")

    def matches(self, lit: Literal) -> bool:
        if self.kind == "range":
            num = numeric_value(lit.text)
            return num is not None and self.key[0] <= num <= self.key[1]
        if self.kind == "prefix":
            return lit.text.lower().startswith(self.key.lower())
        if self.kind == "icase":
            return lit.text.lower() == self.key.lower()
        return lit.text == self.key


def prefix(text: str) -> LiteralQuery:
    return LiteralQuery("prefix", text)


def between(lo, hi) -> LiteralQuery:
    return LiteralQuery("range", (lo, hi))


def icase(text: str) -> LiteralQuery:
    return LiteralQuery("icase", text)


class Event(NamedTuple):
    kind: str
    triple: Optional[Triple] = None
    source: Optional[str] = None
    line: int = 0
    new: Optional[Triple] = None
    literal: Optional[Literal] = None
    txn: Optional[int] = None
    phase: Optional[str] = None


class Predicate:
    __slots__ = ("handle", "term", "parents", "root", "count")

    def __init__(self, handle, term):
        self.handle = handle
        self.term = term
        self.parents: dict = {}
        self.root = handle
        self.count = 0

    def __repr__(self):
        return f"Predicate({self.term.value!r}, root={self.root}, count={self.count})"


class Record:
    __slots__ = ("s", "p", "o", "source", "line", "flags", "triple")

    def __init__(self, s, p, o, source, line, triple):
        self.s = s
        self.p = p
        self.o = o
        self.source = source
        self.line = line
        self.flags = 0
        self.triple = triple

    @property
    def key(self):
        return (self.s, self.p.handle, self.o, self.source)

    @property
    def erased(self):
        return bool(self.flags & ERASED)

    def __repr__(self):
        return f"Record({self.triple}, {self.source}:{self.line})"


class ChainIndex:
    """Hash table of record chains.  Doubles when the mean chain length
    exceeds ``RESIZE_LOAD``."""

    _EMPTY: list = []

    def __init__(self, name: str, key: Callable, size: int = 16):
        self.name = name
        self.key = key
        self.count = 0
        self.resizes = 0
        self._buckets: list = [[] for _ in range(size)]
        self._mask = size - 1

    def add(self, rec):
        self._buckets[hash(self.key(rec)) & self._mask].append(rec)
        self.count += 1
        if self.count > RESIZE_LOAD * len(self._buckets):
            self.resize(2 * len(self._buckets))

    def remove(self, rec):
        bucket = self._buckets[hash(self.key(rec)) & self._mask]
        for i, other in enumerate(bucket):
            if other is rec:
                del bucket[i]
                self.count -= 1
                return
        raise KeyError(rec)

    def chain(self, key) -> list:
        return self._buckets[hash(key) & self._mask]

    def resize(self, size: int):
        if size & (size - 1) or size < 1:
            raise ValueError("index size must be a power of two")
        records = [r for b in self._buckets for r in b]
        self._buckets = [[] for _ in range(size)]
        self._mask = size - 1
        for rec in records:
            self._buckets[hash(self.key(rec)) & self._mask].append(rec)
        self.resizes += 1

    def load(self) -> dict:
        lengths = [len(b) for b in self._buckets]
        used = sum(1 for n in lengths if n)
        return {
            "buckets": len(lengths),
            "entries": self.count,
            "max_chain": max(lengths, default=0),
            "mean_chain": self.count / used if used else 0.0,
            "resizes": self.resizes,
        }


class _Txn:
    _ids = itertools.count(1)

    def __init__(self):
        self.id = next(self._ids)
        self.actions: list = []
        self.marks: list = []
        self.pending: dict = {}
        self.deleted: set = set()

    def rebuild_view(self):
        self.pending.clear()
        self.deleted.clear()
        for act in self.actions:
            self._account(act)

    def add(self, act):
        self.actions.append(act)
        self._account(act)

    def _account(self, act):
        kind = act[0]
        if kind == "assert":
            rec = act[1]
            self.pending[rec.key] = rec
            self.deleted.discard(rec.key)
        elif kind == "retract":
            self.pending.pop(act[1], None)
            self.deleted.add(act[1])
        elif kind == "update":
            self.pending.pop(act[1], None)
            self.deleted.add(act[1])
            self.pending[act[2].key] = act[2]
            self.deleted.discard(act[2].key)


class Subscription:
    def __init__(self, store, callback, kinds):
        self._store = store
        self.callback = callback
        self.kinds = kinds

    def cancel(self):
        with self._store._monitor_lock:
            if self in self._store._monitors:
                self._store._monitors.remove(self)


class Store:
    def __init__(self, index_size: int = 16):
        self._names: dict = {}
        self._terms: list = []
        self._preds: dict = {}
        self._literals = LiteralTable()
        self._by_key: dict = {}
        self._all: dict = {}
        self._subject_counts: dict = {}
        self._object_counts: dict = {}
        self._source_counts: dict = {}
        self._indexes = {
            "s": ChainIndex("s", lambda r: r.s, index_size),
            "p": ChainIndex("p", lambda r: r.p.root, index_size),
            "o": ChainIndex("o", lambda r: r.o, index_size),
            "sp": ChainIndex("sp", lambda r: (r.s, r.p.root), index_size),
            "po": ChainIndex("po", lambda r: (r.p.root, r.o), index_size),
        }
        self._lock = StoreLock()
        self._local = threading.local()
        self._monitors: list = []
        self._monitor_lock = threading.Lock()
        self._intern_lock = threading.Lock()
        self.generation = 0

    # -- interning ---------------------------------------------------------------

    def intern(self, text: str) -> int:
        handle = self._names.get(text)
        if handle is None:
            with self._intern_lock:
                handle = self._names.get(text)
                if handle is None:
                    handle = len(self._terms)
                    term = BNode(text) if text.startswith("__") else Iri(text)
                    self._terms.append(term)
                    self._names[text] = handle
        return handle

    def resolve(self, handle: int) -> str:
        return str(self._terms[handle])

    def lookup(self, text: str) -> Optional[int]:
        return self._names.get(text)

    def term(self, handle: int):
        return self._terms[handle]

    def _node(self, term, create):
        if isinstance(term, (Iri, BNode)):
            text = str(term)
        elif isinstance(term, str):
            text = term
        else:
            raise TypeError(f"expected an IRI or blank node, got {term!r}")
        return self.intern(text) if create else self._names.get(text)

    def _predicate(self, handle: int) -> Predicate:
        pred = self._preds.get(handle)
        if pred is None:
            pred = self._preds[handle] = Predicate(handle, self._terms[handle])
        return pred

    def _object(self, term, create):
        if isinstance(term, Literal):
            return term
        return self._node(term, create)

    # -- transactions ------------------------------------------------------------

    def _txn(self) -> Optional[_Txn]:
        return getattr(self._local, "txn", None)

    def _check_no_reads(self):
        if self._lock.my_reads:
            raise StorePermissionError("cannot modify the store while this thread has an open match iterator")

    @contextlib.contextmanager
    def transaction(self):
        """Context manager form of :meth:`with_transaction`.  Raising
        :class:`Rollback` inside the block discards it silently."""
        txn = self._txn()
        if txn is None:
            self._check_no_reads()
            self._lock.acquire_write()
            txn = self._local.txn = _Txn()
            try:
                try:
                    yield txn
                except Rollback:
                    return
                finally:
                    self._local.txn = None
                self._commit(txn)
            finally:
                self._lock.release_write()
            return
        mark = len(txn.actions)
        txn.marks.append(mark)
        try:
            yield txn
        except BaseException as exc:
            del txn.actions[mark:]
            txn.rebuild_view()
            if not isinstance(exc, Rollback):
                raise
        finally:
            txn.marks.pop()

    @contextlib.contextmanager
    def writes_blocked(self):
        """Exclude writers (readers continue) for the duration of the block."""
        if self._txn() is not None:
            yield
            return
        self._lock.acquire_write()
        try:
            yield
        finally:
            self._lock.release_write()

    def with_transaction(self, body: Callable, *args, **kwargs):
        """Run *body* in a (possibly nested) transaction.  Returns its result,
        or False when it raised :class:`Rollback`; other errors propagate
        after the transaction's actions are discarded."""
        result = False
        with self.transaction():
            result = body(*args, **kwargs)
        return result

    @property
    def in_transaction(self) -> bool:
        return self._txn() is not None

    def _record(self, act):
        self._check_no_reads()
        txn = self._txn()
        if txn is None:
            with self.transaction() as txn:
                txn.add(act)
        else:
            txn.add(act)

    def _commit(self, txn: _Txn):
        while txn is not None and txn.actions:
            self._lock.begin_commit()
            followup = None
            try:
                events = self._apply(txn)
                if events:
                    self.generation += 1
                    followup = self._deliver(events)
            finally:
                self._lock.end_commit()
            txn = followup

    # -- write operations ------------------------------------------------------------

    def _make_record(self, s, p, o, source, line) -> Record:
        if isinstance(s, Literal):
            raise TypeError("a literal cannot be a subject")
        if not isinstance(p, (Iri, str)):
            raise TypeError(f"predicate must be an IRI, got {p!r}")
        sh = self._node(s, True)
        pred = self._predicate(self._node(p, True))
        ok = self._object(o, True)
        obj = o if isinstance(o, Literal) else self._terms[ok]
        triple = Triple(self._terms[sh], pred.term, obj)
        return Record(sh, pred, ok, source, int(line), triple)

    def assert_triple(self, s, p, o, source: str = "user", line: int = 0) -> None:
        self._check_no_reads()
        self._record(("assert", self._make_record(s, p, o, source, line)))

    def add(self, triple: Triple, source: str = "user", line: int = 0) -> None:
        s, p, o = triple
        self.assert_triple(s, p, o, source, line)

    def retract_triples(self, s=None, p=None, o=None, source: Optional[str] = None) -> int:
        self._check_no_reads()
        with self.transaction():
            keys = [r.key for r in self._collect(s, p, o, source)]
            for key in keys:
                self._record(("retract", key))
        return len(keys)

    def update_triple(self, old: Triple, new: Triple, source: Optional[str] = None) -> int:
        """Replace each live ``old`` triple (optionally of one source) by
        ``new``, keeping its source and line."""
        self._check_no_reads()
        with self.transaction():
            recs = self._collect(old.subject, old.predicate, old.object, source)
            for rec in recs:
                repl = self._make_record(new.subject, new.predicate, new.object, rec.source, rec.line)
                self._record(("update", rec.key, repl))
        return len(recs)

    def add_subproperty(self, p, super_p) -> None:
        self._check_no_reads()
        self._record(("subprop", self._node(p, True), self._node(super_p, True)))

    def record_load(self, source: str, phase: str) -> None:
        """Queue a ``load`` monitor event (phase ``begin`` or ``end``)."""
        self._record(("load", source, phase))

    def bulk_load(self, source: str, rows: Iterable, phase_events: bool = True) -> int:
        """Add ``(triple, line)`` rows of one source in a single commit.

        Faster than individual asserts: indexes are sized once and there is
        no per-action log.  Inside an open transaction it falls back to
        ordinary asserts so nesting semantics are kept.  Returns the number
        of triples that were new."""
        if self._txn() is not None:
            before = len(self._txn().pending)
            for (s, p, o), line in rows:
                self.assert_triple(s, p, o, source, line)
            return len(self._txn().pending) - before
        self._check_no_reads()
        self._lock.acquire_write()
        try:
            with gc_paused():
                return self._bulk_commit(source, rows, phase_events)
        finally:
            self._lock.release_write()

    def _bulk_commit(self, source, rows, phase_events):
        records = self._bulk_records(source, rows)
        txn = _Txn()
        self._lock.begin_commit()
        followup = None
        try:
            events, added = self._apply_bulk(txn.id, source, records, phase_events)
            if events:
                self.generation += 1
                followup = self._deliver(events)
        finally:
            self._lock.end_commit()
        if followup is not None:
            self._commit(followup)
        return added

    def _bulk_records(self, source, rows) -> list:
        # Keyed by object identity: decoders share one object per distinct
        # term, and identity lookups avoid rehashing dataclass terms.
        handles: dict = {}
        preds: dict = {}
        terms = self._terms
        out = []
        for (s, p, o), line in rows:
            sh = handles.get(id(s))
            if sh is None:
                if isinstance(s, Literal):
                    raise TypeError("a literal cannot be a subject")
                sh = self._node(s, True)
                handles[id(s)] = sh
            pred = preds.get(id(p))
            if pred is None:
                if not isinstance(p, (Iri, str)):
                    raise TypeError(f"predicate must be an IRI, got {p!r}")
                pred = preds[id(p)] = self._predicate(self._node(p, True))
            if isinstance(o, Literal):
                ok = obj = o
            else:
                ok = handles.get(id(o))
                if ok is None:
                    ok = self._node(o, True)
                    handles[id(o)] = ok
                obj = terms[ok]
            out.append(Record(sh, pred, ok, source, int(line), Triple(terms[sh], pred.term, obj)))
        return out

    def _apply_bulk(self, txn_id, source, records, phase_events):
        with self._monitor_lock:
            wanted = set().union(*(m.kinds for m in self._monitors)) if self._monitors else set()
        by_key = self._by_key
        fresh = []
        for rec in records:
            key = (rec.s, rec.p.handle, rec.o, rec.source)
            if key not in by_key:
                by_key[key] = rec
                fresh.append(rec)
        events = [Event("transaction_begin", txn=txn_id)]
        if phase_events:
            events.append(Event("load", source=source, phase="begin", txn=txn_id))
        total = len(by_key)
        for index in self._indexes.values():
            size = len(index._buckets)
            while total > RESIZE_LOAD * size:
                size *= 2
            if size != len(index._buckets):
                index.resize(size)
        new_literals = self._literals.acquire_many(
            [rec.o for rec in fresh if isinstance(rec.o, Literal)])
        if "new_literal" in wanted:
            events.extend(Event("new_literal", literal=lit) for lit in new_literals)
        all_recs = self._all
        subjects, objects = self._subject_counts, self._object_counts
        ix = self._indexes
        bs, ms = ix["s"]._buckets, ix["s"]._mask
        bp, mp = ix["p"]._buckets, ix["p"]._mask
        bo, mo = ix["o"]._buckets, ix["o"]._mask
        bsp, msp = ix["sp"]._buckets, ix["sp"]._mask
        bpo, mpo = ix["po"]._buckets, ix["po"]._mask
        hierarchy_changed = False
        for rec in fresh:
            s, o, pred = rec.s, rec.o, rec.p
            root = pred.root
            ho = hash(o)
            all_recs[id(rec)] = rec
            bs[hash(s) & ms].append(rec)
            bp[hash(root) & mp].append(rec)
            bo[ho & mo].append(rec)
            bsp[hash((s, root)) & msp].append(rec)
            bpo[hash((root, o)) & mpo].append(rec)
            pred.count += 1
            subjects[s] = subjects.get(s, 0) + 1
            objects[o] = objects.get(o, 0) + 1
            if pred.term.value == SUBPROPERTY_OF:
                hierarchy_changed |= self._edge_from(rec, +1)
        for ix in self._indexes.values():
            ix.count += len(fresh)
        if fresh:
            self._source_counts[source] = self._source_counts.get(source, 0) + len(fresh)
        if "assert" in wanted:
            events.extend(Event("assert", r.triple, r.source, r.line, txn=txn_id) for r in fresh)
        if hierarchy_changed:
            self._recompute_roots()
        if phase_events:
            events.append(Event("load", source=source, phase="end", txn=txn_id))
        if len(events) == 1:
            return [], 0
        events.append(Event("transaction_end", txn=txn_id))
        return events, len(fresh)

    def _collect(self, s, p, o, source):
        recs = []
        for rec in self._match_records(s, p, o):
            if source is None or rec.source == source:
                recs.append(rec)
        return recs

    # -- commit -------------------------------------------------------------------

    def _apply(self, txn: _Txn) -> list:
        events = [Event("transaction_begin", txn=txn.id)]
        hierarchy_changed = False
        for act in txn.actions:
            kind = act[0]
            if kind == "assert":
                rec = act[1]
                if rec.key in self._by_key:
                    continue
                self._link(rec, events)
                events.append(Event("assert", rec.triple, rec.source, rec.line, txn=txn.id))
                hierarchy_changed |= self._edge_from(rec, +1)
            elif kind == "retract":
                rec = self._by_key.get(act[1])
                if rec is None:
                    continue
                self._unlink(rec, events)
                events.append(Event("retract", rec.triple, rec.source, rec.line, txn=txn.id))
                hierarchy_changed |= self._edge_from(rec, -1)
            elif kind == "update":
                old = self._by_key.get(act[1])
                if old is None:
                    continue
                new = act[2]
                self._unlink(old, events)
                hierarchy_changed |= self._edge_from(old, -1)
                if new.key not in self._by_key:
                    self._link(new, events)
                    hierarchy_changed |= self._edge_from(new, +1)
                events.append(Event("update", old.triple, old.source, old.line, new=new.triple, txn=txn.id))
            elif kind == "subprop":
                self._add_edge(act[1], act[2], +1)
                hierarchy_changed = True
            elif kind == "load":
                events.append(Event("load", source=act[1], phase=act[2], txn=txn.id))
        if hierarchy_changed:
            self._recompute_roots()
        if len(events) == 1:
            return []
        events.append(Event("transaction_end", txn=txn.id))
        return events

    def _link(self, rec: Record, events):
        rec.flags &= ~ERASED
        if isinstance(rec.o, Literal):
            _, new = self._literals.acquire(rec.o)
            if new:
                events.append(Event("new_literal", literal=rec.o))
        self._by_key[rec.key] = rec
        self._all[id(rec)] = rec
        for index in self._indexes.values():
            index.add(rec)
        rec.p.count += 1
        _bump(self._subject_counts, rec.s, 1)
        _bump(self._object_counts, rec.o, 1)
        _bump(self._source_counts, rec.source, 1)

    def _unlink(self, rec: Record, events):
        rec.flags |= ERASED
        del self._by_key[rec.key]
        del self._all[id(rec)]
        for index in self._indexes.values():
            index.remove(rec)
        rec.p.count -= 1
        _bump(self._subject_counts, rec.s, -1)
        _bump(self._object_counts, rec.o, -1)
        _bump(self._source_counts, rec.source, -1)
        if isinstance(rec.o, Literal) and self._literals.release(rec.o):
            events.append(Event("old_literal", literal=rec.o))

    # -- predicate hierarchy --------------------------------------------------------

    def _edge_from(self, rec: Record, delta: int) -> bool:
        if rec.p.term.value != SUBPROPERTY_OF or isinstance(rec.o, Literal):
            return False
        self._add_edge(rec.s, rec.o, delta)
        return True

    def _add_edge(self, child: int, parent: int, delta: int):
        pred = self._predicate(child)
        self._predicate(parent)
        n = pred.parents.get(parent, 0) + delta
        if n > 0:
            pred.parents[parent] = n
        else:
            pred.parents.pop(parent, None)

    def _reach(self, handle):
        seen = {handle}
        todo = [handle]
        while todo:
            for parent in self._preds[todo.pop()].parents:
                if parent not in seen:
                    seen.add(parent)
                    todo.append(parent)
        return seen

    def _cached_reach(self, handle, cache):
        reach = cache.get(handle)
        if reach is None:
            reach = cache[handle] = self._reach(handle)
        return reach

    def _compute_root(self, handle, cache):
        terminal = []
        for node in self._cached_reach(handle, cache):
            # node lies in a terminal strongly connected component iff
            # everything it reaches can reach it back
            if all(node in self._cached_reach(m, cache) for m in self._cached_reach(node, cache)):
                terminal.append(node)
        return min(terminal)

    def _recompute_roots(self):
        cache: dict = {}
        changed = {}
        for handle, pred in self._preds.items():
            root = self._compute_root(handle, cache)
            if root != pred.root:
                changed[handle] = root
        if not changed:
            return
        moving = [r for r in self._all.values() if r.p.handle in changed]
        for name in ("p", "sp", "po"):
            for rec in moving:
                self._indexes[name].remove(rec)
        for handle, root in changed.items():
            self._preds[handle].root = root
        for name in ("p", "sp", "po"):
            for rec in moving:
                self._indexes[name].add(rec)

    def predicate_root(self, p) -> Optional[str]:
        h = self._node(p, False)
        if h is None or h not in self._preds:
            return None
        return self.resolve(self._preds[h].root)

    def subproperties(self, p) -> set:
        """Handles-free helper: all predicates whose parent closure includes
        *p* (reflexive), as IRIs."""
        target = self._node(p, False)
        if target is None:
            return {p if isinstance(p, Iri) else Iri(str(p))}
        out = set()
        cache: dict = {}
        for handle in self._preds:
            if target in self._cached_reach(handle, cache):
                out.add(self._terms[handle])
        out.add(self._terms[target])
        return out

    # -- monitors -------------------------------------------------------------------

    def monitor(self, callback: Callable[[Event], None], kinds: Iterable[str] = EVENT_KINDS) -> Subscription:
        kinds = frozenset(kinds)
        unknown = kinds - EVENT_KINDS
        if unknown:
            raise ValueError(f"unknown monitor events: {sorted(unknown)}")
        sub = Subscription(self, callback, kinds)
        with self._monitor_lock:
            self._monitors.append(sub)
        return sub

    def _deliver(self, events) -> Optional[_Txn]:
        with self._monitor_lock:
            subs = list(self._monitors)
        if not subs:
            return None
        followup = self._local.txn = _Txn()
        try:
            for ev in events:
                for sub in subs:
                    if ev.kind in sub.kinds:
                        try:
                            sub.callback(ev)
                        except Exception:
                            log.exception("store monitor %r failed on %s", sub.callback, ev.kind)
        finally:
            self._local.txn = None
        return followup

    # -- reading -------------------------------------------------------------------

    def match(self, s=None, p=None, o=None) -> Iterator[Record]:
        """Yield live records matching the pattern.  ``None`` is a wildcard;
        *o* may also be a :class:`Literal` or a :class:`LiteralQuery`."""
        self._lock.acquire_read()
        try:
            yield from self._match_records(s, p, o)
        finally:
            self._lock.release_read()

    def triples(self, s=None, p=None, o=None) -> Iterator[Triple]:
        for rec in self.match(s, p, o):
            yield rec.triple

    def has(self, s, p, o) -> bool:
        for _ in self.match(s, p, o):
            return True
        return False

    def _match_records(self, s, p, o):
        txn = self._txn()
        overlay = txn is not None and (txn.pending or txn.deleted)
        committed = self._committed(s, p, o)
        if not overlay:
            yield from committed
            return
        for rec in committed:
            if rec.key not in txn.deleted:
                yield rec
        sh = None if s is None else self._node(s, False)
        ph = None if p is None else self._node(p, False)
        for key, rec in list(txn.pending.items()):
            if key in self._by_key:
                continue
            if s is not None and rec.s != sh:
                continue
            if p is not None and rec.p.handle != ph:
                continue
            if o is not None and not _object_matches(rec, o, self):
                continue
            yield rec

    def _committed(self, s, p, o):
        sh = pred = None
        if s is not None:
            if isinstance(s, Literal):
                return
            sh = self._node(s, False)
            if sh is None:
                return
        if p is not None:
            ph = self._node(p, False)
            pred = self._preds.get(ph) if ph is not None else None
            if pred is None or not pred.count:
                return
        if o is None:
            okeys = None
        elif isinstance(o, LiteralQuery):
            okeys = [sl.value for sl in self._literals.search(o.kind, o.key)]
            if not okeys:
                return
        else:
            ok = self._object(o, False)
            if ok is None:
                return
            okeys = [ok]
        if okeys is not None and len(okeys) > 1 and sh is not None:
            wanted = set(okeys)
            chain = self._indexes["sp"].chain((sh, pred.root)) if pred else self._indexes["s"].chain(sh)
            for rec in chain:
                if rec.s == sh and (pred is None or rec.p is pred) and rec.o in wanted:
                    yield rec
            return
        for ok in (okeys if okeys is not None else (None,)):
            if sh is not None and pred is not None:
                chain = self._indexes["sp"].chain((sh, pred.root))
            elif sh is not None:
                chain = self._indexes["s"].chain(sh)
            elif pred is not None and ok is not None:
                chain = self._indexes["po"].chain((pred.root, ok))
            elif pred is not None:
                chain = self._indexes["p"].chain(pred.root)
            elif ok is not None:
                chain = self._indexes["o"].chain(ok)
            else:
                chain = self._all.values()
            for rec in chain:
                if rec.flags & ERASED:
                    continue
                if sh is not None and rec.s != sh:
                    continue
                if pred is not None and rec.p is not pred:
                    continue
                if ok is not None and not _same_object(rec.o, ok):
                    continue
                yield rec

    def literal_search(self, kind: str, key) -> list:
        """Stored literals matching *kind*/*key*, in table order."""
        LiteralQuery(kind, key)
        self._lock.acquire_read()
        try:
            return list(self._literals.search(kind, key))
        finally:
            self._lock.release_read()

    def literals(self) -> list:
        self._lock.acquire_read()
        try:
            return list(self._literals)
        finally:
            self._lock.release_read()

    # -- statistics ---------------------------------------------------------------

    def __len__(self):
        n = len(self._by_key)
        txn = self._txn()
        if txn is not None:
            # the owning thread sees its own pending writes
            n -= sum(1 for k in txn.deleted if k in self._by_key)
            n += sum(1 for k in txn.pending if k not in self._by_key)
        return n

    def statistics(self, indexes: bool = True) -> dict:
        """Counts used by the optimizer and the statistics endpoint.  Pass
        ``indexes=False`` to skip the per-index load figures."""
        self._lock.acquire_read()
        try:
            out = {
                "triple_count": len(self._by_key),
                "predicates": self._predicate_counts(),
                "distinct_subjects": len(self._subject_counts),
                "distinct_objects": len(self._object_counts),
                "literal_count": len(self._literals),
                "sources": dict(self._source_counts),
            }
            if indexes:
                out["indexes"] = {name: idx.load() for name, idx in self._indexes.items()}
            return out
        finally:
            self._lock.release_read()

    def _predicate_counts(self) -> dict:
        return {p.term.value: p.count for p in self._preds.values() if p.count}

    def predicates(self) -> dict:
        """Predicate IRI to number of live triples using it."""
        self._lock.acquire_read()
        try:
            return self._predicate_counts()
        finally:
            self._lock.release_read()

    def predicate_count(self, p) -> int:
        h = self._node(p, False)
        pred = self._preds.get(h) if h is not None else None
        return pred.count if pred else 0

    def sources(self) -> dict:
        return dict(self._source_counts)

    def resize_index(self, name: str, size: int) -> None:
        """Force a rehash of one index (exposed for testing)."""
        self._lock.acquire_write()
        try:
            self._lock.begin_commit()
            try:
                self._indexes[name].resize(size)
            finally:
                self._lock.end_commit()
        finally:
            self._lock.release_write()

    def records(self, source: Optional[str] = None) -> list:
        """Snapshot of live records, optionally of one source."""
        self._lock.acquire_read()
        try:
            return [r for r in self._all.values() if source is None or r.source == source]
        finally:
            self._lock.release_read()


def _same_object(a, b):
    if type(a) is not type(b):
        return False
    return a == b


def _object_matches(rec, o, store):
    if isinstance(o, LiteralQuery):
        return isinstance(rec.o, Literal) and o.matches(rec.o)
    if isinstance(o, Literal):
        return rec.o == o
    h = store._node(o, False)
    return h is not None and not isinstance(rec.o, Literal) and rec.o == h


def _bump(counts, key, delta):
    n = counts.get(key, 0) + delta
    if n:
        counts[key] = n
    else:
        del counts[key]
