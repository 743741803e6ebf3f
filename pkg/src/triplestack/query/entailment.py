"""Entailment modules.

An entailment module answers ``triples(s, p, o)`` (``None`` is a wildcard)
over the deductive closure of the stored triples under some language.
Modules are looked up by name, and new ones can be registered at runtime
with :func:`register_entailment`.

``raw``
    Stored triples, plus ``rdfs:subPropertyOf`` closure on the predicate.
``rdf``
    ``raw`` plus ``(P rdf:type rdf:Property)`` for every predicate in use
    and ``(S rdf:type rdfs:Resource)`` for every subject.
``rdfs``
    ``raw`` plus ``rdf:type`` closed over ``rdfs:subClassOf`` and
    reflexive-transitive ``rdfs:subClassOf``/``rdfs:subPropertyOf``.  It
    does not include the ``rdf`` module's axiomatic triples.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterator

from ..rdfio import RDF_NS, RDFS_NS, Iri, Literal, Triple
from ..store import LiteralQuery, Store

RDF_TYPE = Iri(RDF_NS + "type")
RDF_PROPERTY = Iri(RDF_NS + "Property")
RDFS_RESOURCE = Iri(RDFS_NS + "Resource")
RDFS_CLASS = Iri(RDFS_NS + "Class")
SUBCLASS_OF = Iri(RDFS_NS + "subClassOf")
SUBPROPERTY_OF = Iri(RDFS_NS + "subPropertyOf")


class UnknownEntailment(KeyError):
    def __str__(self):
        return f"unknown entailment {self.args[0]!r}"


def _fits(term, pattern) -> bool:
    if pattern is None:
        return True
    if isinstance(pattern, LiteralQuery):
        return isinstance(term, Literal) and pattern.matches(term)
    return term == pattern


def _closure(start, edges: Callable) -> list:
    """Nodes reachable from *start* through *edges* (reflexive), in
    breadth-first order; cycles are cut by the visited set."""
    seen = {start}
    order = [start]
    i = 0
    while i < len(order):
        for nxt in edges(order[i]):
            if nxt not in seen:
                seen.add(nxt)
                order.append(nxt)
        i += 1
    return order


class Entailment:
    name = "?"

    def __init__(self, store: Store):
        self.store = store

    def triples(self, s=None, p=None, o=None) -> Iterator[Triple]:
        raise NotImplementedError

    def __call__(self, s=None, p=None, o=None):
        return self.triples(s, p, o)


class RawEntailment(Entailment):
    name = "raw"

    def _supers(self, p):
        return _closure(p, lambda q: [t.object for t in self.store.triples(q, SUBPROPERTY_OF, None)
                                       if isinstance(t.object, Iri)])

    def _subs(self, p):
        return _closure(p, lambda q: [t.subject for t in self.store.triples(None, SUBPROPERTY_OF, q)
                                       if isinstance(t.subject, Iri)])

    def triples(self, s=None, p=None, o=None):
        if isinstance(s, Literal) or (p is not None and not isinstance(p, Iri)):
            return
        seen = set()
        if p is not None:
            for q in self._subs(p):
                for t in self.store.triples(s, q, o):
                    out = Triple(t.subject, p, t.object)
                    if out not in seen:
                        seen.add(out)
                        yield out
            return
        for t in self.store.triples(s, None, o):
            for q in self._supers(t.predicate):
                out = Triple(t.subject, q, t.object)
                if out not in seen:
                    seen.add(out)
                    yield out


class RdfEntailment(RawEntailment):
    name = "rdf"

    def triples(self, s=None, p=None, o=None):
        seen = set()
        for t in super().triples(s, p, o):
            seen.add(t)
            yield t
        if not _fits(RDF_TYPE, p):
            return
        if _fits(RDF_PROPERTY, o):
            preds = self.store.predicates()
            for name in preds:
                t = Triple(Iri(name), RDF_TYPE, RDF_PROPERTY)
                if _fits(t.subject, s) and t not in seen:
                    seen.add(t)
                    yield t
        if _fits(RDFS_RESOURCE, o):
            for subject in _subjects(self.store, s):
                t = Triple(subject, RDF_TYPE, RDFS_RESOURCE)
                if t not in seen:
                    seen.add(t)
                    yield t


def _subjects(store, s):
    if s is not None:
        if store.has(s, None, None):
            yield s
        return
    seen = set()
    for t in store.triples():
        if t.subject not in seen:
            seen.add(t.subject)
            yield t.subject


class RdfsEntailment(RawEntailment):
    name = "rdfs"

    def _edges(self, prop, forward):
        raw = RawEntailment(self.store)
        if forward:
            return lambda x: [t.object for t in raw.triples(x, prop, None) if not isinstance(t.object, Literal)]
        return lambda x: [t.subject for t in raw.triples(None, prop, x)]

    def _nodes(self, prop):
        raw = RawEntailment(self.store)
        out = {}
        for t in raw.triples(None, prop, None):
            out.setdefault(t.subject, None)
            if not isinstance(t.object, Literal):
                out.setdefault(t.object, None)
        if prop == SUBCLASS_OF:
            for t in raw.triples(None, RDF_TYPE, RDFS_CLASS):
                out.setdefault(t.subject, None)
        else:
            for name in self.store.predicates():
                out.setdefault(Iri(name), None)
        return list(out)

    def _hierarchy(self, prop, s, o):
        up, down = self._edges(prop, True), self._edges(prop, False)
        if s is not None:
            if isinstance(s, Literal) or s not in self._nodes(prop):
                return
            for sup in _closure(s, up):
                if _fits(sup, o):
                    yield Triple(s, prop, sup)
        elif o is not None and not isinstance(o, (Literal, LiteralQuery)):
            if o not in self._nodes(prop):
                return
            for sub in _closure(o, down):
                yield Triple(sub, prop, o)
        elif o is None:
            for node in self._nodes(prop):
                for sup in _closure(node, up):
                    yield Triple(node, prop, sup)

    def _types(self, s, o):
        up, down = self._edges(SUBCLASS_OF, True), self._edges(SUBCLASS_OF, False)
        raw = RawEntailment(self.store)
        if o is not None and s is None:
            if isinstance(o, (Literal, LiteralQuery)):
                return
            for cls in _closure(o, down):
                for t in raw.triples(None, RDF_TYPE, cls):
                    yield Triple(t.subject, RDF_TYPE, o)
            return
        for t in raw.triples(s, RDF_TYPE, None):
            if isinstance(t.object, Literal):
                if _fits(t.object, o):
                    yield t
                continue
            for cls in _closure(t.object, up):
                if _fits(cls, o):
                    yield Triple(t.subject, RDF_TYPE, cls)

    def triples(self, s=None, p=None, o=None):
        if isinstance(s, Literal) or (p is not None and not isinstance(p, Iri)):
            return
        seen = set()
        special = (RDF_TYPE, SUBCLASS_OF, SUBPROPERTY_OF)
        sources = []
        if p is None or p not in special:
            base = super().triples(s, p, o)
            if p is None:
                base = (t for t in base if t.predicate not in special)
            sources.append(base)
        if p is None or p == RDF_TYPE:
            sources.append(self._types(s, o))
        if p is None or p == SUBCLASS_OF:
            sources.append(self._hierarchy(SUBCLASS_OF, s, o))
        if p is None or p == SUBPROPERTY_OF:
            sources.append(self._hierarchy(SUBPROPERTY_OF, s, o))
        for src in sources:
            for t in src:
                if t not in seen:
                    seen.add(t)
                    yield t


_registry: dict = {}
_registry_lock = threading.Lock()


def register_entailment(name: str, factory: Callable[[Store], Entailment]) -> None:
    with _registry_lock:
        _registry[name] = factory


def get_entailment(name: str) -> Callable[[Store], Entailment]:
    try:
        return _registry[name]
    except KeyError:
        raise UnknownEntailment(name) from None


def entailment(name: str, store: Store) -> Entailment:
    """Instantiate the entailment module *name* over *store*."""
    return get_entailment(name)(store)


def entailment_names() -> list:
    return sorted(_registry)


register_entailment("raw", RawEntailment)
register_entailment("rdf", RdfEntailment)
register_entailment("rdfs", RdfsEntailment)
