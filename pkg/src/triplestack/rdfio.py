"""RDF terms and RDF/XML reading and writing.

Only a subset of RDF/XML is accepted: an ``rdf:RDF`` root holding node
elements (``rdf:Description`` or typed), ``rdf:about``, ``rdf:resource``,
``rdf:nodeID``, nested node elements, property attributes,
``rdf:datatype`` and inherited ``xml:lang``/``xml:base``.  ``rdf:ID``,
``rdf:parseType``, ``rdf:li`` and friends raise
:class:`UnsupportedConstruct`.

Blank nodes are named ``__<source>#<n>`` with ``n`` counting from 1 within
each parse.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Optional, Union
from urllib.parse import urljoin, urlsplit

from . import markup
from .markup import Element, Text

RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS_NS = "http://www.w3.org/2000/01/rdf-schema#"
XSD_NS = "http://www.w3.org/2001/XMLSchema#"
XML_NS = "http://www.w3.org/XML/1998/namespace"

RDF_TYPE = RDF_NS + "type"


class RdfError(ValueError):
    pass


class UnsupportedConstruct(RdfError):
    def __init__(self, construct, element, location=None):
        self.construct = construct
        self.element = element
        msg = f"unsupported RDF/XML construct {construct} on element <{element}>"
        if location:
            msg = f"{location}: {msg}"
        super().__init__(msg)


@dataclass(frozen=True, order=True)
class Iri:
    value: str

    def __str__(self):
        return self.value


@dataclass(frozen=True, order=True)
class BNode:
    id: str

    def __str__(self):
        return self.id


@dataclass(frozen=True)
class Literal:
    """Plain literal, or language-tagged (``lang``) or typed (``datatype``)."""

    text: str
    lang: Optional[str] = None
    datatype: Optional[str] = None

    def __post_init__(self):
        if self.lang is not None:
            if not self.lang:
                raise RdfError("empty language tag")
            if self.datatype is not None:
                raise RdfError("a literal cannot have both a language and a datatype")
            if self.lang != self.lang.lower():
                object.__setattr__(self, "lang", self.lang.lower())

    def __hash__(self):
        d = self.__dict__
        h = d.get("_hash")
        if h is None:
            h = d["_hash"] = hash((self.text, self.lang, self.datatype))
        return h

    @classmethod
    def trusted(cls, text: str, lang: Optional[str] = None, datatype: Optional[str] = None) -> "Literal":
        """Build without validation; *lang* must already be lowercase and
        at most one of *lang* and *datatype* may be set."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "__dict__", {"text": text, "lang": lang, "datatype": datatype})
        return obj

    def __str__(self):
        return self.text


Term = Union[Iri, BNode, Literal]


class Triple(NamedTuple):
    subject: Term
    predicate: Iri
    object: Term


def check_triple(t: Triple) -> None:
    if not isinstance(t.subject, (Iri, BNode)):
        raise RdfError(f"subject must be an IRI or blank node: {t.subject!r}")
    if not isinstance(t.predicate, Iri):
        raise RdfError(f"predicate must be an IRI: {t.predicate!r}")
    if not isinstance(t.object, (Iri, BNode, Literal)):
        raise RdfError(f"bad object: {t.object!r}")


# -- reading -----------------------------------------------------------------------

_RESERVED_ATTRS = {"about", "resource", "nodeID", "datatype"}
_UNSUPPORTED_ATTRS = {"ID", "parseType", "bagID", "aboutEach", "aboutEachPrefix"}
_UNSUPPORTED_ELEMENTS = {"li"}


class _Context:
    """Per-parse state: bnode numbering and the inherited scope at the root."""

    def __init__(self, source_name, base):
        self.source_name = source_name
        self.base = base
        self.counter = 0
        self.node_ids: dict = {}
        self.location = None

    def new_bnode(self):
        self.counter += 1
        return BNode(f"__{self.source_name}#{self.counter}")

    def named_bnode(self, label):
        node = self.node_ids.get(label)
        if node is None:
            node = self.node_ids[label] = self.new_bnode()
        return node


class _Scope(NamedTuple):
    ns: dict
    lang: Optional[str]
    base: Optional[str]


def _enter(scope: _Scope, attrs: dict) -> _Scope:
    ns, lang, base = scope
    changed = False
    for name, value in attrs.items():
        if name == "xmlns" or name.startswith("xmlns:"):
            if not changed:
                ns = dict(ns)
                changed = True
            ns[name[6:]] = value
        elif name == "xml:lang":
            lang = value or None
        elif name == "xml:base":
            base = value
    return _Scope(ns, lang, base)


def _qname(name, scope, ctx, attribute=False):
    prefix, _, local = name.rpartition(":")
    if prefix == "xml":
        return XML_NS + local
    if not prefix and attribute and "" not in scope.ns:
        raise RdfError(f"{ctx.location}: unqualified attribute {name!r}")
    try:
        return scope.ns[prefix] + local
    except KeyError:
        raise RdfError(f"{ctx.location}: undeclared namespace prefix in {name!r}") from None


def _resolve(ref, scope, ctx):
    if urlsplit(ref).scheme:
        return Iri(ref)
    if not scope.base:
        raise RdfError(f"{ctx.location}: relative IRI {ref!r} without a base")
    return Iri(urljoin(scope.base, ref))


def _split_attrs(elem, scope, ctx):
    """Classify attributes into (rdf-reserved dict, property list)."""
    rdf, props = {}, []
    for name, value in elem.attributes.items():
        if name == "xmlns" or name.startswith("xmlns:") or name.startswith("xml:"):
            continue
        iri = _qname(name, scope, ctx, attribute=True)
        if iri.startswith(RDF_NS):
            local = iri[len(RDF_NS):]
            if local in _UNSUPPORTED_ATTRS:
                raise UnsupportedConstruct("rdf:" + local, elem.tag, ctx.location)
            if local in _RESERVED_ATTRS:
                rdf[local] = value
                continue
        props.append((iri, value))
    return rdf, props


def _element_children(elem, ctx, allow_text=False):
    kids = [c for c in elem.children if isinstance(c, Element)]
    if kids or not allow_text:
        for child in elem.children:
            if isinstance(child, Text) and not child.content.isspace():
                raise RdfError(f"{ctx.location}: unexpected text inside <{elem.tag}>")
    return kids


def _property_attributes(subject, props, scope, out):
    for iri, value in props:
        if iri == RDF_TYPE:
            out.append(Triple(subject, Iri(RDF_TYPE), Iri(value)))
        else:
            out.append(Triple(subject, Iri(iri), Literal(value, scope.lang)))


def _node_element(elem, scope, ctx, out, link=None):
    scope = _enter(scope, elem.attributes)
    tag = _qname(elem.tag, scope, ctx)
    if tag.startswith(RDF_NS) and tag[len(RDF_NS):] in _UNSUPPORTED_ELEMENTS:
        raise UnsupportedConstruct(elem.tag, elem.tag, ctx.location)
    rdf, props = _split_attrs(elem, scope, ctx)
    if "resource" in rdf or "datatype" in rdf:
        raise RdfError(f"{ctx.location}: rdf:resource/rdf:datatype not allowed on node element <{elem.tag}>")
    if "about" in rdf:
        subject = _resolve(rdf["about"], scope, ctx)
    elif "nodeID" in rdf:
        subject = ctx.named_bnode(rdf["nodeID"])
    else:
        subject = ctx.new_bnode()
    if link is not None:
        out.append(Triple(link[0], link[1], subject))
    if tag != RDF_NS + "Description":
        out.append(Triple(subject, Iri(RDF_TYPE), Iri(tag)))
    _property_attributes(subject, props, scope, out)
    for child in _element_children(elem, ctx):
        _property_element(child, subject, scope, ctx, out)
    return subject


def _property_element(elem, subject, scope, ctx, out):
    scope = _enter(scope, elem.attributes)
    pred = _qname(elem.tag, scope, ctx)
    if pred.startswith(RDF_NS) and pred[len(RDF_NS):] in _UNSUPPORTED_ELEMENTS:
        raise UnsupportedConstruct(elem.tag, elem.tag, ctx.location)
    predicate = Iri(pred)
    rdf, props = _split_attrs(elem, scope, ctx)
    if "about" in rdf:
        raise RdfError(f"{ctx.location}: rdf:about not allowed on property element <{elem.tag}>")
    kids = _element_children(elem, ctx, allow_text=True)
    if kids:
        if len(kids) > 1 or rdf or props:
            raise RdfError(f"{ctx.location}: property element <{elem.tag}> must contain one node element")
        _node_element(kids[0], scope, ctx, out, link=(subject, predicate))
        return
    if "resource" in rdf or "nodeID" in rdf or props:
        if "datatype" in rdf:
            raise RdfError(f"{ctx.location}: rdf:datatype on a resource property <{elem.tag}>")
        if "resource" in rdf:
            obj = _resolve(rdf["resource"], scope, ctx)
        elif "nodeID" in rdf:
            obj = ctx.named_bnode(rdf["nodeID"])
        else:
            obj = ctx.new_bnode()
        out.append(Triple(subject, predicate, obj))
        _property_attributes(obj, props, scope, out)
        return
    text = "".join(c.content for c in elem.children if isinstance(c, Text))
    if "datatype" in rdf:
        lit = Literal(text, datatype=_resolve(rdf["datatype"], scope, ctx).value)
    else:
        lit = Literal(text, scope.lang)
    out.append(Triple(subject, predicate, lit))


def process_rdf(
    source,
    source_name: str,
    action: Callable[[list, str], None],
    base: Optional[str] = None,
) -> None:
    """Parse RDF/XML from *source*, calling ``action(triples, location)`` once
    per top-level description, where *location* is ``"source:line"``."""
    ctx = _Context(source_name, base)
    root_scope: list = []
    depth = [0]

    def on_begin(tag, attrs, parser):
        if depth[0] == 0:
            scope = _enter(_Scope({}, None, base), attrs)
            ctx.location = f"{source_name}:{parser.line}"
            if _qname(tag, scope, ctx) == RDF_NS + "RDF":
                root_scope.append(scope)
                depth[0] = 1
                return
            # a lone node element as document root
            elem = parser.read_element()
            out: list = []
            _node_element(elem, _Scope({}, None, base), ctx, out)
            action(out, ctx.location)
            return
        location = f"{source_name}:{parser.line}"
        ctx.location = location
        elem = parser.read_element()
        out = []
        _node_element(elem, root_scope[0], ctx, out)
        action(out, location)

    def on_text(text, parser):
        if not text.isspace():
            raise RdfError(f"{source_name}:{parser.line}: unexpected text in rdf:RDF")

    opts = markup.ParseOptions(mode="xml", source_name=source_name)
    markup.parse_events(source, opts, on_begin=on_begin, on_text=on_text)


def load_rdf(source, source_name: str = "input", base: Optional[str] = None) -> list:
    """Parse a whole RDF/XML document into a list of triples."""
    triples: list = []
    process_rdf(source, source_name, lambda batch, _loc: triples.extend(batch), base=base)
    return triples


# -- writing -----------------------------------------------------------------------

_NCNAME = re.compile(r"[^\W\d][\w.\-]*\Z")


def _split_iri(iri):
    for i in range(len(iri) - 1, -1, -1):
        if iri[i] in "#/:":
            local = iri[i + 1:]
            if local and _NCNAME.match(local):
                return iri[:i + 1], local
            break
    # largest NCName suffix
    m = re.search(r"[^\W\d][\w.\-]*\Z", iri)
    if m and m.start() > 0:
        return iri[:m.start()], m.group()
    raise RdfError(f"cannot write predicate {iri!r} as an XML element name")


def write_rdf_xml(sink, triples: Iterable[Triple]) -> None:
    """Write *triples* as RDF/XML to *sink* (anything with ``write``)."""
    triples = list(triples)
    for t in triples:
        check_triple(t)
    prefixes = {RDF_NS: "rdf"}
    bnodes: dict = {}

    def node_id(b):
        if b not in bnodes:
            bnodes[b] = f"b{len(bnodes) + 1}"
        return bnodes[b]

    def qname(iri):
        ns, local = _split_iri(iri)
        if ns not in prefixes:
            prefixes[ns] = f"ns{len(prefixes)}"
        return f"{prefixes[ns]}:{local}"

    by_subject: dict = {}
    for t in triples:
        by_subject.setdefault(t.subject, []).append(t)
    q = markup.quote_attribute
    body = []
    for subject, group in by_subject.items():
        if isinstance(subject, BNode):
            body.append(f'  <rdf:Description rdf:nodeID="{node_id(subject)}">\n')
        else:
            body.append(f'  <rdf:Description rdf:about="{q(subject.value)}">\n')
        for t in group:
            name = qname(t.predicate.value)
            o = t.object
            if isinstance(o, Iri):
                body.append(f'    <{name} rdf:resource="{q(o.value)}"/>\n')
            elif isinstance(o, BNode):
                body.append(f'    <{name} rdf:nodeID="{node_id(o)}"/>\n')
            else:
                attrs = ""
                if o.lang:
                    attrs = f' xml:lang="{q(o.lang)}"'
                elif o.datatype:
                    attrs = f' rdf:datatype="{q(o.datatype)}"'
                body.append(f"    <{name}{attrs}>{markup.quote_text(o.text)}</{name}>\n")
        body.append("  </rdf:Description>\n")
    decls = "".join(f'\n    xmlns:{p}="{q(ns)}"' for ns, p in prefixes.items())
    sink.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    sink.write(f"<rdf:RDF{decls}>\n")
    for part in body:
        sink.write(part)
    sink.write("</rdf:RDF>\n")


def to_rdf_xml(triples) -> str:
    buf = io.StringIO()
    write_rdf_xml(buf, triples)
    return buf.getvalue()


def format_term(term: Term) -> str:
    """N-Triples style rendering, used for debugging output."""
    if isinstance(term, Iri):
        return f"<{term.value}>"
    if isinstance(term, BNode):
        return "_:" + re.sub(r"\W", "_", term.id)
    text = term.text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\r", "\\r")
    if term.lang:
        return f'"{text}"@{term.lang}'
    if term.datatype:
        return f'"{text}"^^<{term.datatype}>'
    return f'"{text}"'


def format_triple(t: Triple) -> str:
    return f"{format_term(t.subject)} {format_term(t.predicate)} {format_term(t.object)} ."


def isomorphic(a: Iterable[Triple], b: Iterable[Triple]) -> bool:
    """Graph isomorphism up to blank node renaming (backtracking search;
    fine for the small graphs used in tests and round-trip checks)."""
    a, b = set(a), set(b)
    if len(a) != len(b):
        return False
    ground_a = {t for t in a if not _has_bnode(t)}
    ground_b = {t for t in b if not _has_bnode(t)}
    if ground_a != ground_b:
        return False
    rest_a = sorted(a - ground_a, key=_shape)
    rest_b = b - ground_b
    bn_a = sorted({x for t in rest_a for x in t if isinstance(x, BNode)})
    bn_b = {x for t in rest_b for x in t if isinstance(x, BNode)}
    if len(bn_a) != len(bn_b):
        return False

    def sig(nodes, triples):
        out = {}
        for t in triples:
            for pos, x in enumerate(t):
                if isinstance(x, BNode):
                    out.setdefault(x, []).append((pos, t.predicate.value))
        return {k: sorted(v) for k, v in out.items()}

    sig_a, sig_b = sig(bn_a, rest_a), sig(bn_b, rest_b)

    def search(i, mapping, used):
        if i == len(bn_a):
            mapped = {Triple(*(mapping.get(x, x) for x in t)) for t in rest_a}
            return mapped == rest_b
        x = bn_a[i]
        for y in bn_b:
            if y in used or sig_a[x] != sig_b[y]:
                continue
            mapping[x] = y
            used.add(y)
            if search(i + 1, mapping, used):
                return True
            del mapping[x]
            used.discard(y)
        return False

    return search(0, {}, set())


def _has_bnode(t):
    return any(isinstance(x, BNode) for x in t)


def _shape(t):
    return tuple(type(x).__name__ + ("" if isinstance(x, BNode) else str(x)) for x in t)
