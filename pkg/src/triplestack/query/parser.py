"""Parser for the conjunctive query language.

::

    USING ex = <http://example.org/>
    SELECT Name, Affil
    WHERE (ex:paper1, ex:author, Author),
          (Author, ex:name, Name),
          (Author, ex:affiliation, Affil)
    FILTER Name != "anonymous"
    DISTINCT LIMIT 10

Variables start with an uppercase letter.  Other terms are ``<iri>``,
``prefix:local``, bare names (resolved against the default namespace
declared with ``USING = <iri>``), quoted literals with an optional
``@lang`` or ``^^datatype`` suffix, and numbers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from ..rdfio import RDF_NS, RDFS_NS, XSD_NS, Iri, Literal

DEFAULT_PREFIXES = {"rdf": RDF_NS, "rdfs": RDFS_NS, "xsd": XSD_NS}
COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")


class QuerySyntaxError(ValueError):
    def __init__(self, message, line, column, token=None):
        self.message = message
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Number:
    """Numeric constant; matches any literal with this numeric value."""

    value: Union[int, float]
    text: str

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class Pattern:
    s: object
    p: object
    o: object

    def __iter__(self):
        return iter((self.s, self.p, self.o))

    @property
    def variables(self) -> frozenset:
        return frozenset(t.name for t in self if isinstance(t, Var))

    def __str__(self):
        return "(" + ", ".join(_show(t) for t in self) + ")"


@dataclass(frozen=True)
class Filter:
    op: str
    left: object
    right: object

    @property
    def variables(self) -> frozenset:
        return frozenset(t.name for t in (self.left, self.right) if isinstance(t, Var))

    def __str__(self):
        return f"{_show(self.left)} {self.op} {_show(self.right)}"


@dataclass
class Query:
    projection: list
    patterns: list
    filters: list = field(default_factory=list)
    entailment: str = "rdfs"
    distinct: bool = False
    limit: Optional[int] = None
    namespaces: dict = field(default_factory=dict)

    @property
    def variables(self) -> frozenset:
        out: frozenset = frozenset()
        for p in self.patterns:
            out |= p.variables
        return out


def _show(term):
    if isinstance(term, Iri):
        return f"<{term.value}>"
    if isinstance(term, Literal):
        text = '"' + term.text.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if term.lang:
            return f"{text}@{term.lang}"
        if term.datatype:
            return f"{text}^^<{term.datatype}>"
        return text
    return str(term)


_TOKENS = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\s]*>)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>[+-]?(?:\d+\.\d+|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<op>!=|<=|>=|=|<|>|\^\^|@)
  | (?P<punct>[(),])
  | (?P<pname>[A-Za-z_][\w.\-]*:[\w.\-]*|:[\w.\-]+)
  | (?P<name>[A-Za-z_][\w\-]*)
""", re.X)

_KEYWORDS = {"SELECT", "WHERE", "FILTER", "DISTINCT", "LIMIT", "USING"}
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text):
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKENS.match(text, pos)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, text[pos])
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            if kind == "name" and tok.upper() in _KEYWORDS and tok.isupper():
                kind = "keyword"
            out.append(_Tok(kind, tok, line, pos - line_start + 1))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    out.append(_Tok("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text, namespaces, default_ns):
        self.toks = _tokenize(text)
        self.i = 0
        self.ns = dict(DEFAULT_PREFIXES)
        self.ns.update(namespaces or {})
        self.default_ns = default_ns

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, message, tok=None):
        tok = tok or self.tok
        found = tok.text or "end of query"
        raise QuerySyntaxError(f"{message}, found {found!r}", tok.line, tok.column, tok.text)

    def take(self):
        tok = self.tok
        self.i += 1
        return tok

    def accept(self, kind, text=None):
        tok = self.tok
        if tok.kind == kind and (text is None or tok.text == text):
            self.i += 1
            return tok
        return None

    def expect(self, kind, text=None, what=None):
        tok = self.accept(kind, text)
        if tok is None:
            self.error(f"expected {what or text or kind}")
        return tok

    def query(self):
        while self.accept("keyword", "USING"):
            self.using()
        self.expect("keyword", "SELECT")
        distinct = bool(self.accept("keyword", "DISTINCT"))
        projection = [self.variable()]
        while self.accept("punct", ","):
            projection.append(self.variable())
        self.expect("keyword", "WHERE")
        patterns = [self.pattern()]
        while self.accept("punct", ","):
            patterns.append(self.pattern())
        filters = []
        while self.accept("keyword", "FILTER"):
            filters.append(self.filter())
        if self.accept("keyword", "DISTINCT"):
            distinct = True
        limit = None
        if self.accept("keyword", "LIMIT"):
            tok = self.expect("number", what="a row count")
            if not tok.text.isdigit():
                self.error("LIMIT needs a non-negative integer", tok)
            limit = int(tok.text)
        if self.tok.kind != "eof":
            self.error("unexpected trailing input")
        return projection, patterns, filters, distinct, limit

    def using(self):
        if self.accept("op", "="):
            name = ""
        else:
            tok = self.tok
            if tok.kind != "name":
                self.error("expected a namespace prefix")
            self.take()
            name = tok.text
            self.expect("op", "=")
        iri = self.expect("iri", what="a namespace IRI")
        if name:
            self.ns[name] = iri.text[1:-1]
        else:
            self.default_ns = iri.text[1:-1]

    def variable(self):
        tok = self.tok
        if tok.kind == "name" and tok.text[0].isupper():
            self.take()
            return Var(tok.text)
        self.error("expected a variable")

    def pattern(self):
        self.expect("punct", "(")
        s = self.term()
        self.expect("punct", ",")
        p = self.term()
        self.expect("punct", ",")
        o = self.term()
        self.expect("punct", ")")
        return Pattern(s, p, o)

    def filter(self):
        left = self.term()
        tok = self.tok
        if tok.kind != "op" or tok.text not in COMPARISONS:
            self.error("expected a comparison operator")
        self.take()
        return Filter(tok.text, left, self.term())

    def term(self):
        tok = self.tok
        if tok.kind == "name":
            self.take()
            if tok.text[0].isupper():
                return Var(tok.text)
            if self.default_ns is None:
                self.error("bare name without a default namespace (declare USING = <iri>)", tok)
            return Iri(self.default_ns + tok.text)
        if tok.kind == "iri":
            self.take()
            return Iri(tok.text[1:-1])
        if tok.kind == "pname":
            self.take()
            return self.expand(tok)
        if tok.kind == "number":
            self.take()
            text = tok.text
            value = int(text) if re.fullmatch(r"[+-]?\d+", text) else float(text)
            return Number(value, text)
        if tok.kind == "string":
            self.take()
            text = re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), tok.text[1:-1])
            if self.accept("op", "@"):
                lang = self.expect("name", what="a language tag")
                return Literal(text, lang.text)
            if self.accept("op", "^^"):
                dt = self.term()
                if not isinstance(dt, Iri):
                    self.error("datatype must be an IRI")
                return Literal(text, datatype=dt.value)
            return Literal(text)
        self.error("expected a term")

    def expand(self, tok):
        prefix, _, local = tok.text.partition(":")
        if prefix == "":
            if self.default_ns is None:
                self.error("no default namespace declared", tok)
            return Iri(self.default_ns + local)
        if prefix not in self.ns:
            self.error(f"undeclared prefix {prefix!r}", tok)
        return Iri(self.ns[prefix] + local)


def parse_query(
    text: str,
    entailment: str = "rdfs",
    namespaces: Optional[dict] = None,
    default_ns: Optional[str] = None,
) -> Query:
    from .entailment import get_entailment

    get_entailment(entailment)
    parser = _Parser(text, namespaces, default_ns)
    projection, patterns, filters, distinct, limit = parser.query()
    query = Query(projection, patterns, filters, entailment, distinct, limit, parser.ns)
    known = query.variables
    for var in projection:
        if var.name not in known:
            raise QuerySyntaxError(f"projected variable {var.name} does not occur in any pattern", 1, 1, var.name)
    for f in filters:
        for name in f.variables - known:
            raise QuerySyntaxError(f"filter variable {name} does not occur in any pattern", 1, 1, name)
    return query
