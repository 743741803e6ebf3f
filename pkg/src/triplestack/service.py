"""The assembled RDF server: machine endpoints plus admin pages.

Endpoints::

    POST /query       query, entailment, format=xml|rdfxml|html
    POST /load        RDF/XML body (or form field ``data``), source
    POST /unload      source
    POST /snapshot    source            (needs a persistence directory)
    GET  /statistics
    GET  /admin, /admin/sources, /admin/load, /admin/query, /admin/statistics

``/load`` and ``/unload`` also take ``format=html``, which the admin forms
use to get a rendered result page.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from typing import Optional

from . import htmlgen
from .htmlgen import Rule, el
from .httpd import BadRequest, Forbidden, MethodNotAllowed, SessionManager, http_parameters, param, serve
from .markup import MarkupError, quote_attribute, quote_text
from .persist import Persistence
from .query import (
    QuerySyntaxError,
    UnknownEntailment,
    entailment,
    entailment_names,
    execute,
    get_entailment,
    optimize,
    parse_query,
    solutions,
    term_kind,
)
from .query.parser import Number, Var
from .rdfio import BNode, Iri, Literal, RdfError, Triple, process_rdf, write_rdf_xml
from .store import Store, between, gc_paused

log = logging.getLogger(__name__)

FORMATS = ("xml", "rdfxml", "html")


@dataclass
class ServiceConfig:
    port: int = 8080
    workers: int = 4
    db: Optional[str] = None
    entailment: str = "rdfs"
    admin: bool = True
    host: str = "127.0.0.1"
    session_timeout: float = 600.0

    def __post_init__(self):
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


def _cell_value(term) -> str:
    if isinstance(term, Iri):
        return term.value
    if isinstance(term, BNode):
        return term.id
    return term.text


def write_result_table(out, columns, rows) -> None:
    """Emit the result-table document directly, row by row."""
    out.write("<resulttable><columns>")
    for name in columns:
        out.write(f"<col>{quote_text(name)}</col>")
    out.write("</columns>")
    for row in rows:
        out.write("<row>")
        for term in row:
            attrs = f' kind="{term_kind(term)}"'
            if isinstance(term, Literal):
                if term.lang:
                    attrs += f' lang="{quote_attribute(term.lang)}"'
                elif term.datatype:
                    attrs += f' datatype="{quote_attribute(term.datatype)}"'
            out.write(f"<cell{attrs}>{quote_text(_cell_value(term))}</cell>")
        out.write("</row>")
    out.write("</resulttable>\n")


def _xml_error(out, status, message, **attrs):
    out.write(f"Status: {status}\nContent-type: application/xml; charset=UTF-8\n\n")
    extra = "".join(f' {k}="{quote_attribute(str(v))}"' for k, v in attrs.items() if v is not None)
    out.write(f'<error status="{status}"{extra}>{quote_text(message)}</error>\n')


def _page(title, *body):
    nav = el("p", {"class": "nav"},
             el("a", {"href": "/admin"}, "Home"), " | ",
             el("a", {"href": "/admin/sources"}, "Sources"), " | ",
             el("a", {"href": "/admin/load"}, "Load"), " | ",
             el("a", {"href": "/admin/query"}, "Query"), " | ",
             el("a", {"href": "/admin/statistics"}, "Statistics"))
    return el("html",
              el("head", el("title", title)),
              el("body", nav, el("h1", title), *body))


def _send_html(out, spec, status=200):
    text = htmlgen.to_html(spec)
    if status != 200:
        out.write(f"Status: {status}\n")
    out.write("Content-type: text/html; charset=UTF-8\n\n")
    out.write(text)


def _result_rows(columns, rows):
    return [el("tr", *[el("td", _cell_value(t)) for t in row]) for row in rows]


def result_table_html(columns, rows):
    return el("table", {"class": "results", "border": 1},
              el("tr", *[el("th", c) for c in columns]),
              Rule(_result_rows, columns, rows))


def _stats_rows(stats):
    rows = [("triples", stats["triple_count"]), ("subjects", stats["distinct_subjects"]),
            ("objects", stats["distinct_objects"]), ("literals", stats["literal_count"]),
            ("predicates", len(stats["predicates"])), ("sources", len(stats["sources"]))]
    return [el("tr", el("th", k), el("td", v)) for k, v in rows]


class Service:
    def __init__(self, config: Optional[ServiceConfig] = None, store: Optional[Store] = None):
        self.config = config or ServiceConfig()
        get_entailment(self.config.entailment)
        self.store = store if store is not None else Store()
        self.persistence: Optional[Persistence] = None
        if self.config.db:
            self.persistence = Persistence(self.store)
            self.persistence.attach(self.config.db)
        self.sessions = SessionManager(timeout=self.config.session_timeout)
        self.server = None
        self.routes = {
            "/query": (("POST", "GET"), self.query),
            "/load": (("POST",), self.load),
            "/unload": (("POST",), self.unload),
            "/snapshot": (("POST",), self.snapshot),
            "/statistics": (("GET",), self.statistics),
            "/private": (("GET", "POST"), self.private),
            "/session": (("GET",), self.session_demo),
        }
        if self.config.admin:
            self.routes.update({
                "/admin": (("GET",), self.admin_home),
                "/admin/sources": (("GET",), self.admin_sources),
                "/admin/load": (("GET",), self.admin_load),
                "/admin/query": (("GET",), self.admin_query),
                "/admin/statistics": (("GET",), self.admin_statistics),
            })

    # -- lifecycle

    def start(self):
        self.server = serve(self.config.port, self.handle, workers=self.config.workers,
                            host=self.config.host, sessions=self.sessions)
        return self.server

    def stop(self):
        if self.server is not None:
            self.server.stop()
            self.server = None
        if self.persistence is not None:
            self.persistence.detach()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    @property
    def url(self) -> str:
        return self.server.url

    def handle(self, request, out):
        route = self.routes.get(request.path.rstrip("/") or "/")
        if route is None:
            return False
        methods, fn = route
        if request.method not in methods and not (request.method == "HEAD" and "GET" in methods):
            raise MethodNotAllowed(request.method, methods)
        return fn(request, out)

    # -- machine endpoints

    def _format(self, request, default="xml"):
        fmt = request.param("format", default)
        if fmt not in FORMATS:
            raise BadRequest(f"unknown format {fmt!r}; use one of {', '.join(FORMATS)}", "format")
        return fmt

    def _fail(self, out, fmt, status, message, **attrs):
        if fmt == "html":
            _send_html(out, _page("Error", el("p", {"class": "error"}, message),
                                  el("p", el("a", {"href": "/admin"}, "Back"))), status)
        else:
            _xml_error(out, status, message, **attrs)

    def query(self, request, out):
        fmt = self._format(request)
        text = request.param("query")
        if text is None and request.body and "form-urlencoded" not in request.content_type:
            text = request.text()
        if not text:
            return self._fail(out, fmt, 400, "missing query text", parameter="query")
        name = request.param("entailment") or self.config.entailment
        try:
            q = parse_query(text, name)
        except QuerySyntaxError as exc:
            return self._fail(out, fmt, 400, str(exc), line=exc.line, column=exc.column)
        except UnknownEntailment as exc:
            return self._fail(out, fmt, 400, str(exc), parameter="entailment")
        plan = optimize(q, self.store.statistics(indexes=False))
        oracle = entailment(q.entailment, self.store)
        if fmt == "rdfxml":
            triples = construct(q, plan, oracle)
            out.write("Content-type: application/rdf+xml; charset=UTF-8\n\n")
            write_rdf_xml(out, triples)
            return True
        table = execute(plan, oracle, q)
        if fmt == "html":
            _send_html(out, _page("Query result",
                                  el("pre", text),
                                  el("p", f"{len(table.rows)} rows, entailment {q.entailment}"),
                                  result_table_html(table.columns, table.rows)))
            return True
        out.write("Content-type: application/xml; charset=UTF-8\n\n")
        write_result_table(out, table.columns, table.rows)
        return True

    def load(self, request, out):
        fmt = self._format(request)
        source = request.param("source")
        if not source:
            return self._fail(out, fmt, 400, "missing parameter 'source'", parameter="source")
        if "form-urlencoded" in request.content_type:
            data = (request.param("data") or "").encode("utf-8")
        else:
            data = request.body
        try:
            count = load_document(self.store, io.BytesIO(data), source)
        except (RdfError, MarkupError) as exc:
            return self._fail(out, fmt, 400, f"cannot load {source}: {exc}", source=source)
        if fmt == "html":
            _send_html(out, _page("Loaded", el("p", f"Loaded {count} triples from {source}."),
                                  el("p", el("a", {"href": "/admin/sources"}, "Sources"))))
        else:
            out.write("Content-type: application/xml; charset=UTF-8\n\n")
            out.write(f'<load source="{quote_attribute(source)}" triples="{count}"/>\n')
        return True

    def unload(self, request, out):
        fmt = self._format(request)
        source = request.param("source")
        if not source:
            return self._fail(out, fmt, 400, "missing parameter 'source'", parameter="source")
        removed = unload_source(self.store, source)
        if fmt == "html":
            _send_html(out, _page("Unloaded", el("p", f"Removed {removed} triples of {source}."),
                                  el("p", el("a", {"href": "/admin/sources"}, "Sources"))))
        else:
            out.write("Content-type: application/xml; charset=UTF-8\n\n")
            out.write(f'<unload source="{quote_attribute(source)}" removed="{removed}"/>\n')
        return True

    def snapshot(self, request, out):
        source = http_parameters(request, [param("source", min_length=1)])["source"]
        if self.persistence is None:
            return self._fail(out, "xml", 409, "no persistence directory configured")
        self.persistence.save_snapshot(source)
        out.write("Content-type: application/xml; charset=UTF-8\n\n")
        out.write(f'<snapshot source="{quote_attribute(source)}"/>\n')
        return True

    def statistics(self, request, out):
        stats = self.store.statistics()
        out.write("Content-type: application/xml; charset=UTF-8\n\n")
        write_statistics(out, stats)
        return True

    def private(self, request, out):
        raise Forbidden(request.path)

    def session_demo(self, request, out):
        session = request.session
        visits = session.update("visits", lambda n: n + 1, 0)
        out.write("Content-type: text/plain; charset=UTF-8\n\n")
        out.write(f"session {session.id} visits {visits}\n")
        return True

    # -- admin pages

    def admin_home(self, request, out):
        stats = self.store.statistics(indexes=False)
        _send_html(out, _page(
            "RDF server",
            el("p", f"{stats['triple_count']} triples in {len(stats['sources'])} sources."),
            el("ul",
               el("li", el("a", {"href": "/admin/sources"}, "Loaded sources")),
               el("li", el("a", {"href": "/admin/load"}, "Load a document")),
               el("li", el("a", {"href": "/admin/query"}, "Run a query")),
               el("li", el("a", {"href": "/admin/statistics"}, "Statistics")))))
        return True

    def admin_sources(self, request, out):
        sources = sorted(self.store.sources().items())

        def rows(items):
            return [el("tr", el("td", name), el("td", count),
                       el("td", el("form", {"method": "post", "action": "/unload"},
                                   el("input", type="hidden", name="source", value=name),
                                   el("input", type="hidden", name="format", value="html"),
                                   el("input", type="submit", value="Unload"))))
                    for name, count in items]

        _send_html(out, _page(
            "Sources",
            el("p", f"{len(sources)} sources"),
            el("table", {"class": "sources", "border": 1},
               el("tr", el("th", "Source"), el("th", "Triples"), el("th", "")),
               Rule(rows, sources))))
        return True

    def admin_load(self, request, out):
        _send_html(out, _page(
            "Load RDF/XML",
            el("form", {"method": "post", "action": "/load"},
               el("input", type="hidden", name="format", value="html"),
               el("p", "Source name: ", el("input", type="text", name="source", size=40)),
               el("p", el("textarea", {"name": "data", "rows": 20, "cols": 80}, "")),
               el("p", el("input", type="submit", value="Load")))))
        return True

    def admin_query(self, request, out):
        text = request.param("query", "")
        chosen = request.param("entailment", self.config.entailment)
        options = [el("option", dict({"value": n}, **({"selected": "selected"} if n == chosen else {})), n)
                   for n in entailment_names()]
        _send_html(out, _page(
            "Query",
            el("form", {"method": "post", "action": "/query"},
               el("input", type="hidden", name="format", value="html"),
               el("p", el("textarea", {"name": "query", "rows": 8, "cols": 80}, text)),
               el("p", "Entailment: ", el("select", {"name": "entailment"}, *options), " ",
                  el("input", type="submit", value="Run")))))
        return True

    def admin_statistics(self, request, out):
        stats = self.store.statistics()

        def pred_rows(preds):
            return [el("tr", el("td", p), el("td", n)) for p, n in sorted(preds.items())]

        def index_rows(indexes):
            return [el("tr", el("td", name), el("td", v["buckets"]), el("td", v["entries"]),
                       el("td", v["max_chain"]), el("td", f"{v['mean_chain']:.2f}"))
                    for name, v in indexes.items()]

        _send_html(out, _page(
            "Statistics",
            el("table", {"class": "counts", "border": 1}, Rule(_stats_rows, stats)),
            el("h2", "Predicates"),
            el("table", {"class": "predicates", "border": 1},
               el("tr", el("th", "Predicate"), el("th", "Triples")),
               Rule(pred_rows, stats["predicates"])),
            el("h2", "Indexes"),
            el("table", {"class": "indexes", "border": 1},
               el("tr", el("th", "Index"), el("th", "Buckets"), el("th", "Entries"),
                  el("th", "Longest chain"), el("th", "Mean chain")),
               Rule(index_rows, stats["indexes"]))))
        return True

    ADMIN_PAGES = ("/admin", "/admin/sources", "/admin/load", "/admin/query", "/admin/statistics")


def load_document(store: Store, stream, source: str) -> int:
    """Load RDF/XML from *stream* as *source* in one transaction; nothing is
    kept if parsing fails.  Returns the number of triples read."""
    count = 0

    def add(triples, location):
        nonlocal count
        line = int(location.rsplit(":", 1)[1])
        for t in triples:
            store.assert_triple(t.subject, t.predicate, t.object, source, line)
        count += len(triples)

    with gc_paused(), store.transaction():
        store.record_load(source, "begin")
        process_rdf(stream, source, add)
        store.record_load(source, "end")
    return count


def unload_source(store: Store, source: str) -> int:
    with store.transaction():
        return store.retract_triples(source=source)


def write_statistics(out, stats: dict) -> None:
    out.write("<statistics>")
    for key in ("triple_count", "distinct_subjects", "distinct_objects", "literal_count"):
        out.write(f"<{key}>{stats[key]}</{key}>")
    out.write("<predicates>")
    for iri, count in sorted(stats["predicates"].items()):
        out.write(f'<predicate iri="{quote_attribute(iri)}" count="{count}"/>')
    out.write("</predicates><sources>")
    for name, count in sorted(stats["sources"].items()):
        out.write(f'<source name="{quote_attribute(name)}" count="{count}"/>')
    out.write("</sources><indexes>")
    for name, load in stats.get("indexes", {}).items():
        attrs = "".join(f' {k}="{v:.3f}"' if isinstance(v, float) else f' {k}="{v}"'
                        for k, v in load.items())
        out.write(f'<index name="{name}"{attrs}/>')
    out.write("</indexes></statistics>\n")


def construct(query, plan, oracle) -> list:
    """The triples matched by each solution of *query*, deduplicated in
    first-seen order."""
    seen: dict = {}
    count = 0
    for env in solutions(plan, oracle):
        for pat in query.patterns:
            terms = [env[t.name] if isinstance(t, Var) else t for t in pat]
            if isinstance(terms[0], Number) or isinstance(terms[1], Number):
                continue
            if isinstance(terms[2], Number):
                o = between(terms[2].value, terms[2].value)
                for t in oracle(terms[0], terms[1], o):
                    seen.setdefault(t, None)
            else:
                seen.setdefault(Triple(*terms), None)
        count += 1
        if query.limit is not None and count >= query.limit:
            break
    return list(seen)
