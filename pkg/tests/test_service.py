import http.client
import os
import threading
from urllib.parse import urlencode

import pytest

from triplestack import markup
from triplestack.markup import Element, Text
from triplestack.rdfio import RDF_NS, load_rdf
from triplestack.service import Service, ServiceConfig, load_document, unload_source
from triplestack.store import Store

from conftest import DATA, EX

FIG_DOC = f"""<rdf:RDF xmlns:rdf="{RDF_NS}" xmlns:rdfs="http://www.w3.org/2000/01/rdf-schema#"
         xmlns="{EX}">
  <rdf:Description rdf:about="{EX}mary"><rdf:type rdf:resource="{EX}woman"/></rdf:Description>
  <rdfs:Class rdf:about="{EX}woman"><rdfs:subClassOf rdf:resource="{EX}human"/></rdfs:Class>
  <rdfs:Class rdf:about="{EX}human"/>
</rdf:RDF>
"""
MARY = f"USING = <{EX}> SELECT X WHERE (mary, rdf:type, X)"
FORM = {"Content-Type": "application/x-www-form-urlencoded"}


def bnode_doc() -> bytes:
    with open(os.path.join(DATA, "bnode.rdf"), "rb") as f:
        return f.read()


@pytest.fixture
def service():
    svc = Service(ServiceConfig(port=0, workers=2))
    svc.start()
    yield svc
    svc.stop()


def call(svc, method, target, body=None, headers=None):
    conn = http.client.HTTPConnection("127.0.0.1", svc.server.port, timeout=10)
    try:
        conn.request(method, target, body=body, headers=headers or {})
        resp = conn.getresponse()
        return resp.status, resp.getheader("Content-Type", ""), resp.read().decode("utf-8")
    finally:
        conn.close()


def post_form(svc, path, **fields):
    return call(svc, "POST", path, urlencode(fields), FORM)


def elements(nodes, tag):
    for node in nodes:
        if isinstance(node, Element):
            if node.tag == tag:
                yield node
            yield from elements(node.children, tag)


def text_of(node):
    if isinstance(node, Text):
        return node.content
    if isinstance(node, Element):
        return "".join(text_of(c) for c in node.children)
    return ""


def result_cells(xml):
    tree = markup.parse_tree(xml, mode="xml")
    (root,) = [n for n in tree if isinstance(n, Element)]
    assert root.tag == "resulttable"
    columns = [text_of(c) for c in elements(root.children, "col")]
    rows = [[(cell.attributes, text_of(cell)) for cell in elements(r.children, "cell")]
            for r in elements(root.children, "row")]
    return columns, rows


def statistics(svc):
    _, _, body = call(svc, "GET", "/statistics")
    tree = markup.parse_tree(body, mode="xml")
    return int(text_of(next(elements(tree, "triple_count"))))


# -- machine endpoints ------------------------------------------------------------------

def test_load_bnode_document(service):
    status, ctype, body = call(service, "POST", "/load?source=art", bnode_doc(), {"Content-Type": "application/rdf+xml"})
    assert status == 200 and ctype.startswith("application/xml")
    assert body.strip() == '<load source="art" triples="4"/>'
    assert statistics(service) == 4


def test_fig_query_xml(service):
    call(service, "POST", "/load?source=fig", FIG_DOC)
    status, ctype, body = post_form(service, "/query", query=MARY, entailment="rdfs", format="xml")
    assert status == 200
    columns, rows = result_cells(body)
    assert columns == ["X"]
    assert rows == [[({"kind": "iri"}, EX + "woman")], [({"kind": "iri"}, EX + "human")]]


def test_result_table_is_compact_and_exact(service):
    status, _, body = post_form(service, "/query", query=MARY)
    assert body == "<resulttable><columns><col>X</col></columns></resulttable>\n"


def test_literal_cells_carry_language(service):
    doc = (f'<rdf:RDF xmlns:rdf="{RDF_NS}" xmlns:e="{EX}"><rdf:Description rdf:about="{EX}a">'
           '<e:label xml:lang="en">A &amp; B</e:label></rdf:Description></rdf:RDF>')
    call(service, "POST", "/load?source=l", doc)
    _, _, body = post_form(service, "/query", query=f"USING = <{EX}> SELECT L WHERE (a, label, L)")
    assert '<cell kind="literal" lang="en">A &amp; B</cell>' in body
    assert result_cells(body)[1] == [[({"kind": "literal", "lang": "en"}, "A & B")]]


def test_query_errors(service):
    status, _, body = post_form(service, "/query", query="SELECT WHERE (A, B, C)")
    assert status == 400
    err = next(elements(markup.parse_tree(body, mode="xml"), "error"))
    assert err.attributes["line"] == "1" and err.attributes["column"] == "8"
    status, _, body = post_form(service, "/query", query=MARY, entailment="nope")
    assert status == 400 and "entailment" in body
    status, _, _ = post_form(service, "/query", query=MARY, format="json")
    assert status == 400
    assert post_form(service, "/query")[0] == 400


def test_query_via_get_and_raw_body(service):
    call(service, "POST", "/load?source=fig", FIG_DOC)
    status, _, body = call(service, "GET", "/query?" + urlencode({"query": MARY, "entailment": "raw"}))
    assert result_cells(body)[1] == [[({"kind": "iri"}, EX + "woman")]]
    status, _, body = call(service, "POST", "/query", MARY, {"Content-Type": "text/plain"})
    assert len(result_cells(body)[1]) == 2


def test_rdfxml_format(service):
    call(service, "POST", "/load?source=fig", FIG_DOC)
    status, ctype, body = post_form(service, "/query", query=MARY, format="rdfxml", entailment="raw")
    assert ctype.startswith("application/rdf+xml")
    triples = load_rdf(body, "reply")
    assert [(t.subject.value, t.object.value) for t in triples] == [(EX + "mary", EX + "woman")]


def test_xml_and_html_formats_agree(service):
    call(service, "POST", "/load?source=fig", FIG_DOC)
    q = f"USING = <{EX}> SELECT S, T WHERE (S, rdf:type, T)"
    _, _, xml = post_form(service, "/query", query=q, format="xml")
    _, ctype, html = post_form(service, "/query", query=q, format="html")
    assert ctype.startswith("text/html")
    xml_cells = [[v for _, v in row] for row in result_cells(xml)[1]]
    table = next(t for t in elements(markup.parse_tree(html, mode="html"), "table")
                 if t.attributes.get("class") == "results")
    html_cells = [[text_of(td) for td in elements(tr.children, "td")] for tr in elements(table.children, "tr")]
    assert [r for r in html_cells if r] == xml_cells and len(xml_cells) == 4


def test_failed_load_is_atomic(service):
    call(service, "POST", "/load?source=ok", bnode_doc())
    broken = FIG_DOC.replace("</rdf:RDF>", "<rdf:Description rdf:about='x'><bad></rdf:RDF>")
    status, _, body = call(service, "POST", "/load?source=broken", broken)
    assert status == 400 and "broken" in body
    assert statistics(service) == 4
    assert "broken" not in service.store.sources()


def test_unload(service):
    status, _, body = post_form(service, "/unload", source="ghost")
    assert status == 200 and 'removed="0"' in body
    before = sorted(map(repr, service.store.records()))
    call(service, "POST", "/load?source=fig", FIG_DOC)
    status, _, body = post_form(service, "/unload", source="fig")
    assert 'removed="4"' in body
    assert sorted(map(repr, service.store.records())) == before


def test_statistics_match_store(service):
    call(service, "POST", "/load?source=fig", FIG_DOC)
    call(service, "POST", "/load?source=art", bnode_doc())
    _, _, body = call(service, "GET", "/statistics")
    tree = markup.parse_tree(body, mode="xml")
    stats = service.store.statistics()
    for key in ("triple_count", "distinct_subjects", "distinct_objects", "literal_count"):
        assert int(text_of(next(elements(tree, key)))) == stats[key]
    assert {s.attributes["name"]: s.attributes["count"] for s in elements(tree, "source")} == {"fig": "4", "art": "4"}


def test_status_routes(service):
    assert call(service, "GET", "/private")[0] == 403
    assert call(service, "GET", "/load")[0] == 405
    assert call(service, "GET", "/missing")[0] == 404
    assert post_form(service, "/snapshot", source="x")[0] == 409
    assert post_form(service, "/load")[0] == 400


def test_session_demo(service):
    conn = http.client.HTTPConnection("127.0.0.1", service.server.port, timeout=10)
    conn.request("GET", "/session")
    resp = conn.getresponse()
    cookie = resp.getheader("Set-Cookie").split(";")[0]
    assert resp.read().decode().endswith("visits 1\n")
    conn.request("GET", "/session", headers={"Cookie": cookie})
    assert conn.getresponse().read().decode().endswith("visits 2\n")
    conn.close()


def test_snapshot_with_persistence(tmp_path):
    with Service(ServiceConfig(port=0, db=str(tmp_path))) as svc:
        call(svc, "POST", "/load?source=art", bnode_doc())
        status, _, body = post_form(svc, "/snapshot", source="art")
        assert status == 200
    assert (tmp_path / "art.snap").exists()
    with Service(ServiceConfig(port=0, db=str(tmp_path))) as svc:
        assert statistics(svc) == 4


def test_concurrent_queries_during_loads(service):
    call(service, "POST", "/load?source=fig", FIG_DOC)
    errors = []

    def reader():
        for _ in range(20):
            status, _, body = post_form(service, "/query", query=MARY)
            if status != 200 or len(result_cells(body)[1]) != 2:
                errors.append(body)

    def writer():
        for i in range(10):
            call(service, "POST", f"/load?source=b{i}", bnode_doc())

    threads = [threading.Thread(target=reader) for _ in range(3)] + [threading.Thread(target=writer)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors and statistics(service) == 44


# -- admin pages ------------------------------------------------------------------------

def test_admin_pages_reparse(service):
    call(service, "POST", "/load?source=a&b", bnode_doc())
    for page in Service.ADMIN_PAGES:
        status, ctype, body = call(service, "GET", page)
        assert status == 200 and ctype.startswith("text/html")
        markup.parse_tree(body, mode="xml")
        tree = markup.parse_tree(body, mode="html")
        assert next(elements(tree, "title"))


def test_admin_empty_store(service):
    _, _, body = call(service, "GET", "/admin/sources")
    tree = markup.parse_tree(body, mode="html")
    table = next(elements(tree, "table"))
    assert len(list(elements(table.children, "tr"))) == 1
    assert "0 sources" in body


def test_admin_query_form_round_trip(service):
    call(service, "POST", "/load?source=fig", FIG_DOC)
    _, _, page = call(service, "GET", "/admin/query")
    form = next(elements(markup.parse_tree(page, mode="html"), "form"))
    fields = {i.attributes["name"]: i.attributes.get("value", "") for i in elements(form.children, "input")
              if "name" in i.attributes}
    fields.update(query=MARY, entailment="rdfs")
    status, _, html = post_form(service, form.attributes["action"], **fields)
    table = next(t for t in elements(markup.parse_tree(html, mode="html"), "table"))
    cells = [text_of(td) for td in elements(table.children, "td")]
    assert cells == [EX + "woman", EX + "human"]


def test_admin_load_and_unload_forms(service):
    status, _, html = post_form(service, "/load", source="fig", data=FIG_DOC, format="html")
    assert status == 200 and "Loaded 4 triples" in html
    _, _, page = call(service, "GET", "/admin/sources")
    assert "fig" in page and 'action="/unload"' in page
    status, _, html = post_form(service, "/unload", source="fig", format="html")
    assert "Removed 4 triples" in html
    status, _, html = post_form(service, "/query", query="SELECT", format="html")
    assert status == 400 and "<html>" in html


# -- library helpers --------------------------------------------------------------------

def test_load_emits_file_load_events():
    store = Store()
    events = []
    store.monitor(lambda ev: events.append((ev.kind, ev.phase)), {"load", "transaction_begin", "transaction_end"})
    assert load_document(store, bnode_doc(), "art") == 4
    assert ("load", "begin") in events and ("load", "end") in events
    assert events[0][0] == "transaction_begin" and events[-1][0] == "transaction_end"
    assert unload_source(store, "art") == 4 and len(store) == 0


def test_config_validation():
    with pytest.raises(ValueError):
        ServiceConfig(port=70000)
    with pytest.raises(ValueError):
        ServiceConfig(workers=0)
    with pytest.raises(Exception):
        Service(ServiceConfig(entailment="nope"))
