import itertools
import math
import random
from collections import Counter

import pytest

from triplestack.query import (
    ExecutionStats, Number, QuerySyntaxError, RawEntailment, ResultTable, UnknownEntailment, Var, entailment,
    entailment_names, execute, optimize, parse_query, plan_for_order, register_entailment, run_query,
)
from triplestack.query.parser import Filter
from triplestack.rdfio import BNode, Literal, Triple
from triplestack.store import Store

from conftest import EX, ex, random_triples, rdf, rdfs
from oracles import nested_loop_join

USING = f"USING = <{EX}> "


def fig_store():
    store = Store()
    for t in [(ex("mary"), rdf("type"), ex("woman")), (ex("woman"), rdf("type"), rdfs("Class")),
              (ex("woman"), rdfs("subClassOf"), ex("human")), (ex("human"), rdf("type"), rdfs("Class"))]:
        store.add(Triple(*t))
    return store


def answers(store, text, name):
    return [row[0] for row in run_query(store, USING + text, name).rows]


# -- parsing ----------------------------------------------------------------------

def test_parse_single_pattern():
    q = parse_query(USING + "SELECT X WHERE (mary, rdf:type, X)")
    assert q.projection == [Var("X")]
    assert len(q.patterns) == 1 and q.patterns[0].s == ex("mary")


def test_parse_filters_and_modifiers():
    q = parse_query('USING e = <http://example.org/> SELECT A, N WHERE (A, e:p, B), (B, e:q, N), '
                    '(A, <http://example.org/r>, "x"@en) FILTER N >= 3 DISTINCT LIMIT 5')
    assert len(q.patterns) == 3 and q.filters == [Filter(">=", Var("N"), Number(3, "3"))]
    assert q.distinct and q.limit == 5
    assert q.patterns[2].o == Literal("x", "en")


def test_syntax_error_position():
    with pytest.raises(QuerySyntaxError) as info:
        parse_query("SELECT WHERE (A, B, C)")
    assert (info.value.line, info.value.column, info.value.token) == (1, 8, "WHERE")


@pytest.mark.parametrize("text", [
    "SELECT X WHERE (a, b, X)",
    "SELECT X WHERE (X, nope:p, Y)",
    "SELECT Z WHERE (X, <http://p>, Y)",
    "SELECT X WHERE (X, <http://p>, Y) FILTER Q = 1",
    "SELECT X WHERE (X, <http://p>, Y) LIMIT -1",
    "SELECT X WHERE (X, <http://p>, Y) extra",
])
def test_malformed_queries(text):
    with pytest.raises(QuerySyntaxError):
        parse_query(text)


def test_unknown_entailment():
    with pytest.raises(UnknownEntailment):
        parse_query("SELECT X WHERE (X, <http://p>, Y)", "owl-full")


# -- entailment -----------------------------------------------------------------

def test_rdfs_figure():
    store = fig_store()
    assert answers(store, "SELECT X WHERE (mary, rdf:type, X)", "rdfs") == [ex("woman"), ex("human")]
    assert answers(store, "SELECT X WHERE (mary, rdf:type, X)", "raw") == [ex("woman")]


def test_rdf_entailment_hand_evaluated():
    store = fig_store()
    raw = set(store.triples())
    implied = {Triple(rdf("type"), rdf("type"), rdf("Property")),
               Triple(rdfs("subClassOf"), rdf("type"), rdf("Property"))}
    implied |= {Triple(s, rdf("type"), rdfs("Resource")) for s in (ex("mary"), ex("woman"), ex("human"))}
    got = list(entailment("rdf", store).triples())
    assert Counter(got) == Counter(raw | implied)


def test_raw_equals_scan_without_hierarchy(rng):
    store = Store()
    triples = list(dict.fromkeys(random_triples(rng, 300)))
    for t in triples:
        store.add(t)
    oracle = entailment("raw", store)
    for s, p, o in [(None, None, None), (ex("s1"), None, None), (None, ex("p2"), None)]:
        assert Counter(oracle(s, p, o)) == Counter(store.triples(s, p, o))


def test_raw_closes_subproperties():
    store = Store()
    store.add(Triple(ex("knowsWell"), rdfs("subPropertyOf"), ex("knows")))
    store.add(Triple(ex("a"), ex("knowsWell"), ex("b")))
    store.add(Triple(ex("a"), ex("knows"), ex("c")))
    got = {t.object for t in entailment("raw", store)(ex("a"), ex("knows"), None)}
    assert got == {ex("b"), ex("c")}
    assert {t.predicate for t in entailment("raw", store)(ex("a"), None, ex("b"))} == {ex("knows"), ex("knowsWell")}


def test_rdfs_cycles_terminate_once():
    store = Store()
    for a, b in [("ca", "cb"), ("cb", "cc"), ("cc", "ca")]:
        store.add(Triple(ex(a), rdfs("subClassOf"), ex(b)))
    store.add(Triple(ex("x"), rdf("type"), ex("ca")))
    got = answers(store, "SELECT T WHERE (x, rdf:type, T)", "rdfs")
    assert sorted(got) == [ex("ca"), ex("cb"), ex("cc")]
    sup = answers(store, "SELECT S WHERE (ca, rdfs:subClassOf, S)", "rdfs")
    assert sorted(sup) == [ex("ca"), ex("cb"), ex("cc")]


def test_rdfs_reflexive_transitive_hierarchy():
    store = fig_store()
    store.add(Triple(ex("human"), rdfs("subClassOf"), ex("animal")))
    sup = answers(store, "SELECT S WHERE (woman, rdfs:subClassOf, S)", "rdfs")
    assert sorted(sup) == [ex("animal"), ex("human"), ex("woman")]


def test_monotone_on_acyclic_type_queries(rng):
    store = Store()
    for i in range(1, 12):
        store.add(Triple(ex(f"C{i}"), rdfs("subClassOf"), ex(f"C{rng.randrange(i)}")))
    for i in range(40):
        store.add(Triple(ex(f"i{i}"), rdf("type"), ex(f"C{rng.randrange(12)}")))
    q = "SELECT X, T WHERE (X, rdf:type, T)"
    raw = Counter(run_query(store, USING + q, "raw").rows)
    for name in ("rdf", "rdfs"):
        assert not raw - Counter(run_query(store, USING + q, name).rows)


def test_registry_accepts_new_modules():
    class Nothing(RawEntailment):
        def triples(self, s=None, p=None, o=None):
            return iter(())

    register_entailment("nothing", Nothing)
    assert "nothing" in entailment_names()
    assert answers(fig_store(), "SELECT X WHERE (mary, rdf:type, X)", "nothing") == []
    with pytest.raises(UnknownEntailment):
        entailment("absent", Store())


# -- optimizer -------------------------------------------------------------------

SPLIT = USING + "SELECT Name, Affil WHERE (Paper, author, Author), (Author, name, Name), (Author, affiliation, Affil)"


def test_split_candidates():
    q = parse_query(SPLIT)
    stats = Store().statistics(indexes=False)
    assert optimize(q, stats, bound={"Paper"}).candidates == 3
    assert optimize(q, stats, bound={"Paper"}, split=False).candidates == 6


def test_candidates_are_factorial_without_split():
    pats = ", ".join(f"(X, p{i}, Y{i})" for i in range(5))
    q = parse_query(USING + f"SELECT X WHERE {pats}")
    assert optimize(q, Store().statistics(indexes=False), split=False).candidates == math.factorial(5)
    assert optimize(q, Store().statistics(indexes=False)).candidates <= math.factorial(5)


def test_single_pattern_plan():
    q = parse_query(USING + "SELECT X WHERE (X, p, Y)")
    plan = optimize(q, Store().statistics(indexes=False))
    assert plan.steps == q.patterns and plan.candidates == 1


def test_ties_keep_text_order():
    q = parse_query(USING + "SELECT X WHERE (X, p, Y), (X, q, Z)")
    plan = optimize(q, Store().statistics(indexes=False))
    assert plan.steps == q.patterns


def skewed_store():
    store = Store()
    with store.transaction():
        for i in range(10000):
            store.add(Triple(ex(f"s{i}"), ex("big"), ex(f"o{i % 50}")))
        for i in range(10):
            store.add(Triple(ex(f"s{i * 7}"), ex("small"), Literal(str(i))))
    return store


def test_skewed_store_prefers_selective_pattern():
    store = skewed_store()
    q = parse_query(USING + "SELECT S, V WHERE (S, big, O), (S, small, V)")
    plan = optimize(q, store.statistics(indexes=False))
    assert plan.steps[0].p == ex("small")
    oracle = entailment("raw", store)
    touched = {}
    results = {}
    for order in itertools.permutations(range(2)):
        stats = ExecutionStats()
        table = execute(plan_for_order(q, order), oracle, q, stats=stats)
        touched[order] = stats.rows_touched
        results[order] = Counter(table.rows)
    best = ExecutionStats()
    table = execute(plan, oracle, q, stats=best)
    assert best.rows_touched == min(touched.values()) < max(touched.values())
    assert all(r == Counter(table.rows) for r in results.values())
    assert len(table) == 10


def test_filters_placed_after_binding():
    q = parse_query(USING + "SELECT X WHERE (X, p, Y), (Y, q, Z) FILTER Z > 3 FILTER X != Y")
    plan = optimize(q, Store().statistics(indexes=False))
    placed = {str(f): i for i, fs in plan.filters.items() for f in fs}
    for f in q.filters:
        step = placed[str(f)]
        bound = set().union(*(p.variables for p in plan.steps[:step + 1]))
        assert f.variables <= bound


# -- execution -------------------------------------------------------------------

def test_empty_store_result():
    table = run_query(Store(), USING + "SELECT X WHERE (X, p, Y)", "rdfs")
    assert table.columns == ["X"] and table.rows == []


def test_result_table_arity_enforced():
    with pytest.raises(ValueError):
        ResultTable(["A", "B"], [(1,)])


def test_filters_numeric_text_and_type_mismatch():
    store = Store()
    for i, v in enumerate(["5", "12", "abc", "Abd", "7.5"]):
        store.add(Triple(ex(f"s{i}"), ex("v"), Literal(v)))
    store.add(Triple(ex("s9"), ex("v"), ex("iri")))

    def vals(flt):
        return sorted(r[0].text if isinstance(r[0], Literal) else r[0].value
                      for r in run_query(store, USING + f"SELECT V WHERE (S, v, V) FILTER {flt}", "raw").rows)

    assert vals("V > 6") == ["12", "7.5"]
    assert vals("V <= 5") == ["5"]
    assert vals('V < "abd"') == ["12", "5", "7.5", "Abd", "abc"]
    assert vals("V = 12") == ["12"]
    assert vals(f"V = <{EX}iri>") == [EX + "iri"]


def test_number_pattern_matches_numeric_literals():
    store = Store()
    store.add(Triple(ex("a"), ex("n"), Literal("3")))
    store.add(Triple(ex("b"), ex("n"), Literal("3.0")))
    store.add(Triple(ex("c"), ex("n"), Literal("4")))
    rows = run_query(store, USING + "SELECT S WHERE (S, n, 3)", "raw").rows
    assert sorted(r[0] for r in rows) == [ex("a"), ex("b")]


def test_distinct_and_limit():
    store = Store()
    for i in range(6):
        store.add(Triple(ex(f"s{i}"), ex("p"), ex("o")))
    q = USING + "SELECT O WHERE (S, p, O)"
    assert len(run_query(store, q, "raw").rows) == 6
    assert len(run_query(store, q + " DISTINCT", "raw").rows) == 1
    assert len(run_query(store, q + " LIMIT 2", "raw").rows) == 2
    assert run_query(store, q + " LIMIT 0", "raw").rows == []


def random_query(rng, nvars=3, npats=3):
    names = [f"V{i}" for i in range(nvars)]
    pats = []
    for _ in range(npats):
        s = rng.choice(names) if rng.random() < 0.8 else f"s{rng.randrange(20)}"
        p = f"p{rng.randrange(4)}" if rng.random() < 0.85 else rng.choice(names)
        o = rng.choice(names) if rng.random() < 0.7 else f"s{rng.randrange(20)}"
        pats.append(f"({s}, {p}, {o})")
    text = USING + "SELECT " + ", ".join(names) + " WHERE " + ", ".join(pats)
    return text


def test_random_joins_match_brute_force():
    rng = random.Random(3)
    triples = list(dict.fromkeys(random_triples(rng, 200, subjects=20, predicates=4)))
    store = Store()
    for t in triples:
        store.add(t)
    stats = store.statistics(indexes=False)
    oracle = entailment("raw", store)
    checked = 0
    while checked < 60:
        text = random_query(rng)
        try:
            q = parse_query(text, "raw")
        except QuerySyntaxError:
            continue
        want = nested_loop_join(triples, q.patterns, [v.name for v in q.projection])
        assert Counter(execute(optimize(q, stats), oracle, q).rows) == want
        for order in itertools.permutations(range(len(q.patterns))):
            assert Counter(execute(plan_for_order(q, order), oracle, q).rows) == want
        checked += 1


def test_bound_variables_as_bindings():
    store = Store()
    store.add(Triple(ex("paper1"), ex("author"), ex("ann")))
    store.add(Triple(ex("paper2"), ex("author"), ex("bob")))
    store.add(Triple(ex("ann"), ex("name"), Literal("Ann")))
    store.add(Triple(ex("ann"), ex("affiliation"), ex("uva")))
    store.add(Triple(ex("bob"), ex("name"), Literal("Bob")))
    q = parse_query(SPLIT, "raw")
    plan = optimize(q, store.statistics(indexes=False), bound={"Paper"})
    table = execute(plan, entailment("raw", store), q, bindings={"Paper": ex("paper1")})
    assert table.rows == [(Literal("Ann"), ex("uva"))]


def test_bnodes_flow_through_joins():
    store = Store()
    store.add(Triple(ex("a"), ex("p"), BNode("__d#1")))
    store.add(Triple(BNode("__d#1"), ex("w"), Literal("45")))
    table = run_query(store, USING + "SELECT W WHERE (a, p, D), (D, w, W)", "raw")
    assert table.rows == [(Literal("45"),)]
