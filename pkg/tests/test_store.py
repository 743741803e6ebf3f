import random
import threading
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triplestack.rdfio import BNode, Iri, Literal, Triple
from triplestack.store import (
    Rollback, Store, StorePermissionError, SUBPROPERTY_OF, between, icase, prefix, sort_key,
)
from triplestack.store.literals import numeric_value

from conftest import ex, random_literal, random_triples
from oracles import literal_key, scan

P, Q = ex("p"), ex("q")


def filled(triples, source="user"):
    store = Store()
    with store.transaction():
        for t in triples:
            store.add(t, source)
    return store


def live(store, *pattern):
    return sorted(store.triples(*pattern), key=repr)


# -- interning ----------------------------------------------------------------

def test_intern_is_injective():
    store = Store()
    assert store.intern("a") == store.intern("a")
    assert store.resolve(store.intern("x")) == "x"
    handles = {store.intern(f"http://example.org/r{i}") for i in range(10 ** 6)}
    assert len(handles) == 10 ** 6
    assert store.resolve(store.intern("http://example.org/r123456")) == "http://example.org/r123456"


# -- assert / retract / update -------------------------------------------------

def test_assert_then_match():
    store = Store()
    t = Triple(ex("a"), P, Literal("x"))
    store.add(t)
    assert list(store.triples(*t)) == [t]
    assert store.has(*t)


def test_duplicate_assert_is_one_record():
    store = Store()
    t = Triple(ex("a"), P, ex("b"))
    store.add(t)
    store.add(t)
    assert len(store) == 1
    store.add(t, source="other")
    assert len(store) == 2
    assert len(list(store.triples())) == 2


def test_literal_events():
    store = Store()
    events = []
    store.monitor(events.append, {"new_literal", "old_literal"})
    store.add(Triple(ex("a"), P, Literal("x")))
    store.add(Triple(ex("b"), P, Literal("x")))
    assert [e.kind for e in events] == ["new_literal"]
    store.retract_triples(ex("a"))
    assert [e.kind for e in events] == ["new_literal"]
    store.retract_triples(ex("b"))
    assert [(e.kind, e.literal) for e in events] == [("new_literal", Literal("x")), ("old_literal", Literal("x"))]
    assert store.literals() == []


def test_retract_nothing():
    store = filled([Triple(ex("a"), P, ex("b"))])
    assert store.retract_triples(ex("zzz")) == 0
    assert len(store) == 1


def test_assert_retract_restores_state(rng):
    base = random_triples(rng, 200)
    store = filled(base)
    before = (live(store), store.statistics(indexes=False))
    extra = [t for t in random_triples(random.Random(5), 50) if t not in set(base)]
    with store.transaction():
        for t in extra:
            store.add(t)
    for t in extra:
        store.retract_triples(*t)
    assert (live(store), store.statistics(indexes=False)) == before


def test_update_emits_one_event():
    store = filled([Triple(ex("a"), P, Literal("1"))])
    events = []
    store.monitor(events.append, {"update"})
    n = store.update_triple(Triple(ex("a"), P, Literal("1")), Triple(ex("a"), P, Literal("2")))
    assert n == 1 and len(events) == 1
    assert live(store) == [Triple(ex("a"), P, Literal("2"))]


def test_retract_by_source():
    store = Store()
    store.add(Triple(ex("a"), P, ex("b")), "one")
    store.add(Triple(ex("a"), P, ex("b")), "two")
    assert store.retract_triples(source="one") == 1
    assert store.sources() == {"two": 1}


def test_literal_subject_rejected():
    with pytest.raises(TypeError):
        Store().assert_triple(Literal("x"), P, ex("b"))


# -- match --------------------------------------------------------------------

def test_empty_store():
    store = Store()
    assert list(store.match()) == []
    assert list(store.match(ex("a"), P, Literal("x"))) == []


def object_patterns(rng, triples):
    objs = [t.object for t in triples]
    return [
        None, rng.choice(objs), prefix(rng.choice(["a", "AL", "be", "h", "1", "zz"])),
        between(*sorted((rng.uniform(-20, 150), rng.uniform(-20, 150)))), icase(rng.choice(["alpha", "B"])),
    ]


def check_against_scan(store, triples, rng, cases):
    subjects = [t.subject for t in triples] + [ex("missing")]
    preds = [t.predicate for t in triples] + [ex("nopred")]
    for _ in range(cases):
        s = rng.choice(subjects) if rng.random() < 0.5 else None
        p = rng.choice(preds) if rng.random() < 0.5 else None
        o = rng.choice(object_patterns(rng, triples))
        got = Counter(store.triples(s, p, o))
        want = Counter(scan(triples, s, p, o))
        assert got == want, (s, p, o)


def test_match_equals_scan_over_all_classes(rng):
    triples = list(dict.fromkeys(random_triples(rng, 500)))
    store = filled(triples)
    check_against_scan(store, triples, rng, 400)


def test_subproperty_does_not_leak_into_match():
    store = Store()
    store.add_subproperty(Q, P)
    store.add(Triple(ex("a"), P, ex("x")))
    store.add(Triple(ex("a"), Q, ex("y")))
    assert store.predicate_root(Q) == P.value
    assert live(store, None, Q) == [Triple(ex("a"), Q, ex("y"))]
    assert live(store, ex("a"), P, ex("y")) == []
    assert live(store, None, P) == [Triple(ex("a"), P, ex("x"))]


def test_subproperty_triples_register_edges():
    store = Store()
    store.add(Triple(Q, Iri(SUBPROPERTY_OF), P))
    assert store.predicate_root(Q) == P.value


def test_root_of_chain_and_cycle(rng):
    store = Store()
    a, b, c = ex("a"), ex("b"), ex("c")
    store.add_subproperty(a, b)
    store.add_subproperty(b, c)
    assert {store.predicate_root(x) for x in (a, b, c)} == {c.value}
    store2 = Store()
    store2.add_subproperty(a, b)
    store2.add_subproperty(b, a)
    roots = {store2.predicate_root(x) for x in (a, b)}
    assert len(roots) == 1 and roots <= {a.value, b.value}
    assert store2.predicate_root(a) == store2.predicate_root(a)


def test_rerooting_keeps_match_correct(rng):
    triples = list(dict.fromkeys(random_triples(rng, 400)))
    store = filled(triples)
    for i in range(1, 8):
        store.add_subproperty(ex(f"p{i}"), ex(f"p{i - 1}"))
        check_against_scan(store, triples, rng, 60)
    store.add_subproperty(ex("p0"), ex("p7"))
    check_against_scan(store, triples, rng, 100)


def test_resize_preserves_contents(rng):
    triples = list(dict.fromkeys(random_triples(rng, 300)))
    store = Store(index_size=2)
    with store.transaction():
        for t in triples:
            store.add(t)
    loads = store.statistics()["indexes"]
    assert all(v["resizes"] > 0 for v in loads.values())
    assert all(v["entries"] <= 4 * v["buckets"] for v in loads.values())
    for name in ("s", "p", "o", "sp", "po"):
        store.resize_index(name, 1)
        check_against_scan(store, triples, rng, 30)
        store.resize_index(name, 1024)
    check_against_scan(store, triples, rng, 100)


# -- literal table --------------------------------------------------------------

def literal_store(texts):
    store = Store()
    with store.transaction():
        for i, text in enumerate(texts):
            store.add(Triple(ex(f"s{i}"), P, Literal(text)))
    return store


def test_table_order_example():
    store = literal_store(["b", "a", "A", "10", "2"])
    assert [sl.value.text for sl in store.literals()] == ["2", "10", "A", "a", "b"]


def test_prefix_search_follows_table_order():
    texts = ["abc", "Abd", "b", "AB", "ab", "xab"]
    store = literal_store(texts)
    got = [sl.value for sl in store.literal_search("prefix", "ab")]
    want = sorted((Literal(t) for t in texts if t.lower().startswith("ab")), key=literal_key)
    assert got == want
    assert [lit.text for lit in got] == ["AB", "ab", "abc", "Abd"]


def test_range_search():
    store = literal_store(["0", "2", "7", "x"])
    assert [sl.value.text for sl in store.literal_search("range", (1, 5))] == ["2"]
    with pytest.raises(ValueError):
        store.literal_search("range", (5, 1))


def test_exact_and_icase_search():
    store = literal_store(["Hello", "hello", "HELLO", "help"])
    assert [sl.value.text for sl in store.literal_search("icase", "hello")] == ["HELLO", "Hello", "hello"]
    assert [sl.value.text for sl in store.literal_search("exact", "Hello")] == ["Hello"]


def test_literals_shared_and_counted():
    store = literal_store(["x", "x", "y"])
    table = {sl.value.text: sl.use_count for sl in store.literals()}
    assert table == {"x": 2, "y": 1}


@pytest.mark.parametrize("text, value", [("42", 42), ("-3", -3), ("1.5", 1.5), ("1e3", 1000.0),
                                         ("abc", None), ("1.2.3", None), ("nan", None), ("", None)])
def test_numeric_detection(text, value):
    assert numeric_value(text) == value


literal_values = st.builds(
    Literal,
    st.one_of(st.integers(-1000, 1000).map(str), st.text("aAbBzZ1 ", max_size=5),
              st.floats(-100, 100, allow_nan=False).map(lambda f: f"{f:.3f}")),
)


@settings(max_examples=300, deadline=None)
@given(literal_values, literal_values, literal_values)
def test_comparator_total_order(a, b, c):
    ka, kb, kc = sort_key(a), sort_key(b), sort_key(c)
    assert (ka == kb) == (a == b)
    assert (ka < kb) != (kb < ka) or a == b
    if ka <= kb and kb <= kc:
        assert ka <= kc
    assert (ka < kb) == (literal_key(a) < literal_key(b))


@settings(max_examples=50, deadline=None)
@given(st.lists(literal_values, max_size=40))
def test_table_matches_reference_sort(values):
    store = Store()
    with store.transaction():
        for i, v in enumerate(values):
            store.add(Triple(ex(f"s{i}"), P, v))
    assert [sl.value for sl in store.literals()] == sorted(set(values), key=literal_key)


# -- statistics ---------------------------------------------------------------

def test_statistics(rng):
    stats = Store().statistics()
    assert stats["triple_count"] == 0 and stats["predicates"] == {}
    assert stats["distinct_subjects"] == stats["distinct_objects"] == 0
    triples = list(dict.fromkeys(random_triples(rng, 300)))
    stats = filled(triples).statistics()
    assert stats["triple_count"] == len(triples)
    assert stats["predicates"] == dict(Counter(t.predicate.value for t in triples))
    assert stats["distinct_subjects"] == len({t.subject for t in triples})
    assert stats["distinct_objects"] == len({t.object for t in triples})


# -- transactions ---------------------------------------------------------------

def test_failed_transaction_leaves_store_unchanged():
    store = Store()
    with store.transaction():
        store.add(Triple(ex("a"), P, ex("b")))
        raise Rollback
    assert len(store) == 0
    with pytest.raises(ValueError):
        with store.transaction():
            store.add(Triple(ex("a"), P, ex("b")))
            raise ValueError("boom")
    assert len(store) == 0


def test_with_transaction_outcome():
    store = Store()
    assert store.with_transaction(lambda: 7) == 7

    def fail():
        store.add(Triple(ex("a"), P, ex("b")))
        raise Rollback

    assert store.with_transaction(fail) is False
    assert len(store) == 0


def test_nested_failure_discards_only_inner():
    store = Store()
    a, b, c = (Triple(ex(n), P, ex("o")) for n in "abc")
    with store.transaction():
        store.add(a)
        with store.transaction():
            store.add(b)
            raise Rollback
        store.add(c)
    assert set(store.triples()) == {a, c}


def test_empty_transaction_emits_nothing():
    store = Store()
    events = []
    store.monitor(events.append)
    with store.transaction():
        pass
    assert events == [] and len(store) == 0


def test_pending_writes_visible_inside_transaction():
    store = Store()
    t = Triple(ex("a"), P, ex("b"))
    seen = []
    with store.transaction():
        store.add(t)
        seen.append(store.has(*t))
    assert seen == [True]


def test_write_with_open_iterator_is_refused():
    store = filled([Triple(ex("a"), P, ex("b"))])
    it = store.match()
    next(it)
    with pytest.raises(StorePermissionError):
        store.add(Triple(ex("c"), P, ex("d")))
    it.close()
    store.add(Triple(ex("c"), P, ex("d")))
    assert len(store) == 2


def test_readers_see_whole_transactions():
    store = Store()
    stop = threading.Event()
    violations = []

    def reader():
        while not stop.is_set():
            seen = {t.subject for t in store.triples()}
            for i in range(200):
                if (ex(f"a{i}") in seen) != (ex(f"b{i}") in seen):
                    violations.append(i)

    threads = [threading.Thread(target=reader) for _ in range(3)]
    for t in threads:
        t.start()
    for i in range(200):
        with store.transaction():
            store.add(Triple(ex(f"a{i}"), P, ex("x")))
            store.add(Triple(ex(f"b{i}"), P, ex("x")))
    stop.set()
    for t in threads:
        t.join()
    assert violations == []
    assert len(store) == 400


# -- monitors -------------------------------------------------------------------

def test_monitor_sees_each_assert():
    store = Store()
    events = []
    store.monitor(events.append, {"assert"})
    with store.transaction():
        for i in range(10):
            store.add(Triple(ex(f"s{i}"), P, ex("o")))
    assert len(events) == 10


def test_rolled_back_events_never_delivered():
    store = Store()
    events = []
    store.monitor(events.append)
    with store.transaction():
        store.add(Triple(ex("a"), P, ex("b")))
        raise Rollback
    assert events == []


def test_monitor_writes_run_after_commit():
    store = Store()
    shadow = ex("shadow")
    seen_during = []

    def on_assert(ev):
        if ev.triple.predicate != shadow:
            seen_during.append(store.has(ev.triple.subject, shadow, None))
            store.add(Triple(ev.triple.subject, shadow, ev.triple.object))

    store.monitor(on_assert, {"assert"})
    with store.transaction():
        store.add(Triple(ex("a"), P, ex("b")))
        store.add(Triple(ex("c"), P, ex("d")))
    assert seen_during == [False, False]
    assert len(list(store.triples(None, shadow))) == 2


def test_monitor_errors_do_not_undo_commit(caplog):
    store = Store()

    def bad(ev):
        raise RuntimeError("monitor broke")

    sub = store.monitor(bad, {"assert"})
    store.add(Triple(ex("a"), P, ex("b")))
    assert len(store) == 1
    assert "monitor" in caplog.text
    sub.cancel()
    store.add(Triple(ex("c"), P, ex("d")))
    assert len(store) == 2


def test_unknown_monitor_event():
    with pytest.raises(ValueError):
        Store().monitor(print, {"nonsense"})


def test_load_events():
    store = Store()
    events = []
    store.monitor(events.append, {"load"})
    with store.transaction():
        store.record_load("doc", "begin")
        store.add(Triple(ex("a"), P, ex("b")), "doc")
        store.record_load("doc", "end")
    assert [(e.source, e.phase) for e in events] == [("doc", "begin"), ("doc", "end")]


# -- bulk load ------------------------------------------------------------------

def test_bulk_load_equals_asserts(rng):
    triples = random_triples(rng, 2000)
    slow = Store()
    with slow.transaction():
        for i, t in enumerate(triples):
            slow.add(t, "bulk", i + 1)
    fast = Store()
    added = fast.bulk_load("bulk", [(t, i + 1) for i, t in enumerate(triples)])
    assert added == len(slow)
    assert live(fast) == live(slow)
    assert fast.statistics(indexes=False) == slow.statistics(indexes=False)
    assert [sl.value for sl in fast.literals()] == [sl.value for sl in slow.literals()]
    check_against_scan(fast, list(dict.fromkeys(triples)), rng, 100)


def test_bulk_load_emits_events_and_respects_duplicates():
    store = Store()
    store.add(Triple(ex("a"), P, Literal("x")), "src")
    events = []
    store.monitor(events.append)
    rows = [(Triple(ex("a"), P, Literal("x")), 1), (Triple(ex("b"), P, Literal("y")), 2)]
    assert store.bulk_load("src", rows) == 1
    kinds = [e.kind for e in events]
    assert kinds.count("assert") == 1 and kinds.count("new_literal") == 1
    assert ("load" in kinds) and kinds[0] == "transaction_begin"


def test_bulk_load_inside_transaction_is_discarded_on_rollback():
    store = Store()
    with store.transaction():
        store.bulk_load("src", [(Triple(ex("a"), P, ex("b")), 1)])
        raise Rollback
    assert len(store) == 0


def test_bnode_terms_survive_interning():
    store = Store()
    store.add(Triple(BNode("__s#1"), P, BNode("__s#2")))
    [t] = store.triples()
    assert t == Triple(BNode("__s#1"), P, BNode("__s#2"))
    assert random_literal(random.Random(1)) is not None


def test_length_counts_pending_writes():
    store = Store()
    a, b = Triple(ex("a"), P, ex("o")), Triple(ex("b"), P, ex("o"))
    store.add(a)
    with store.transaction():
        store.retract_triples(*a)
        assert len(store) == 0
        store.add(a)
        store.add(b)
        assert len(store) == 2
        raise Rollback
    assert len(store) == 1
