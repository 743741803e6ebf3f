import os
import random

import pytest

from triplestack.rdfio import RDF_NS, RDFS_NS, BNode, Iri, Literal, Triple

DATA = os.path.join(os.path.dirname(__file__), "data")
EX = "http://example.org/"

# criterion number -> (title, passed); filled by test_acceptance
ACCEPTANCE: dict = {}


def ex(name: str) -> Iri:
    return Iri(EX + name)


def rdf(name: str) -> Iri:
    return Iri(RDF_NS + name)


def rdfs(name: str) -> Iri:
    return Iri(RDFS_NS + name)


WORDS = ["alpha", "Alpha", "beta", "Beta", "ALPHA", "gamma", "abc", "Abd", "b", "B",
         "delta", "Delta", "ab", "aB", "zeta", "x", "X", "hello", "Hello"]


def random_literal(rng: random.Random) -> Literal:
    r = rng.random()
    if r < 0.3:
        return Literal(str(rng.randint(-50, 200)))
    if r < 0.4:
        return Literal(f"{rng.uniform(-10, 10):.2f}")
    if r < 0.55:
        return Literal(rng.choice(WORDS), lang=rng.choice(["en", "nl"]))
    if r < 0.6:
        return Literal(str(rng.randint(0, 9)), datatype="http://www.w3.org/2001/XMLSchema#integer")
    return Literal(rng.choice(WORDS) + rng.choice(["", "", "s", "Z", "1"]))


def random_triples(rng: random.Random, n: int, subjects=None, predicates=8) -> list:
    subjects = subjects or max(4, n // 6)
    preds = [ex(f"p{i}") for i in range(predicates)]
    out = []
    for _ in range(n):
        s = ex(f"s{rng.randrange(subjects)}") if rng.random() < 0.9 else BNode(f"__r#{rng.randrange(20)}")
        p = rng.choice(preds)
        if rng.random() < 0.5:
            o = random_literal(rng)
        elif rng.random() < 0.8:
            o = ex(f"s{rng.randrange(subjects)}")
        else:
            o = BNode(f"__r#{rng.randrange(20)}")
        out.append(Triple(s, p, o))
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}")


@pytest.fixture
def rng():
    return random.Random(20240607)
