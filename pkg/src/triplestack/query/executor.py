"""Backtracking execution of query plans."""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Iterator, Optional

from ..rdfio import BNode, Iri, Literal
from ..store import between
from ..store.literals import numeric_value, sort_key
from .optimizer import QueryPlan
from .parser import Filter, Number, Query, Var

_ORDER_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


class _TypeMismatch(Exception):
    pass


@dataclass
class ResultTable:
    columns: list
    rows: list = field(default_factory=list)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row {row!r} does not have {len(self.columns)} cells")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def as_dicts(self) -> list:
        return [dict(zip(self.columns, row)) for row in self.rows]


@dataclass
class ExecutionStats:
    rows_touched: int = 0
    calls: int = 0


def _numeric(term) -> Optional[float]:
    if isinstance(term, Number):
        return term.value
    if isinstance(term, Literal):
        return numeric_value(term.text)
    return None


def compare(op: str, left, right) -> bool:
    """Evaluate one filter comparison over two ground terms.  Raises
    :class:`_TypeMismatch` where the comparison is undefined."""
    ln, rn = _numeric(left), _numeric(right)
    if ln is not None and rn is not None:
        if op == "=":
            return ln == rn
        if op == "!=":
            return ln != rn
        return _ORDER_OPS[op](ln, rn)
    if isinstance(left, Number) or isinstance(right, Number):
        raise _TypeMismatch(op)
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    if isinstance(left, Literal) and isinstance(right, Literal):
        return _ORDER_OPS[op](sort_key(left), sort_key(right))
    raise _TypeMismatch(op)


def _holds(f: Filter, env: dict) -> bool:
    left = env[f.left.name] if isinstance(f.left, Var) else f.left
    right = env[f.right.name] if isinstance(f.right, Var) else f.right
    try:
        return compare(f.op, left, right)
    except _TypeMismatch:
        return False


def _lookup(term, env):
    """Oracle argument for a pattern position."""
    if isinstance(term, Var):
        return env.get(term.name)
    if isinstance(term, Number):
        return between(term.value, term.value)
    return term


def _unify(term, value, env, added) -> bool:
    if isinstance(term, Var):
        have = env.get(term.name)
        if have is None:
            env[term.name] = value
            added.append(term.name)
            return True
        return have == value
    if isinstance(term, Number):
        return _numeric(value) == term.value
    return term == value


def solutions(plan: QueryPlan, oracle, bindings: Optional[dict] = None,
              stats: Optional[ExecutionStats] = None) -> Iterator[dict]:
    """Yield every variable binding that satisfies the plan."""
    env = dict(bindings or {})
    stats = stats if stats is not None else ExecutionStats()
    steps = plan.steps
    filters = plan.filters
    if not all(_holds(f, env) for f in filters.get(-1, ())):
        return

    def run(i):
        if i == len(steps):
            yield dict(env)
            return
        pat = steps[i]
        s, p, o = (_lookup(t, env) for t in pat)
        if isinstance(s, Literal) or (p is not None and not isinstance(p, Iri)):
            return
        stats.calls += 1
        for t in oracle(s, p, o):
            stats.rows_touched += 1
            added: list = []
            if (_unify(pat.s, t.subject, env, added) and _unify(pat.p, t.predicate, env, added)
                    and _unify(pat.o, t.object, env, added)
                    and all(_holds(f, env) for f in filters.get(i, ()))):
                yield from run(i + 1)
            for name in added:
                del env[name]

    yield from run(0)


def execute(plan: QueryPlan, oracle, query: Query, bindings: Optional[dict] = None,
            stats: Optional[ExecutionStats] = None) -> ResultTable:
    """Run *plan* and return the projected rows of *query*."""
    columns = [v.name for v in query.projection]
    rows = []
    seen = set()
    if query.limit == 0:
        return ResultTable(columns, rows)
    for env in solutions(plan, oracle, bindings, stats):
        row = tuple(env[c] for c in columns)
        if query.distinct:
            if row in seen:
                continue
            seen.add(row)
        rows.append(row)
        if query.limit is not None and len(rows) >= query.limit:
            break
    return ResultTable(columns, rows)


def term_kind(term) -> str:
    if isinstance(term, Literal):
        return "literal"
    if isinstance(term, BNode):
        return "bnode"
    return "iri"
