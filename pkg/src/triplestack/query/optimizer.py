"""Generate-and-evaluate join ordering with independence splitting.

Every complete ordering of a conjunction is a candidate.  After a pattern
is chosen, the patterns still to run are partitioned into groups that share
no unbound variable; each group is ordered on its own and the groups are
run one after another, so their orderings multiply instead of permute.
Candidates are counted as complete orderings reachable under this scheme,
which for ``k`` patterns without splitting is ``k!``.

Cost of an ordering is the sum, over its prefixes, of the estimated number
of rows the prefix produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

from .parser import Pattern, Query, Var

EXHAUSTIVE_LIMIT = 12


@dataclass
class QueryPlan:
    steps: list
    groups: list
    estimates: list
    cost: float
    candidates: int
    entailment: str
    filters: dict = field(default_factory=dict)
    bound: frozenset = frozenset()

    def describe(self) -> str:
        lines = []
        for i, (pat, est) in enumerate(zip(self.steps, self.estimates)):
            lines.append(f"{i + 1}. {pat}  ~{est:.3g}")
            for f in self.filters.get(i, ()):
                lines.append(f"   FILTER {f}")
        lines.append(f"cost {self.cost:.3g}, candidates {self.candidates}")
        return "\n".join(lines)


class CostModel:
    """Per-pattern result estimates from store statistics."""

    def __init__(self, stats: dict):
        self.total = max(stats.get("triple_count", 0), 0)
        self.subjects = max(stats.get("distinct_subjects", 0), 1)
        self.objects = max(stats.get("distinct_objects", 0), 1)
        self.predicates = stats.get("predicates", {})
        self.npreds = max(len(self.predicates), 1)

    def estimate(self, pat: Pattern, bound: frozenset) -> float:
        if self.total == 0:
            return 0.0
        est = float(self.total)
        if _is_bound(pat.s, bound):
            est /= self.subjects
        if isinstance(pat.p, Var):
            if pat.p.name in bound:
                est /= self.npreds
        elif pat.p is not None:
            est *= self.predicates.get(getattr(pat.p, "value", None), 0) / self.total
        if _is_bound(pat.o, bound):
            est /= self.objects
        return est


def _is_bound(term, bound) -> bool:
    if isinstance(term, Var):
        return term.name in bound
    return term is not None


def _unbound_vars(pat: Pattern, bound: frozenset) -> frozenset:
    return pat.variables - bound


def split_groups(indices, patterns, bound: frozenset) -> list:
    """Partition pattern indices into groups connected by shared unbound
    variables.  Groups keep the original text order of their members."""
    groups: list = []
    for i in sorted(indices):
        free = _unbound_vars(patterns[i], bound)
        joined = [g for g in groups if g[1] & free]
        merged = ([i], set(free))
        for g in joined:
            merged[0].extend(g[0])
            merged[1].update(g[1])
            groups.remove(g)
        groups.append(merged)
    out = [sorted(g[0]) for g in groups]
    out.sort(key=lambda g: g[0])
    return out


class _Search:
    def __init__(self, patterns, model: CostModel, split: bool):
        self.patterns = patterns
        self.model = model
        self.split = split
        self.best = lru_cache(maxsize=None)(self._best)

    def sequence(self, indices: frozenset, bound: frozenset):
        """Best plan for running *indices* given *bound*; returns
        (cost, rows, order, candidates)."""
        if not indices:
            return 0.0, 1.0, (), 1
        if not self.split:
            return self.best(indices, bound)
        groups = split_groups(indices, self.patterns, bound)
        if len(groups) == 1:
            return self.best(indices, bound)
        solved = [self.best(frozenset(g), bound) for g in groups]
        candidates = 1
        for s in solved:
            candidates *= s[3]
        # Rank order minimises c1 + r1*c2 + r1*r2*c3 ...; ties keep text order.
        ranked = sorted(range(len(solved)), key=lambda k: (_rank(solved[k]), k))
        cost, rows, order = 0.0, 1.0, ()
        for k in ranked:
            c, r, o, _ = solved[k]
            cost += rows * c
            rows *= r
            order += o
        return cost, rows, order, candidates

    def _best(self, indices: frozenset, bound: frozenset):
        best = None
        candidates = 0
        for i in sorted(indices):
            pat = self.patterns[i]
            est = self.model.estimate(pat, bound)
            rest = self.sequence(indices - {i}, bound | pat.variables)
            candidates += rest[3]
            cost = est + est * rest[0]
            if best is None or cost < best[0]:
                best = (cost, est * rest[1], (i,) + rest[2])
        return best + (candidates,)


def _rank(solved) -> float:
    cost, rows = solved[0], solved[1]
    if cost <= 0:
        return float("-inf") if rows <= 1 else 0.0
    return (rows - 1) / cost


def _greedy(patterns, model: CostModel, bound: frozenset):
    remaining = list(range(len(patterns)))
    order = []
    while remaining:
        i = min(remaining, key=lambda k: (model.estimate(patterns[k], bound), k))
        order.append(i)
        remaining.remove(i)
        bound = bound | patterns[i].variables
    return tuple(order), 1


def _ordered_cost(patterns, order, model, bound):
    cost, rows, ests = 0.0, 1.0, []
    for i in order:
        est = model.estimate(patterns[i], bound)
        ests.append(est)
        rows *= est
        cost += rows
        bound = bound | patterns[i].variables
    return cost, ests


def optimize(
    query: Query,
    stats: dict,
    bound: frozenset = frozenset(),
    split: bool = True,
) -> QueryPlan:
    """Choose an execution order for *query*.

    *bound* names variables that will already have values when the plan
    runs.  ``split=False`` disables independence splitting (every
    permutation is then a candidate).
    """
    bound = frozenset(bound)
    model = CostModel(stats)
    patterns = list(query.patterns)
    if len(patterns) > EXHAUSTIVE_LIMIT:
        order, candidates = _greedy(patterns, model, bound)
    else:
        search = _Search(patterns, model, split)
        _, _, order, candidates = search.sequence(frozenset(range(len(patterns))), bound)
    cost, estimates = _ordered_cost(patterns, order, model, bound)
    steps = [patterns[i] for i in order]
    return QueryPlan(
        steps=steps,
        groups=_top_groups(steps, bound),
        estimates=estimates,
        cost=cost,
        candidates=candidates,
        entailment=query.entailment,
        filters=place_filters(query.filters, steps, bound),
        bound=bound,
    )


def _top_groups(steps, bound) -> list:
    groups = split_groups(range(len(steps)), steps, bound)
    return [[steps[i] for i in g] for g in groups]


def place_filters(filters, steps, bound: frozenset) -> dict:
    """Attach each filter to the first step after which all its variables
    are bound.  Key -1 means before the first step."""
    out: dict = {}
    have = set(bound)
    for f in filters:
        if f.variables <= have:
            out.setdefault(-1, []).append(f)
    pending = [f for f in filters if not f.variables <= have]
    for i, pat in enumerate(steps):
        have |= pat.variables
        for f in list(pending):
            if f.variables <= have:
                out.setdefault(i, []).append(f)
                pending.remove(f)
    if pending:
        raise ValueError(f"filter {pending[0]} uses a variable no pattern binds")
    return out


def plan_for_order(query: Query, order, stats: Optional[dict] = None, bound=frozenset()) -> QueryPlan:
    """A plan that runs the patterns in the given index order."""
    bound = frozenset(bound)
    model = CostModel(stats or {})
    steps = [query.patterns[i] for i in order]
    if sorted(order) != list(range(len(query.patterns))):
        raise ValueError("order must be a permutation of the pattern indices")
    cost, estimates = _ordered_cost(query.patterns, order, model, bound)
    return QueryPlan(steps, _top_groups(steps, bound), estimates, cost, 1,
                     query.entailment, place_filters(query.filters, steps, bound), bound)


__all__ = ["QueryPlan", "CostModel", "optimize", "plan_for_order", "place_filters", "split_groups"]
