"""Conjunctive queries over the store with pluggable entailment."""

from __future__ import annotations

from typing import Optional

from .entailment import (
    Entailment,
    RawEntailment,
    RdfEntailment,
    RdfsEntailment,
    UnknownEntailment,
    entailment,
    entailment_names,
    get_entailment,
    register_entailment,
)
from .executor import ExecutionStats, ResultTable, compare, execute, solutions, term_kind
from .optimizer import CostModel, QueryPlan, optimize, plan_for_order
from .parser import Filter, Number, Pattern, Query, QuerySyntaxError, Var, parse_query


def run_query(store, text: str, entailment_name: str = "rdfs", namespaces: Optional[dict] = None,
              default_ns: Optional[str] = None) -> ResultTable:
    """Parse, optimize and execute *text* against *store*."""
    query = parse_query(text, entailment_name, namespaces, default_ns)
    plan = optimize(query, store.statistics(indexes=False))
    return execute(plan, entailment(query.entailment, store), query)


__all__ = [
    "Entailment", "RawEntailment", "RdfEntailment", "RdfsEntailment", "UnknownEntailment",
    "entailment", "entailment_names", "get_entailment", "register_entailment",
    "ExecutionStats", "ResultTable", "compare", "execute", "solutions", "term_kind",
    "CostModel", "QueryPlan", "optimize", "plan_for_order",
    "Filter", "Number", "Pattern", "Query", "QuerySyntaxError", "Var", "parse_query",
    "run_query",
]
