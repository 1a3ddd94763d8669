"""Exact evaluation of counterfactual queries by exogenous enumeration.

Everything here is deterministic given the model: a term's value under
one exogenous assignment u is computed by recursively firing mechanisms
in the regime-modified model, and probabilities are sums of exogenous
weights over the assignments where every term hits its event value.
No Monte Carlo; comparison tolerance for probabilities is 1e-10.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import QueryError
from .graphs import CausalDiagram, Value
from .models import ScmModel
from .queries import CtfQuery, PotentialResponse, RegimeEntry, response

DIST_TOL = 1e-10


def eval_potential_response(
    model: ScmModel, u: tuple, term: PotentialResponse
) -> Value:
    """Value of the term's variable, given u, in the submodel where the
    regime's edge-groups carry their fixed values.

    A fully assigned regime variable is replaced by its constant. A
    path-restricted entry feeds its constant only to the listed
    children; every other consumer (and the variable's own readout)
    gets the naturally computed value.
    """
    full: dict[str, Value] = {}
    edge: dict[tuple[str, str], Value] = {}
    for e in term.regime:
        if e.value not in model.diagram.domains[e.var]:
            raise QueryError(f"value {e.value!r} outside domain of {e.var!r}")
        if e.targets is None:
            full[e.var] = e.value
        else:
            for c in e.targets:
                edge[(e.var, c)] = e.value

    memo: dict[str, Value] = {}

    def natural(v: str) -> Value:
        if v in full:
            return full[v]
        if v in memo:
            return memo[v]
        m = model.mechanisms[v]
        pv = {}
        for p in m.parents:
            if (p, v) in edge:
                pv[p] = edge[(p, v)]
            else:
                pv[p] = natural(p)
        val = model.evaluate(v, pv, u)
        memo[v] = val
        return val

    return natural(term.variable)


def exact_l3_probability(model: ScmModel, q: CtfQuery) -> float:
    """Probability that every term takes its assigned event value: the
    exogenous-weighted count of assignments where all indicators fire."""
    if not q.is_valued():
        raise QueryError("query must assign a value to every term")
    q.validate(model.diagram)
    total = 0.0
    for u, p in model.exogenous_support():
        if p == 0.0:
            continue
        if all(eval_potential_response(model, u, t) == t.value for t in q.terms):
            total += p
    return total


@dataclass(frozen=True)
class ExactDistribution:
    """Joint table over the query's terms: rows of values + probabilities."""

    terms: tuple[PotentialResponse, ...]
    support: tuple[tuple[Value, ...], ...]
    probabilities: tuple[float, ...]

    def prob(self, row: Sequence[Value]) -> float:
        row = tuple(row)
        for r, p in zip(self.support, self.probabilities):
            if r == row:
                return p
        return 0.0

    def as_dict(self) -> dict[tuple[Value, ...], float]:
        return dict(zip(self.support, self.probabilities))

    def marginal(self, index: int) -> dict[Value, float]:
        out: dict[Value, float] = {}
        for r, p in zip(self.support, self.probabilities):
            out[r[index]] = out.get(r[index], 0.0) + p
        return out

    def expectation(self, index: int = 0) -> float:
        return sum(float(r[index]) * p for r, p in zip(self.support, self.probabilities))

    def total_variation(self, other: Mapping[tuple, float]) -> float:
        keys = set(self.as_dict()) | set(other)
        mine = self.as_dict()
        return 0.5 * sum(abs(mine.get(k, 0.0) - other.get(k, 0.0)) for k in keys)


def exact_distribution(model: ScmModel, q: CtfQuery) -> ExactDistribution:
    """Full joint over term values; rows in domain product order."""
    q = q.unvalued()
    q.validate(model.diagram)
    doms = [model.diagram.domains[t.variable] for t in q.terms]
    probs: dict[tuple, float] = {row: 0.0 for row in itertools.product(*doms)}
    for u, p in model.exogenous_support():
        if p == 0.0:
            continue
        row = tuple(eval_potential_response(model, u, t) for t in q.terms)
        probs[row] += p
    support = tuple(probs)
    return ExactDistribution(q.terms, support, tuple(probs[r] for r in support))


def interventional_distribution(
    model: ScmModel,
    outcome: Sequence[str],
    do: Mapping[str, Value] | None = None,
) -> ExactDistribution:
    """P(outcome; do(x)) as the single-regime counterfactual joint."""
    do = dict(do or {})
    terms = tuple(response(v, do) for v in outcome)
    return exact_distribution(model, CtfQuery(terms))


def truncated_factorization(
    model: ScmModel,
    outcome: Sequence[str],
    do: Mapping[str, Value] | None = None,
) -> dict[tuple[Value, ...], float]:
    """Independent route to the interventional joint: sum the exogenous
    weight of every full endogenous assignment consistent with the
    intervention and the mechanisms, then marginalize onto ``outcome``.
    Used to cross-check the submodel-evaluation route."""
    do = dict(do or {})
    diagram = model.diagram
    outcome = tuple(outcome)
    doms = [diagram.domains[v] for v in outcome]
    out: dict[tuple, float] = {row: 0.0 for row in itertools.product(*doms)}
    order = diagram.topological_order()
    for u, p in model.exogenous_support():
        if p == 0.0:
            continue
        values: dict[str, Value] = {}
        for v in order:
            values[v] = do[v] if v in do else model.evaluate(v, values, u)
        out[tuple(values[v] for v in outcome)] += p
    return out


def nde(
    model: ScmModel,
    x: Value,
    x_prime: Value,
    y: Value,
    x_var: str = "X",
    z_var: str = "Z",
    y_var: str = "Y",
) -> float:
    """Natural direct effect of X on Y at outcome value y, holding the
    mediator Z at its response to the baseline x while Y's mechanism
    receives the contrast value x'.

    Computed exactly as P(Y=y under [X=x' into Y's mechanism, X=x into
    Z's mechanism]) minus P(Y=y; do(X=x)). Requires the mediation
    structure X->Z, Z->Y, X->Y.
    """
    d = model.diagram
    needed = {(x_var, z_var), (z_var, y_var), (x_var, y_var)}
    if not needed <= set(d.directed_edges):
        raise QueryError(
            f"no mediation structure {x_var}->{z_var}->{y_var} with a direct "
            f"{x_var}->{y_var} edge in this diagram"
        )
    if x == x_prime:
        raise QueryError("contrast values x and x' must differ")
    direct_children = frozenset(
        c for c in d.children(x_var) if c != z_var
    )
    nested = PotentialResponse(
        y_var,
        (
            RegimeEntry(x_var, x_prime, direct_children),
            RegimeEntry(x_var, x, frozenset({z_var})),
        ),
        y,
    )
    p_nested = exact_l3_probability(model, CtfQuery((nested,)))
    p_do_x = exact_l3_probability(
        model, CtfQuery((response(y_var, {x_var: x}, y),))
    )
    return p_nested - p_do_x
