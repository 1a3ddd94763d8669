"""Counterfactual queries: potential responses, regimes, parsing.

A regime is a set of per-edge value assignments. The common atomic case
("Y under X fixed to 1") assigns the value on every outgoing edge of X;
the path-restricted case ("Y where only Y's mechanism receives X=1")
lists the receiving children explicitly. One variable may appear in
several entries of one regime as long as the explicit target sets are
disjoint, which is how a nested term like "Y receiving x' directly
while the mediator runs under x" is written.

Text form (formal grammar in the package README):

    P(Y[X=1], X)            two terms: Y under do(X=1), and natural X
    P(Y[X=1]=1, X=0)        the same terms with event values attached
    P(Y[X=1->Y], X)         path-restricted: only Y's mechanism sees 1
    P(Y[X=1->Y, X=0->Z])    two edges of X carry different values
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import QueryError, QuerySyntaxError
from .graphs import CausalDiagram, Value


@dataclass(frozen=True)
class RegimeEntry:
    """One intervention edge-group: ``var`` is fixed to ``value`` as input
    to ``targets`` (None means every child, i.e. an atomic do())."""

    var: str
    value: Value
    targets: frozenset[str] | None = None

    def is_full(self) -> bool:
        return self.targets is None


@dataclass(frozen=True)
class PotentialResponse:
    """A variable evaluated under a (possibly empty) regime."""

    variable: str
    regime: tuple[RegimeEntry, ...] = ()
    value: Value | None = None  # event value; None when unvalued

    def __post_init__(self):
        for e in self.regime:
            if e.var == self.variable:
                raise QueryError(
                    f"self-intervention: {self.variable!r} appears in its own regime"
                )
        # entries for one variable must have pairwise-disjoint explicit targets
        by_var: dict[str, list[RegimeEntry]] = {}
        for e in self.regime:
            by_var.setdefault(e.var, []).append(e)
        for var, entries in by_var.items():
            if len(entries) > 1:
                if any(e.is_full() for e in entries):
                    raise QueryError(
                        f"regime assigns {var!r} both fully and per-edge"
                    )
                seen: set[str] = set()
                for e in entries:
                    assert e.targets is not None
                    if seen & e.targets:
                        raise QueryError(
                            f"regime entries for {var!r} have overlapping targets"
                        )
                    seen |= e.targets

    # -- convenience ------------------------------------------------------

    def is_full_do(self) -> bool:
        return all(e.is_full() for e in self.regime)

    def regime_vars(self) -> tuple[str, ...]:
        seen: list[str] = []
        for e in self.regime:
            if e.var not in seen:
                seen.append(e.var)
        return tuple(seen)

    def assignment(self) -> dict[str, Value]:
        """var -> value for full-do regimes."""
        if not self.is_full_do():
            raise QueryError("regime is path-restricted, not a plain assignment")
        return {e.var: e.value for e in self.regime}

    def with_value(self, value: Value) -> "PotentialResponse":
        return PotentialResponse(self.variable, self.regime, value)

    def same_response(self, other: "PotentialResponse") -> bool:
        """Same variable under the same regime (event values ignored)."""
        return (
            self.variable == other.variable
            and frozenset(self.regime) == frozenset(other.regime)
        )

    def __str__(self) -> str:
        sub = ""
        if self.regime:
            parts = []
            for e in self.regime:
                s = f"{e.var}={e.value}"
                if e.targets is not None:
                    tgt = sorted(e.targets)
                    s += "->" + (tgt[0] if len(tgt) == 1 else "{" + ",".join(tgt) + "}")
                parts.append(s)
            sub = "[" + ", ".join(parts) + "]"
        val = f"={self.value}" if self.value is not None else ""
        return f"{self.variable}{sub}{val}"


def response(variable: str, do: Mapping[str, Value] | None = None,
             value: Value | None = None) -> PotentialResponse:
    """Shorthand for an atomic-regime potential response."""
    regime = tuple(RegimeEntry(v, x) for v, x in (do or {}).items())
    return PotentialResponse(variable, regime, value)


@dataclass(frozen=True)
class CtfQuery:
    """Conjunction of potential responses, e.g. the ETT query P(Y[X=1], X).
    The empty conjunction is legal and denotes the sure event."""

    terms: tuple[PotentialResponse, ...]

    def is_valued(self) -> bool:
        return all(t.value is not None for t in self.terms)

    def values(self) -> tuple[Value, ...]:
        return tuple(t.value for t in self.terms)

    def unvalued(self) -> "CtfQuery":
        return CtfQuery(tuple(t.with_value(None) for t in self.terms))

    def validate(self, diagram: CausalDiagram) -> None:
        for t in self.terms:
            if t.variable not in diagram:
                raise QueryError(f"unknown variable {t.variable!r}")
            if t.value is not None and t.value not in diagram.domains[t.variable]:
                raise QueryError(
                    f"value {t.value!r} outside domain of {t.variable!r}"
                )
            for e in t.regime:
                if e.var not in diagram:
                    raise QueryError(f"unknown regime variable {e.var!r}")
                if e.value not in diagram.domains[e.var]:
                    raise QueryError(
                        f"value {e.value!r} outside domain of {e.var!r}"
                    )
                if e.targets is not None:
                    ch = set(diagram.children(e.var))
                    bad = e.targets - ch
                    if bad:
                        raise QueryError(
                            f"targets {sorted(bad)} are not children of {e.var!r}"
                        )

    def normalized(self, diagram: CausalDiagram) -> "CtfQuery":
        """Drop regime variables that are not ancestors of their term's
        variable; such subscripts cannot affect the response. Warns once
        per dropped entry."""
        new_terms = []
        for t in self.terms:
            kept = []
            for e in t.regime:
                if t.variable in diagram.descendants(e.var):
                    kept.append(e)
                else:
                    warnings.warn(
                        f"dropping irrelevant subscript {e.var}={e.value} "
                        f"from term {t}: {e.var!r} is not an ancestor of "
                        f"{t.variable!r}",
                        stacklevel=3,
                    )
            new_terms.append(PotentialResponse(t.variable, tuple(kept), t.value))
        return CtfQuery(tuple(new_terms))

    def __str__(self) -> str:
        return "P(" + ", ".join(str(t) for t in self.terms) + ")"


def query(*terms: PotentialResponse) -> CtfQuery:
    return CtfQuery(tuple(terms))


# ---------------------------------------------------------------------------
# Counterfactual ancestors
# ---------------------------------------------------------------------------

def counterfactual_ancestors(
    q: CtfQuery | PotentialResponse, diagram: CausalDiagram
) -> tuple[PotentialResponse, ...]:
    """Every potential response that must be realized, under its required
    regime, for the query's terms to be evaluated.

    For a term with variable Y under assignment x to variables X: each
    ancestor W of Y in the graph with X's outgoing edges removed
    contributes W under the restriction of x to the ancestors of W in
    the graph with X's incoming edges removed. Terms without regimes
    contribute their plain ancestors. The union is deduplicated; one
    variable may legitimately appear under several regimes (that is
    exactly what the realizability criterion looks for).
    """
    terms = q.terms if isinstance(q, CtfQuery) else (q,)
    out: list[PotentialResponse] = []
    for t in terms:
        if not t.is_full_do():
            raise QueryError(
                "counterfactual ancestors are defined for plain value "
                "subscripts; rewrite path-restricted terms over the "
                "expanded diagram"
            )
        x = t.assignment()
        xs = tuple(x)
        g_under = diagram.mutilate(cut_out_of=xs)
        g_over = diagram.mutilate(cut_into=xs)
        for w in g_under.ancestors(t.variable):
            anc_w = set(g_over.ancestors(w))
            z = tuple(
                RegimeEntry(v, x[v]) for v in xs if v in anc_w and v != w
            )
            cand = PotentialResponse(w, z)
            if not any(cand.same_response(o) for o in out):
                out.append(cand)
    return tuple(out)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_NAME_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.'")


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        self.skip_ws()
        if not self.text.startswith(ch, self.pos):
            raise QuerySyntaxError(f"expected {ch!r}", self.text, self.pos)
        self.pos += len(ch)

    def try_take(self, ch: str) -> bool:
        self.skip_ws()
        if self.text.startswith(ch, self.pos):
            self.pos += len(ch)
            return True
        return False

    def name(self) -> str:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] in _NAME_CHARS:
            self.pos += 1
        if self.pos == start:
            raise QuerySyntaxError("expected a name", self.text, self.pos)
        return self.text[start:self.pos]

    def done(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def _coerce(token: str, domain: Sequence[Value]) -> Value:
    if token in domain:
        return token
    try:
        as_int = int(token)
    except ValueError:
        as_int = None
    if as_int is not None and as_int in domain:
        return as_int
    raise QueryError(f"value {token!r} outside domain {list(domain)}")


def parse_query(text: str, diagram: CausalDiagram) -> CtfQuery:
    """Parse query text against a diagram's variables and domains.

    Raises QuerySyntaxError (with position) for malformed text and
    QueryError for unknown variables, out-of-domain values and
    self-interventions.
    """
    sc = _Scanner(text)
    sc.skip_ws()
    wrapped = False
    if sc.text.startswith("P", sc.pos) and sc.text[sc.pos + 1: sc.pos + 2] == "(":
        sc.pos += 1
        sc.expect("(")
        wrapped = True

    terms: list[PotentialResponse] = []
    while True:
        terms.append(_parse_term(sc, diagram))
        if not sc.try_take(","):
            break
    if wrapped:
        sc.expect(")")
    if not sc.done():
        raise QuerySyntaxError("trailing input", sc.text, sc.pos)

    q = CtfQuery(tuple(terms))
    q.validate(diagram)
    return q


def _parse_term(sc: _Scanner, diagram: CausalDiagram) -> PotentialResponse:
    var = sc.name()
    if var not in diagram:
        raise QueryError(f"unknown variable {var!r}")
    entries: list[RegimeEntry] = []
    if sc.try_take("["):
        while True:
            entries.append(_parse_entry(sc, diagram))
            if not sc.try_take(","):
                break
        sc.expect("]")
    value: Value | None = None
    if sc.try_take("="):
        value = _coerce(sc.name(), diagram.domains[var])
    return PotentialResponse(var, tuple(entries), value)


def _parse_entry(sc: _Scanner, diagram: CausalDiagram) -> RegimeEntry:
    var = sc.name()
    if var not in diagram:
        raise QueryError(f"unknown regime variable {var!r}")
    sc.expect("=")
    value = _coerce(sc.name(), diagram.domains[var])
    targets: frozenset[str] | None = None
    if sc.try_take("->"):
        if sc.try_take("{"):
            names = [sc.name()]
            while sc.try_take(","):
                names.append(sc.name())
            sc.expect("}")
        else:
            names = [sc.name()]
        targets = frozenset(names)
    return RegimeEntry(var, value, targets)
