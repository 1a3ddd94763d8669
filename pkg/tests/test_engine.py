import itertools

import pytest

from ctfrealize import (
    CausalDiagram,
    CtfQuery,
    Mechanism,
    QueryError,
    ScmModel,
    eval_potential_response,
    exact_distribution,
    exact_l3_probability,
    interventional_distribution,
    nde,
    query,
    response,
    truncated_factorization,
)
from ctfrealize.bandits import example3_problem
from ctfrealize.fixtures import (
    bow_model,
    chain_model,
    fan_model,
    hub_split_model,
    mediation_diagram,
    mediation_model,
)
from ctfrealize.models import independent_exogenous

DIST_TOL = 1e-10


def brute_force_probability(model, terms_with_values):
    """Independent oracle: evaluate each term by directly re-simulating
    the submodel from the mechanism tables, no engine involved."""
    total = 0.0
    order = model.diagram.topological_order()
    for u, p in model.exogenous_support():
        ok = True
        for term, wanted in terms_with_values:
            values = {}
            assignment = term.assignment()
            for v in order:
                if v in assignment:
                    values[v] = assignment[v]
                else:
                    values[v] = model.evaluate(v, values, u)
            if values[term.variable] != wanted:
                ok = False
                break
        if ok:
            total += p
    return total


def test_conflicting_responses_brute_force():
    # the engine evaluates non-realizable joints; realizability is a
    # separate concern
    bow = bow_model()
    q = query(response("Y", {"X": 0}, 1), response("Y", {"X": 1}, 1))
    oracle = brute_force_probability(
        bow, [(t, 1) for t in q.unvalued().terms]
    )
    assert oracle == pytest.approx(0.25, abs=1e-15)
    assert exact_l3_probability(bow, q) == pytest.approx(oracle, abs=DIST_TOL)


def test_ett_joint_frozen_values():
    dist = exact_distribution(
        bow_model(), query(response("Y", {"X": 1}), response("X"))
    )
    table = dist.as_dict()
    assert table[(1, 0)] == pytest.approx(0.55, abs=1e-12)
    assert table[(0, 1)] == pytest.approx(0.20, abs=1e-12)
    assert table[(1, 1)] == pytest.approx(0.25, abs=1e-12)
    assert table[(0, 0)] == pytest.approx(0.0, abs=1e-12)


def test_empty_regime_equals_forward_simulation():
    for model in (bow_model(), fan_model(), hub_split_model()):
        for u, p in model.exogenous_support():
            nat = model.natural_values(u)
            for v in model.diagram.variables:
                assert eval_potential_response(model, u, response(v)) == nat[v]


def test_consistency_property():
    # forcing the value the unit would have chosen anyway changes nothing
    bow = bow_model()
    for u, _ in bow.exogenous_support():
        nat = bow.natural_values(u)
        forced = eval_potential_response(bow, u, response("Y", {"X": nat["X"]}))
        assert forced == nat["Y"]


def test_example3_branch_mean():
    model = example3_problem().model
    uy_dom = model.exogenous_domains["UY"]
    vals = []
    for uy in uy_dom:
        u = (0, 0, 0, uy)
        vals.append(eval_potential_response(model, u, response("Y", {"X": 0})))
    assert sum(vals) / len(vals) == pytest.approx(0.6, abs=1e-12)


def test_unvalued_query_rejected_for_probability():
    with pytest.raises(QueryError):
        exact_l3_probability(bow_model(), query(response("Y", {"X": 1})))


def test_marginalization_agreement():
    for model in (bow_model(), hub_split_model()):
        q = query(response("Y" if "Y" in model.diagram else "Z", {"X": 1}), response("X"))
        dist = exact_distribution(model, q)
        for i, term in enumerate(q.terms):
            marg = dist.marginal(i)
            for value, p in marg.items():
                single = exact_l3_probability(
                    model, CtfQuery((term.with_value(value),))
                )
                assert p == pytest.approx(single, abs=DIST_TOL)


def test_distributions_sum_to_one_and_nonnegative():
    cases = [
        (bow_model(), query(response("Y", {"X": 0}), response("Y", {"X": 1}))),
        (fan_model(), query(response("Y", {"X": 1}), response("Z", {"X": 0}),
                            response("W", {"X": 1}))),
        (hub_split_model(), query(response("Z", {"X": 0}), response("W", {"T": 1}))),
    ]
    for model, q in cases:
        dist = exact_distribution(model, q)
        assert all(p >= 0 for p in dist.probabilities)
        assert sum(dist.probabilities) == pytest.approx(1.0, abs=DIST_TOL)


def test_interventional_truncated_factorization_agreement():
    cases = [
        (bow_model(), ["Y"], {"X": 1}),
        (bow_model(), ["X", "Y"], {}),
        (fan_model(), ["Y", "Z", "W"], {"X": 0}),
        (hub_split_model(), ["Z", "W"], {"X": 1, "T": 0}),
        (mediation_model(), ["Y", "Z"], {"X": 1}),
    ]
    for model, outcome, do in cases:
        via_submodel = interventional_distribution(model, outcome, do).as_dict()
        via_truncation = truncated_factorization(model, outcome, do)
        assert set(via_submodel) == set(via_truncation)
        for k in via_submodel:
            assert via_submodel[k] == pytest.approx(via_truncation[k], abs=0)


def test_do_on_non_ancestor_equals_observational():
    fan = fan_model()
    plain = exact_distribution(fan, query(response("Y"))).as_dict()
    done = interventional_distribution(fan, ["Y"], {"Z": 1}).as_dict()
    assert plain == done


def test_example3_interventional_values():
    model = example3_problem().model
    for x in (0, 1):
        d = interventional_distribution(model, ["Y"], {"X": x})
        assert d.expectation() == pytest.approx(0.7, abs=1e-12)


def test_example3_conditional_maxima():
    model = example3_problem().model
    x2 = 0  # post-decision input fixed to arm 0
    joint = {}
    for x in (0, 1):
        q = query(
            response("Y", {"X": x}),
            response("X"),
            response("D", {"X": x2}),
        )
        joint[x] = exact_distribution(model, q).as_dict()
    seen = {}
    for xn in (0, 1):
        for d in (0, 1):
            best = max(
                sum(p for (y, a, b), p in joint[x].items() if y == 1 and a == xn and b == d)
                / sum(p for (_, a, b), p in joint[x].items() if a == xn and b == d)
                for x in (0, 1)
            )
            seen[(xn, d)] = best
    # the post-decision readout reveals the mood bit: 0.85 when it is 0,
    # 0.75 when it is 1 (d equals the bit when the input is arm 0)
    for xn in (0, 1):
        assert seen[(xn, 0)] == pytest.approx(0.85, abs=1e-12)
        assert seen[(xn, 1)] == pytest.approx(0.75, abs=1e-12)


def test_point_mass_for_deterministic_variable():
    d = CausalDiagram(["C", "Y"], directed_edges=[("C", "Y")])
    names, doms, dist = independent_exogenous({"U": (0, 1)})
    mech = {
        "C": Mechanism.tabulate((), (), (), (), lambda: 1),
        "Y": Mechanism.tabulate(("C",), ("U",), ((0, 1),), ((0, 1),),
                                lambda c, u: c ^ u),
    }
    model = ScmModel(d, names, doms, dist, mech)
    out = exact_distribution(model, query(response("C"))).as_dict()
    assert out == {(0,): 0.0, (1,): 1.0}


# ---------------------------------------------------------------------------
# Natural direct effect
# ---------------------------------------------------------------------------

def nde_oracle(model, x, xp, y):
    """Nested-evaluation oracle: run the mediator under the baseline, feed
    the contrast value straight into the outcome mechanism."""
    total = 0.0
    for u, p in model.exogenous_support():
        z_x = eval_potential_response(model, u, response("Z", {"X": x}))
        yv = model.evaluate("Y", {"X": xp, "Z": z_x}, u)
        total += p * (1.0 if yv == y else 0.0)
    do_x = exact_l3_probability(model, query(response("Y", {"X": x}, y)))
    return total - do_x


def test_nde_zero_when_outcome_ignores_direct_input():
    model = mediation_model(direct_effect=False)
    assert nde(model, 0, 1, 1) == 0.0
    assert nde(model, 1, 0, 1) == 0.0


def test_nde_matches_nested_oracle():
    model = mediation_model(direct_effect=True)
    for x, xp in ((0, 1), (1, 0)):
        for y in (0, 1):
            assert nde(model, x, xp, y) == pytest.approx(
                nde_oracle(model, x, xp, y), abs=1e-12
            )


def test_nde_collapses_to_total_effect_when_mediator_constant():
    d = mediation_diagram()
    names, doms, dist = independent_exogenous(
        {"U_X": (0, 1), "U_ZY": (0, 1, 2)},
        {"U_X": (0.5, 0.5), "U_ZY": (0.5, 0.25, 0.25)},
    )
    mech = {
        "X": Mechanism.tabulate((), ("U_X",), (), ((0, 1),), lambda u: u),
        "Z": Mechanism.tabulate(("X",), ("U_ZY",), ((0, 1),), ((0, 1, 2),),
                                lambda x, u: 0),
        "Y": Mechanism.tabulate(
            ("X", "Z"), ("U_ZY",), ((0, 1), (0, 1)), ((0, 1, 2),),
            lambda x, z, u: (x | z) ^ (u == 2),
        ),
    }
    model = ScmModel(d, names, doms, dist, mech)
    total_effect = exact_l3_probability(
        model, query(response("Y", {"X": 1}, 1))
    ) - exact_l3_probability(model, query(response("Y", {"X": 0}, 1)))
    assert nde(model, 0, 1, 1) == pytest.approx(total_effect, abs=1e-12)


def test_nde_requires_mediation_structure():
    with pytest.raises(QueryError):
        nde(bow_model(), 0, 1, 1)
    with pytest.raises(QueryError):
        nde(mediation_model(), 1, 1, 1)  # contrast values must differ
