import itertools

import numpy as np
import pytest

from ctfrealize import (
    CausalDiagram,
    Mechanism,
    QueryError,
    ScmModel,
    ctf_realize,
    maximal_action_set,
    query,
    response,
)
from ctfrealize.bandits import (
    ACT_NONE,
    READ_D,
    SKIP_D,
    ExactTables,
    MabProblem,
    Strategy,
    ThompsonSolver,
    act_fix_y,
    act_write,
    brute_force_optimal,
    check_strategy_realizable,
    evaluate_strategy_exact,
    example3_problem,
    fix_d,
    run_epochs,
    tier_ett,
    tier_int,
    tier_obs,
    tier_opt,
    write_metric_csv,
)
from ctfrealize.models import independent_exogenous


@pytest.fixture(scope="module")
def problem():
    return example3_problem()


@pytest.fixture(scope="module")
def tables(problem):
    return ExactTables(problem)


def unconfounded_problem():
    """Reward depends on the arm and private noise only: nothing above
    the write-tier can help."""
    d = CausalDiagram(
        ["X", "D", "Y"],
        directed_edges=[("X", "Y"), ("X", "D")],
    )
    names, doms, dist = independent_exogenous(
        {"UX": (0, 1), "UD": (0, 1), "UY": tuple(range(10))}
    )
    mech = {
        "X": Mechanism.tabulate((), ("UX",), (), ((0, 1),), lambda u: u),
        "D": Mechanism.tabulate(("X",), ("UD",), ((0, 1),), ((0, 1),),
                                lambda x, u: x ^ u),
        "Y": Mechanism.tabulate(
            ("X",), ("UY",), ((0, 1),), (tuple(range(10)),),
            lambda x, uy: 1 if uy < (6 if x == 1 else 4) else 0,
        ),
    }
    return MabProblem(ScmModel(d, names, doms, dist, mech))


def constant_reward_problem():
    d = CausalDiagram(["X", "D", "Y"], directed_edges=[("X", "Y"), ("X", "D")])
    names, doms, dist = independent_exogenous({"UX": (0, 1), "UD": (0, 1)})
    mech = {
        "X": Mechanism.tabulate((), ("UX",), (), ((0, 1),), lambda u: u),
        "D": Mechanism.tabulate(("X",), ("UD",), ((0, 1),), ((0, 1),),
                                lambda x, u: x ^ u),
        "Y": Mechanism.tabulate(("X",), (), ((0, 1),), (), lambda x: 1),
    }
    return MabProblem(ScmModel(d, names, doms, dist, mech))


# ---------------------------------------------------------------------------
# Exact values
# ---------------------------------------------------------------------------

def test_tier_values_match_published_numbers(problem, tables):
    assert evaluate_strategy_exact(problem, tier_obs(problem, tables), tables) \
        == pytest.approx(0.65, abs=1e-12)
    assert evaluate_strategy_exact(problem, tier_int(problem, tables), tables) \
        == pytest.approx(0.70, abs=1e-12)
    assert evaluate_strategy_exact(problem, tier_ett(problem, tables), tables) \
        == pytest.approx(0.75, abs=1e-12)
    assert evaluate_strategy_exact(problem, tier_opt(problem, tables), tables) \
        == pytest.approx(0.80, abs=1e-12)


def test_interventional_arm_values(problem, tables):
    assert tables.interventional_value(0) == pytest.approx(0.7, abs=1e-12)
    assert tables.interventional_value(1) == pytest.approx(0.7, abs=1e-12)
    assert tables.natural_value == pytest.approx(0.65, abs=1e-12)


def test_brute_force_certifies_the_opt_tier(problem, tables):
    _, value = brute_force_optimal(problem, tables)
    assert value == pytest.approx(0.80, abs=1e-12)


def test_dominance_over_lower_tiers():
    for prob in (example3_problem(), unconfounded_problem()):
        t = ExactTables(prob)
        _, best = brute_force_optimal(prob, t)
        for tier in (tier_obs, tier_int):
            v = evaluate_strategy_exact(prob, tier(prob, t), t)
            assert best >= v - 1e-12


def test_no_confounding_means_write_tier_ties_the_optimum():
    prob = unconfounded_problem()
    t = ExactTables(prob)
    _, best = brute_force_optimal(prob, t)
    int_v = evaluate_strategy_exact(prob, tier_int(prob, t), t)
    assert best == pytest.approx(int_v, abs=1e-12)


def test_arm_with_no_effect_makes_all_strategies_tie():
    prob = constant_reward_problem()
    t = ExactTables(prob)
    _, best = brute_force_optimal(prob, t)
    for tier in (tier_obs, tier_int, tier_ett, tier_opt):
        v = evaluate_strategy_exact(prob, tier(prob, t), t)
        assert v == pytest.approx(best, abs=1e-12)


def test_normal_form_is_not_beaten_by_the_wider_strategy_space(problem, tables):
    # exhaustive cross-oracle: every D-stage option (skip / read natural /
    # fix either input) crossed with every final action (none / write /
    # fix reward input) on each information key
    arms = problem.arms
    keys = tables.keys()
    d_options = [SKIP_D, READ_D] + [fix_d(x) for x in arms]
    y_options = [ACT_NONE] + [act_write(x) for x in arms] + [act_fix_y(x) for x in arms]
    _, normal_best = brute_force_optimal(problem, tables)
    best = -1.0
    per_key_choices = []
    for key in keys:
        cell = []
        for d_opt in d_options:
            if d_opt == SKIP_D:
                info_keys = [key]
            else:
                info_keys = [key + (d,) for d in problem.post_domain]
            for ys in itertools.product(y_options, repeat=len(info_keys)):
                cell.append((d_opt, dict(zip(info_keys, ys))))
        per_key_choices.append(cell)
    for combo in itertools.product(*per_key_choices):
        d_stage = {k: c[0] for k, c in zip(keys, combo)}
        y_stage = {}
        for _, c in zip(keys, combo):
            y_stage.update(c[1])
        strat = Strategy("cross-oracle", d_stage, y_stage)
        v = evaluate_strategy_exact(problem, strat, tables,
                                    check_realizability=False)
        best = max(best, v)
    assert best <= normal_best + 1e-12


# ---------------------------------------------------------------------------
# Realizability gate
# ---------------------------------------------------------------------------

def test_double_post_decision_context_is_rejected(problem):
    q = query(
        response("Y", {"X": 0}),
        response("X"),
        response("D", {"X": 0}),
        response("D", {"X": 1}),
    )
    verdict = ctf_realize(q, problem.model.diagram,
                          maximal_action_set(problem.model.diagram))
    assert not verdict
    pair = verdict.criterion_pair
    assert pair and {t.variable for t in pair} == {"D"}


def test_gate_passes_every_tier(problem, tables):
    for tier in (tier_obs, tier_int, tier_ett, tier_opt):
        check_strategy_realizable(problem, tier(problem, tables))


def test_gate_rejects_unrealizable_strategy(problem, tables):
    # observing the natural decision while erase-and-writing it needs
    # samples of (Y_x, X) with only whole-variable randomization: the
    # natural readout is destroyed, so the gate must refuse to run this
    broken = Strategy(
        "write-after-observing",
        {k: SKIP_D for k in tables.keys()},
        {k: act_write(0) for k in tables.keys()},
        observes=frozenset({"x_nat"}),
    )
    with pytest.raises(QueryError, match="not realizable"):
        check_strategy_realizable(problem, broken)


def test_natural_plus_forced_reward_joint_is_rejected(problem):
    q = query(response("Y"), response("Y", {"X": 1}), response("X"))
    verdict = ctf_realize(q, problem.model.diagram,
                          maximal_action_set(problem.model.diagram))
    assert not verdict


# ---------------------------------------------------------------------------
# Online runs
# ---------------------------------------------------------------------------

def test_short_runs_are_sane(problem, tables):
    m = run_epochs("ts-opt", problem, 200, 4, seed=0, tables=tables)
    assert m.cumulative_regret.shape == (4, 200)
    diffs = np.diff(m.cumulative_regret, axis=1)
    assert (diffs >= -1e-12).all()  # CR nondecreasing
    assert ((m.oap >= 0) & (m.oap <= 1)).all()


def test_zero_horizon_yields_empty_metrics(problem, tables):
    m = run_epochs("ts-opt", problem, 0, 3, seed=0, tables=tables)
    assert m.cumulative_regret.shape == (3, 0)


def test_constant_reward_run_has_zero_regret(tables):
    prob = constant_reward_problem()
    t = ExactTables(prob)
    m = run_epochs("ts", prob, 100, 2, seed=0, tables=t)
    assert np.allclose(m.cumulative_regret, 0.0)


def test_same_seed_reproduces_csv_bytes(problem, tables, tmp_path):
    a = run_epochs("ts-ett", problem, 120, 3, seed=9, tables=tables)
    b = run_epochs("ts-ett", problem, 120, 3, seed=9, tables=tables)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_metric_csv(pa, a, "cr")
    write_metric_csv(pb, b, "cr")
    assert pa.read_bytes() == pb.read_bytes()
    c = run_epochs("ts-ett", problem, 120, 3, seed=10, tables=tables)
    pc = tmp_path / "c.csv"
    write_metric_csv(pc, c, "cr")
    assert pa.read_bytes() != pc.read_bytes()


def test_single_epoch_band_collapses(problem, tables):
    m = run_epochs("ts", problem, 50, 1, seed=0, tables=tables)
    mean, lo, hi = m.regret_band()
    assert np.allclose(mean, lo) and np.allclose(mean, hi)


def test_thompson_posterior_counts_match_updates():
    solver = ThompsonSolver()
    rng = np.random.default_rng(0)
    solver.hot_start("pinned", 0.7)
    routed = {"a": 0, "b": 0}
    for _ in range(200):
        key = "a" if rng.random() < 0.3 else "b"
        solver.draw(key, rng)
        solver.update(key, float(rng.random() < 0.5))
        routed[key] += 1
    assert solver.pulls("a") == routed["a"]
    assert solver.pulls("b") == routed["b"]
    solver.update("pinned", 1.0)
    assert solver.draw("pinned", rng) == 0.7  # pinned cells ignore updates


def test_mab_opt_matches_ts_opt_with_thompson_solver(problem, tables):
    from ctfrealize.bandits import mab_opt, ts_opt

    a = ts_opt(problem, 150, epochs=2, seed=5, tables=tables)
    b = mab_opt(problem, ThompsonSolver, 150, epochs=2, seed=5, tables=tables)
    assert np.array_equal(a.cumulative_regret, b.cumulative_regret)


def test_standard_sampler_regret_is_linear(problem, tables):
    m = run_epochs("ts", problem, 1200, 8, seed=2, tables=tables)
    mean, _, _ = m.regret_band()
    # slope over the second half approaches the 0.10 gap to the optimum
    slope = (mean[-1] - mean[600]) / 600
    assert slope == pytest.approx(0.10, abs=0.02)
