"""Causal multi-armed bandits over the context/decision/post/reward template.

The template: context Z (possibly absent), decision X, a post-decision
variable D downstream of X, and a reward Y, with arbitrary latent
confounding among them. D never feeds Y; its role is informational — a
unit's D under a forced input reveals part of the confounder before the
reward decision is made.

Strategy tiers, each realizable with progressively richer actions:

* obs  — follow the natural behaviour (no actions);
* int  — observe z, erase-and-write the best fixed arm;
* ett  — observe z and the natural decision x', then fix the best arm
         as input to the reward mechanism only;
* opt  — additionally fix a chosen input to D first, observe D, and
         only then fix the reward arm: a two-stage plan whose sampling
         distribution P(Y_x, X, Z, D_x'') is itself realizable;
* aug  — same physical protocol as opt, but the learner treats (x', d)
         as opaque context: no consistency hot-start, no meaning
         attached to the D-stage (its input is drawn uniformly).

Metrics (recorded per round, aggregated over epochs):

* cumulative regret — per-round increments are the full-information
  oracle gap max_x E[Y|x,u] - E[Y|x_played,u], nonnegative by
  construction; on the shipped problem its expectation equals the
  brute-force optimal value used as the comparison baseline.
* OAP (optimal action probability) — 1 for a round iff (a) the D-stage
  action attains the best achievable first-stage value for the observed
  (z, x') among {no D action} and {fix any input to D}, and (b) the
  final arm attains max_x E[Y_x | z, natural x', and (input, d) when D
  was fixed and read]. Value-based, so distinct but equally optimal
  D-inputs all count.
* mean reward — E[Y | arm, unit] per round.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EstimationError, ModelError, QueryError
from .graphs import CausalDiagram, Value
from .models import Mechanism, ScmModel, independent_exogenous
from .queries import CtfQuery, response
from .engine import eval_potential_response
from .realizability import (
    ActionSet,
    ctf_rand_action,
    ctf_realize,
    maximal_action_set,
    rand_action,
    read_action,
    select,
)
from .simulate import Experiment, RandomDevice

VALUE_TOL = 1e-9


@dataclass(frozen=True)
class MabProblem:
    """A bandit instance: an SCM whose diagram fits the template, plus
    the roles of its variables."""

    model: ScmModel
    decision: str = "X"
    reward: str = "Y"
    post: str = "D"
    context: str | None = None

    def __post_init__(self):
        d = self.model.diagram
        for v in (self.decision, self.reward, self.post):
            if v not in d:
                raise ModelError(f"problem variable {v!r} not in the model")
        if self.context is not None and self.context not in d:
            raise ModelError(f"context variable {self.context!r} not in the model")
        if self.post not in d.children(self.decision):
            raise ModelError(f"{self.post!r} must be a child of {self.decision!r}")
        if self.reward not in d.descendants(self.decision):
            raise ModelError(f"{self.reward!r} must be downstream of {self.decision!r}")
        if set(d.domains[self.reward]) - {0, 1}:
            raise ModelError("reward must be binary 0/1")

    @property
    def arms(self) -> tuple[Value, ...]:
        return self.model.diagram.domains[self.decision]

    @property
    def post_domain(self) -> tuple[Value, ...]:
        return self.model.diagram.domains[self.post]

    @property
    def context_domain(self) -> tuple[Value, ...]:
        if self.context is None:
            return (None,)
        return self.model.diagram.domains[self.context]


# ---------------------------------------------------------------------------
# The shipped problem
# ---------------------------------------------------------------------------

# E[reward | arm, confounder bits]: arm x, habit bits (u1, u2), mood bit u3.
# The natural decision is x = u1 xor u2 and the post-decision variable
# flips with u3, so neither tier below "opt" can separate the two 0.85
# branches from the 0.55 ones.
REWARD_MEANS: dict[tuple[int, int, int, int], float] = {
    (0, 0, 0, 0): 0.6, (0, 0, 1, 0): 0.9, (0, 1, 0, 0): 0.8, (0, 1, 1, 0): 0.5,
    (1, 0, 0, 0): 0.9, (1, 0, 1, 0): 0.6, (1, 1, 0, 0): 0.5, (1, 1, 1, 0): 0.8,
    (0, 0, 0, 1): 0.8, (0, 0, 1, 1): 0.7, (0, 1, 0, 1): 0.6, (0, 1, 1, 1): 0.7,
    (1, 0, 0, 1): 0.7, (1, 0, 1, 1): 0.8, (1, 1, 0, 1): 0.7, (1, 1, 1, 1): 0.6,
}


def example3_problem() -> MabProblem:
    """Binary two-arm instance with adversarial confounding: three fair
    latent bits drive the natural decision (u1 xor u2) and the
    post-decision variable (x xor u3); reward means are drawn from
    REWARD_MEANS through a granularity-0.1 auxiliary noise variable."""
    diagram = CausalDiagram(
        ["X", "D", "Y"],
        directed_edges=[("X", "Y"), ("X", "D")],
        bidirected_edges=[("X", "Y"), ("D", "Y")],
    )
    names, doms, dist = independent_exogenous(
        {"U1": (0, 1), "U2": (0, 1), "U3": (0, 1),
         "UY": tuple(range(10))},
    )

    def f_y(x, u1, u2, u3, uy):
        return 1 if uy < round(10 * REWARD_MEANS[(x, u1, u2, u3)]) else 0

    mech = {
        "X": Mechanism.tabulate((), ("U1", "U2"), (), ((0, 1), (0, 1)),
                                lambda u1, u2: u1 ^ u2),
        "D": Mechanism.tabulate(("X",), ("U3",), ((0, 1),), ((0, 1),),
                                lambda x, u3: x ^ u3),
        "Y": Mechanism.tabulate(
            ("X",), ("U1", "U2", "U3", "UY"),
            ((0, 1),), ((0, 1), (0, 1), (0, 1), tuple(range(10))),
            f_y,
        ),
    }
    model = ScmModel(diagram, names, doms, dist, mech)
    return MabProblem(model)


# ---------------------------------------------------------------------------
# Exact tables
# ---------------------------------------------------------------------------

class ExactTables:
    """Everything the harness needs in closed form, by one enumeration of
    the exogenous support: tier conditionals, first-stage values, the
    per-unit oracle, and the observational conditionals used for
    hot-starting."""

    def __init__(self, problem: MabProblem):
        self.problem = problem
        model = problem.model
        dec, rew, post, ctx = (
            problem.decision, problem.reward, problem.post, problem.context
        )
        self.core_vars = tuple(
            u for u in model.exogenous_vars
            if any(
                u in model.mechanisms[v].exogenous
                for v in model.diagram.variables
                if v != rew
            )
        )
        core_idx = [model.exogenous_vars.index(u) for u in self.core_vars]

        p_key: dict[tuple, float] = {}
        e_zx: dict[tuple, float] = {}
        p_d: dict[tuple, float] = {}
        e_full: dict[tuple, float] = {}
        p_core: dict[tuple, float] = {}
        e_core: dict[tuple, float] = {}
        p_obs_xd: dict[tuple, float] = {}
        e_obs_xd: dict[tuple, float] = {}
        p_obs_zx: dict[tuple, float] = {}
        e_obs_zx: dict[tuple, float] = {}
        e_natural = 0.0

        arms = problem.arms
        for u, p in model.exogenous_support():
            if p == 0.0:
                continue
            nat = model.natural_values(u)
            z = nat[ctx] if ctx else None
            xn = nat[dec]
            y_nat = float(nat[rew])
            core = tuple(u[i] for i in core_idx)
            y_x = {
                x: float(eval_potential_response(model, u, response(rew, {dec: x})))
                for x in arms
            }
            d_x = {
                x2: eval_potential_response(model, u, response(post, {dec: x2}))
                for x2 in arms
            }
            e_natural += p * y_nat
            p_core[core] = p_core.get(core, 0.0) + p
            key = (z, xn)
            p_key[key] = p_key.get(key, 0.0) + p
            p_obs_zx[key] = p_obs_zx.get(key, 0.0) + p
            e_obs_zx[key] = e_obs_zx.get(key, 0.0) + p * y_nat
            obs_key = (xn, nat[post])
            p_obs_xd[obs_key] = p_obs_xd.get(obs_key, 0.0) + p
            e_obs_xd[obs_key] = e_obs_xd.get(obs_key, 0.0) + p * y_nat
            for x in arms:
                e_zx[key + (x,)] = e_zx.get(key + (x,), 0.0) + p * y_x[x]
                e_core[core + (x,)] = e_core.get(core + (x,), 0.0) + p * y_x[x]
            for x2 in arms:
                fk = (z, xn, x2, d_x[x2])
                p_d[fk] = p_d.get(fk, 0.0) + p
                for x in arms:
                    e_full[fk + (x,)] = e_full.get(fk + (x,), 0.0) + p * y_x[x]

        self.natural_value = e_natural
        self._p_key = p_key
        self._e_zx = e_zx
        self._p_d = p_d
        self._e_full = e_full
        self._p_core = p_core
        self._e_core = e_core
        self._p_obs_xd = p_obs_xd
        self._e_obs_xd = e_obs_xd
        self._p_obs_zx = p_obs_zx
        self._e_obs_zx = e_obs_zx
        self._core_pos = {u: i for i, u in enumerate(model.exogenous_vars)}

    # -- unit-level -------------------------------------------------------

    def core_of(self, exogenous: Mapping[str, Value]) -> tuple:
        return tuple(exogenous[u] for u in self.core_vars)

    def reward_mean(self, arm: Value, core: tuple) -> float:
        return self._e_core[core + (arm,)] / self._p_core[core]

    def oracle_value(self, core: tuple) -> float:
        return max(self.reward_mean(x, core) for x in self.problem.arms)

    # -- tier conditionals --------------------------------------------------

    def mean_given_zx(self, z: Value, xn: Value, arm: Value) -> float:
        return self._e_zx[(z, xn, arm)] / self._p_key[(z, xn)]

    def mean_given_full(self, z, xn, x2, d, arm) -> float:
        return self._e_full[(z, xn, x2, d, arm)] / self._p_d[(z, xn, x2, d)]

    def d_dist(self, z, xn, x2) -> dict[Value, float]:
        tot = self._p_key[(z, xn)]
        return {
            d: self._p_d.get((z, xn, x2, d), 0.0) / tot
            for d in self.problem.post_domain
        }

    def interventional_value(self, arm: Value) -> float:
        return sum(
            self._e_zx[k + (arm,)] for k in self._p_key
        )

    # -- observational conditionals (hot-starts) ------------------------------

    def obs_mean_given_xd(self, x: Value, d: Value) -> float:
        if self._p_obs_xd.get((x, d), 0.0) == 0.0:
            return 0.5  # unreachable cell under the natural regime
        return self._e_obs_xd[(x, d)] / self._p_obs_xd[(x, d)]

    def obs_mean_given_zx(self, z: Value, xn: Value) -> float:
        if self._p_obs_zx.get((z, xn), 0.0) == 0.0:
            return 0.5
        return self._e_obs_zx[(z, xn)] / self._p_obs_zx[(z, xn)]

    # -- first-stage values ---------------------------------------------------

    def stage1_value(self, z: Value, xn: Value, d_input: Value | None) -> float:
        """Expected reward of playing optimally downstream of the D-stage
        choice: None = no D action (condition on (z, x') only)."""
        if d_input is None:
            return max(self.mean_given_zx(z, xn, x) for x in self.problem.arms)
        out = 0.0
        for d, pd in self.d_dist(z, xn, d_input).items():
            if pd == 0.0:
                continue
            out += pd * max(
                self.mean_given_full(z, xn, d_input, d, x)
                for x in self.problem.arms
            )
        return out

    def stage1_optimal_value(self, z: Value, xn: Value) -> float:
        options = [self.stage1_value(z, xn, None)]
        options += [self.stage1_value(z, xn, x2) for x2 in self.problem.arms]
        return max(options)

    def keys(self) -> list[tuple]:
        return sorted(self._p_key, key=repr)

    def key_prob(self, key: tuple) -> float:
        return self._p_key[key]


# ---------------------------------------------------------------------------
# Strategies: exact evaluation and the brute-force oracle
# ---------------------------------------------------------------------------

SKIP_D = ("skip",)
READ_D = ("read",)


def fix_d(x2: Value) -> tuple:
    return ("fix", x2)


ACT_NONE = ("none",)


def act_write(x: Value) -> tuple:
    return ("write", x)


def act_fix_y(x: Value) -> tuple:
    return ("fix_y", x)


@dataclass(frozen=True)
class Strategy:
    """A two-stage decision rule on the template.

    ``d_stage`` maps (z, natural x') to a D-stage choice: SKIP_D (act
    without touching or seeing D), READ_D (read the natural D), or
    fix_d(x'') (fix x'' as input to D, then read it). ``y_stage`` maps
    the information key — (z, x') after SKIP_D, else (z, x', d) — to
    the final action: ACT_NONE (let the natural decision stand),
    act_write(x) (erase-and-write) or act_fix_y(x) (fix x as input to
    the reward mechanism only).

    ``observes`` lists which of {"z", "x_nat", "d"} the rule actually
    conditions on; it determines the sampling distribution whose
    realizability gates execution.
    """

    name: str
    d_stage: Mapping[tuple, tuple]
    y_stage: Mapping[tuple, tuple]
    observes: frozenset[str] = frozenset()

    def sampling_query(self, problem: MabProblem) -> CtfQuery:
        """The joint the strategy needs samples from while learning, with
        representative distinct regime values."""
        arms = problem.arms
        terms = []
        y_kinds = {a[0] for a in self.y_stage.values()}
        if y_kinds <= {"none"}:
            terms.append(response(problem.reward))
        else:
            terms.append(response(problem.reward, {problem.decision: arms[0]}))
        if "x_nat" in self.observes:
            terms.append(response(problem.decision))
        if "z" in self.observes and problem.context:
            terms.append(response(problem.context))
        d_kinds = {a[0] for a in self.d_stage.values()}
        if "d" in self.observes:
            if d_kinds == {"read"}:
                terms.append(response(problem.post))
            elif "fix" in d_kinds:
                alt = arms[1] if len(arms) > 1 else arms[0]
                terms.append(response(problem.post, {problem.decision: alt}))
        return CtfQuery(tuple(terms))

    def required_actions(self, problem: MabProblem) -> ActionSet:
        acts = [select()]
        acts += [read_action(v) for v in problem.model.diagram.variables]
        y_kinds = {a[0] for a in self.y_stage.values()}
        if "write" in y_kinds:
            acts.append(rand_action(problem.decision))
        if "fix_y" in y_kinds:
            acts.append(ctf_rand_action(problem.decision, [problem.reward]))
        if any(a[0] == "fix" for a in self.d_stage.values()):
            acts.append(ctf_rand_action(problem.decision, [problem.post]))
        return ActionSet(acts, problem.model.diagram)


def check_strategy_realizable(problem: MabProblem, strategy: Strategy) -> None:
    """Raise unless the strategy's sampling distribution is realizable
    with the actions it uses."""
    q = strategy.sampling_query(problem)
    verdict = ctf_realize(q, problem.model.diagram, strategy.required_actions(problem))
    if not verdict:
        raise QueryError(
            f"strategy {strategy.name!r} needs samples from {q}, which is "
            f"not realizable: {verdict.describe()}"
        )


def evaluate_strategy_exact(
    problem: MabProblem,
    strategy: Strategy,
    tables: ExactTables | None = None,
    check_realizability: bool = True,
) -> float:
    """Exact expected per-round reward of following the strategy."""
    if check_realizability:
        check_strategy_realizable(problem, strategy)
    tables = tables or ExactTables(problem)
    model = problem.model
    dec, rew, post, ctx = (
        problem.decision, problem.reward, problem.post, problem.context
    )
    total = 0.0
    for u, p in model.exogenous_support():
        if p == 0.0:
            continue
        nat = model.natural_values(u)
        z = nat[ctx] if ctx else None
        xn = nat[dec]
        s1 = strategy.d_stage[(z, xn)]
        if s1 == SKIP_D:
            key = (z, xn)
        elif s1 == READ_D:
            key = (z, xn, nat[post])
        else:
            d = eval_potential_response(model, u, response(post, {dec: s1[1]}))
            key = (z, xn, d)
        act = strategy.y_stage[key]
        arm = xn if act == ACT_NONE else act[1]
        total += p * float(
            eval_potential_response(model, u, response(rew, {dec: arm}))
        )
    return total


def tier_obs(problem: MabProblem, tables: ExactTables | None = None) -> Strategy:
    tables = tables or ExactTables(problem)
    d_stage = {k: SKIP_D for k in tables.keys()}
    y_stage = {k: ACT_NONE for k in tables.keys()}
    return Strategy("obs", d_stage, y_stage, frozenset())


def tier_int(problem: MabProblem, tables: ExactTables | None = None) -> Strategy:
    """Best fixed write per context value, marginalizing the natural
    decision (which this tier does not observe)."""
    tables = tables or ExactTables(problem)
    d_stage = {k: SKIP_D for k in tables.keys()}
    y_stage = {}
    for z in {k[0] for k in tables.keys()}:
        num = {x: 0.0 for x in problem.arms}
        den = 0.0
        for k in tables.keys():
            if k[0] != z:
                continue
            den += tables.key_prob(k)
            for x in problem.arms:
                num[x] += tables.key_prob(k) * tables.mean_given_zx(k[0], k[1], x)
        best = max(problem.arms, key=lambda x: (num[x] / den, -problem.arms.index(x)))
        for k in tables.keys():
            if k[0] == z:
                y_stage[k] = act_write(best)
    observes = frozenset({"z"}) if problem.context else frozenset()
    return Strategy("int", d_stage, y_stage, observes)


def tier_ett(problem: MabProblem, tables: ExactTables | None = None) -> Strategy:
    tables = tables or ExactTables(problem)
    d_stage = {k: SKIP_D for k in tables.keys()}
    y_stage = {}
    for k in tables.keys():
        best = max(
            problem.arms,
            key=lambda x: (tables.mean_given_zx(k[0], k[1], x), -problem.arms.index(x)),
        )
        y_stage[k] = act_fix_y(best)
    observes = {"x_nat"} | ({"z"} if problem.context else set())
    return Strategy("ett", d_stage, y_stage, frozenset(observes))


def tier_opt(problem: MabProblem, tables: ExactTables | None = None) -> Strategy:
    tables = tables or ExactTables(problem)
    d_stage = {}
    y_stage = {}
    for k in tables.keys():
        z, xn = k
        best_d = max(
            problem.arms,
            key=lambda x2: (tables.stage1_value(z, xn, x2), -problem.arms.index(x2)),
        )
        d_stage[k] = fix_d(best_d)
        for d in problem.post_domain:
            if tables.d_dist(z, xn, best_d).get(d, 0.0) == 0.0:
                y_stage[(z, xn, d)] = act_fix_y(problem.arms[0])
                continue
            best = max(
                problem.arms,
                key=lambda x: (
                    tables.mean_given_full(z, xn, best_d, d, x),
                    -problem.arms.index(x),
                ),
            )
            y_stage[(z, xn, d)] = act_fix_y(best)
    observes = {"x_nat", "d"} | ({"z"} if problem.context else set())
    return Strategy("opt", d_stage, y_stage, frozenset(observes))


MAX_BRUTE_FORCE = 10**6


def brute_force_optimal(
    problem: MabProblem, tables: ExactTables | None = None
) -> tuple[Strategy, float]:
    """Exhaustive maximum over the two-map normal form: every mapping
    (z, x') -> fixed D-input crossed with every mapping (z, x', d) ->
    reward-input. Certifies the tier-opt value; ties break toward the
    lexicographically first mapping."""
    tables = tables or ExactTables(problem)
    keys = tables.keys()
    arms = problem.arms
    d_dom = problem.post_domain
    n_sigma = len(arms) ** len(keys)
    n_tau = len(arms) ** (len(keys) * len(d_dom))
    if n_sigma * n_tau > MAX_BRUTE_FORCE:
        raise EstimationError(
            f"normal-form enumeration would visit {n_sigma * n_tau} strategies; "
            f"cap is {MAX_BRUTE_FORCE}"
        )
    best: tuple[Strategy, float] | None = None
    for sigma in itertools.product(arms, repeat=len(keys)):
        d_stage = {k: fix_d(x2) for k, x2 in zip(keys, sigma)}
        tau_cells = [(k, d) for k in keys for d in d_dom]
        for tau in itertools.product(arms, repeat=len(tau_cells)):
            y_stage = {
                (k[0], k[1], d): act_fix_y(x) for (k, d), x in zip(tau_cells, tau)
            }
            strat = Strategy("normal-form", d_stage, y_stage,
                             frozenset({"x_nat", "d"} | ({"z"} if problem.context else set())))
            value = evaluate_strategy_exact(
                problem, strat, tables, check_realizability=False
            )
            if best is None or value > best[1] + VALUE_TOL:
                best = (strat, value)
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Online algorithms
# ---------------------------------------------------------------------------

class ThompsonSolver:
    """Beta-Bernoulli posterior per arm key. Hot-started keys are pinned:
    they always score their exact observational mean and ignore updates."""

    def __init__(self):
        self.alpha: dict = {}
        self.beta: dict = {}
        self.pinned: dict = {}

    def ensure(self, key) -> None:
        if key not in self.alpha and key not in self.pinned:
            self.alpha[key] = 1.0
            self.beta[key] = 1.0

    def hot_start(self, key, mean: float) -> None:
        self.pinned[key] = float(mean)
        self.alpha.pop(key, None)
        self.beta.pop(key, None)

    def draw(self, key, rng: np.random.Generator) -> float:
        if key in self.pinned:
            return self.pinned[key]
        self.ensure(key)
        return float(rng.beta(self.alpha[key], self.beta[key]))

    def update(self, key, reward: float) -> None:
        if key in self.pinned:
            return
        self.ensure(key)
        self.alpha[key] += reward
        self.beta[key] += 1.0 - reward

    def pulls(self, key) -> int:
        if key in self.pinned:
            return 0
        return int(self.alpha.get(key, 1.0) + self.beta.get(key, 1.0) - 2.0)


@dataclass
class RunMetrics:
    """Per-iteration traces stacked over epochs, plus 95% bands."""

    algo: str
    horizon: int
    epochs: int
    seed: int
    cumulative_regret: np.ndarray  # (epochs, T)
    oap: np.ndarray                # (epochs, T)
    reward: np.ndarray             # (epochs, T) expected reward of the played arm

    @staticmethod
    def _band(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mean = arr.mean(axis=0)
        if arr.shape[0] > 1:
            half = 1.96 * arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])
        else:
            half = np.zeros_like(mean)
        return mean, mean - half, mean + half

    def regret_band(self):
        return self._band(self.cumulative_regret)

    def oap_band(self):
        return self._band(self.oap)

    def terminal_mean_reward(self, window: int = 500) -> float:
        return float(self.reward[:, -window:].mean())

    def terminal_oap(self, window: int = 500) -> float:
        return float(self.oap[:, -window:].mean())

    def final_regret(self) -> tuple[float, float, float]:
        mean, lo, hi = self.regret_band()
        return float(mean[-1]), float(lo[-1]), float(hi[-1])

    def summary(self, window: int = 500) -> dict:
        fr = self.final_regret()
        return {
            "algo": self.algo,
            "horizon": self.horizon,
            "epochs": self.epochs,
            "seed": self.seed,
            "terminal_mean_reward": self.terminal_mean_reward(window),
            "terminal_oap": self.terminal_oap(window),
            "final_cumulative_regret": fr[0],
            "final_cr_ci95": [fr[1], fr[2]],
            "terminal_window": window,
        }


@dataclass
class _Round:
    """One round's bookkeeping handed to the metrics recorder."""

    z: Value
    x_nat: Value
    d_input: Value | None  # value fixed as input to D (None: D untouched)
    d_read: bool
    d: Value | None
    arm: Value


class _Recorder:
    def __init__(self, tables: ExactTables, horizon: int):
        self.tables = tables
        self.regret = np.zeros(horizon)
        self.oap = np.zeros(horizon)
        self.reward = np.zeros(horizon)

    def record(self, t: int, core: tuple, r: _Round) -> None:
        tables = self.tables
        mean = tables.reward_mean(r.arm, core)
        self.regret[t] = tables.oracle_value(core) - mean
        self.reward[t] = mean
        s1 = tables.stage1_value(r.z, r.x_nat, r.d_input)
        stage1_ok = s1 >= tables.stage1_optimal_value(r.z, r.x_nat) - VALUE_TOL
        if r.d_input is not None and r.d_read:
            best = max(
                tables.mean_given_full(r.z, r.x_nat, r.d_input, r.d, x)
                for x in tables.problem.arms
            )
            played = tables.mean_given_full(r.z, r.x_nat, r.d_input, r.d, r.arm)
        else:
            best = max(
                tables.mean_given_zx(r.z, r.x_nat, x) for x in tables.problem.arms
            )
            played = tables.mean_given_zx(r.z, r.x_nat, r.arm)
        stage2_ok = played >= best - VALUE_TOL
        self.oap[t] = 1.0 if (stage1_ok and stage2_ok) else 0.0


def _constant_devices(problem: MabProblem) -> dict[Value, RandomDevice]:
    dom = problem.model.diagram.domains[problem.decision]
    return {x: RandomDevice.constant(dom, x) for x in dom}


def _epoch_ts_opt(
    problem: MabProblem,
    tables: ExactTables,
    horizon: int,
    rng: np.random.Generator,
    seed: np.random.SeedSequence,
    solver_factory: Callable[[], ThompsonSolver],
) -> _Recorder:
    """Two-stage sampler: D-arms keyed (z, x', x''), reward arms keyed
    (z, x', x'', d, x); the consistency cell x = x' = x'' scores its
    exact observational mean and is never updated."""
    dec, rew, post, ctx = (
        problem.decision, problem.reward, problem.post, problem.context
    )
    arms = problem.arms
    actions = ActionSet(
        [select(), *(read_action(v) for v in problem.model.diagram.variables),
         ctf_rand_action(dec, [rew]), ctf_rand_action(dec, [post])],
        problem.model.diagram,
    )
    experiment = Experiment(problem.model, actions, seed)
    devices = _constant_devices(problem)
    solver = solver_factory()
    rec = _Recorder(tables, horizon)
    for t in range(horizon):
        unit = experiment.new_unit()
        z = unit.read(ctx) if ctx else None
        xn = unit.read(dec)
        scores = [solver.draw(("D", z, xn, x2), rng) for x2 in arms]
        x2 = arms[int(np.argmax(scores))]
        unit.ctf_rand(dec, [post], devices[x2])
        d = unit.read(post)
        mu = []
        for x in arms:
            if x == xn == x2:
                mu.append(tables.obs_mean_given_xd(x2, d))
            else:
                mu.append(solver.draw(("Y", z, xn, x2, d, x), rng))
        arm = arms[int(np.argmax(mu))]
        unit.ctf_rand(dec, [rew], devices[arm])
        y = float(unit.read(rew))
        solver.update(("D", z, xn, x2), y)
        if not (arm == xn == x2):
            solver.update(("Y", z, xn, x2, d, arm), y)
        core = tables.core_of(unit.peek_exogenous())
        rec.record(t, core, _Round(z, xn, x2, True, d, arm))
    return rec


def _epoch_ts_ett(
    problem: MabProblem,
    tables: ExactTables,
    horizon: int,
    rng: np.random.Generator,
    seed: np.random.SeedSequence,
) -> _Recorder:
    dec, rew, ctx = problem.decision, problem.reward, problem.context
    arms = problem.arms
    actions = ActionSet(
        [select(), *(read_action(v) for v in problem.model.diagram.variables),
         ctf_rand_action(dec, [rew])],
        problem.model.diagram,
    )
    experiment = Experiment(problem.model, actions, seed)
    devices = _constant_devices(problem)
    solver = ThompsonSolver()
    rec = _Recorder(tables, horizon)
    for t in range(horizon):
        unit = experiment.new_unit()
        z = unit.read(ctx) if ctx else None
        xn = unit.read(dec)
        mu = []
        for x in arms:
            if x == xn:
                mu.append(tables.obs_mean_given_zx(z, xn))
            else:
                mu.append(solver.draw((z, xn, x), rng))
        arm = arms[int(np.argmax(mu))]
        unit.ctf_rand(dec, [rew], devices[arm])
        y = float(unit.read(rew))
        if arm != xn:
            solver.update((z, xn, arm), y)
        core = tables.core_of(unit.peek_exogenous())
        rec.record(t, core, _Round(z, xn, None, False, None, arm))
    return rec


def _epoch_ts_standard(
    problem: MabProblem,
    tables: ExactTables,
    horizon: int,
    rng: np.random.Generator,
    seed: np.random.SeedSequence,
) -> _Recorder:
    dec, rew = problem.decision, problem.reward
    arms = problem.arms
    actions = ActionSet(
        [select(), read_action(rew), rand_action(dec)], problem.model.diagram
    )
    experiment = Experiment(problem.model, actions, seed)
    devices = _constant_devices(problem)
    solver = ThompsonSolver()
    rec = _Recorder(tables, horizon)
    for t in range(horizon):
        unit = experiment.new_unit()
        mu = [solver.draw((x,), rng) for x in arms]
        arm = arms[int(np.argmax(mu))]
        unit.rand(dec, devices[arm])
        y = float(unit.read(rew))
        solver.update((arm,), y)
        exo = unit.peek_exogenous()
        core = tables.core_of(exo)
        # the erase-and-write also fixes the post-decision input to the arm
        nat = problem.model.natural_values(
            tuple(exo[u] for u in problem.model.exogenous_vars)
        )
        z = nat[problem.context] if problem.context else None
        rec.record(t, core, _Round(z, nat[dec], arm, False, None, arm))
    return rec


def _epoch_ts_aug(
    problem: MabProblem,
    tables: ExactTables,
    horizon: int,
    rng: np.random.Generator,
    seed: np.random.SeedSequence,
) -> _Recorder:
    """Contextual sampler that sees (z, x', d) as flat context: the
    D-stage input is drawn uniformly (it means nothing to this learner)
    and no cell is hot-started."""
    dec, rew, post, ctx = (
        problem.decision, problem.reward, problem.post, problem.context
    )
    arms = problem.arms
    actions = ActionSet(
        [select(), *(read_action(v) for v in problem.model.diagram.variables),
         ctf_rand_action(dec, [rew]), ctf_rand_action(dec, [post])],
        problem.model.diagram,
    )
    experiment = Experiment(problem.model, actions, seed)
    devices = _constant_devices(problem)
    solver = ThompsonSolver()
    rec = _Recorder(tables, horizon)
    for t in range(horizon):
        unit = experiment.new_unit()
        z = unit.read(ctx) if ctx else None
        xn = unit.read(dec)
        x2 = arms[int(rng.integers(len(arms)))]
        unit.ctf_rand(dec, [post], devices[x2])
        d = unit.read(post)
        mu = [solver.draw((z, xn, d, x), rng) for x in arms]
        arm = arms[int(np.argmax(mu))]
        unit.ctf_rand(dec, [rew], devices[arm])
        y = float(unit.read(rew))
        solver.update((z, xn, d, arm), y)
        core = tables.core_of(unit.peek_exogenous())
        rec.record(t, core, _Round(z, xn, x2, True, d, arm))
    return rec


ALGORITHMS = ("ts", "ts-aug", "ts-ett", "ts-opt", "mab-opt")

_GATE_TIERS = {
    "ts": tier_int,  # write-only randomization
    "ts-aug": tier_opt,
    "ts-ett": tier_ett,
    "ts-opt": tier_opt,
    "mab-opt": tier_opt,
}


def run_epochs(
    algo: str,
    problem: MabProblem,
    horizon: int,
    epochs: int,
    seed: int,
    solver_factory: Callable[[], ThompsonSolver] | None = None,
    tables: ExactTables | None = None,
) -> RunMetrics:
    """Run one algorithm for ``epochs`` independent epochs of ``horizon``
    rounds. Epoch e uses the e-th spawn of the master seed, so results
    are reproducible and epochs could run in parallel."""
    if algo not in ALGORITHMS:
        raise EstimationError(f"unknown algorithm {algo!r}; pick from {ALGORITHMS}")
    tables = tables or ExactTables(problem)
    check_strategy_realizable(problem, _GATE_TIERS[algo](problem, tables))
    master = np.random.SeedSequence(seed)
    regret = np.zeros((max(epochs, 1), max(horizon, 0)))
    oap = np.zeros_like(regret)
    reward = np.zeros_like(regret)
    factory = solver_factory or ThompsonSolver
    for e, ss in enumerate(master.spawn(max(epochs, 1))):
        rng = np.random.Generator(np.random.PCG64(ss.spawn(1)[0]))
        if horizon == 0:
            continue
        if algo in ("ts-opt", "mab-opt"):
            rec = _epoch_ts_opt(problem, tables, horizon, rng, ss, factory)
        elif algo == "ts-ett":
            rec = _epoch_ts_ett(problem, tables, horizon, rng, ss)
        elif algo == "ts-aug":
            rec = _epoch_ts_aug(problem, tables, horizon, rng, ss)
        else:
            rec = _epoch_ts_standard(problem, tables, horizon, rng, ss)
        regret[e] = np.cumsum(rec.regret)
        oap[e] = rec.oap
        reward[e] = rec.reward
    return RunMetrics(
        algo=algo,
        horizon=horizon,
        epochs=epochs,
        seed=seed,
        cumulative_regret=regret[:epochs] if epochs else regret[:0],
        oap=oap[:epochs] if epochs else oap[:0],
        reward=reward[:epochs] if epochs else reward[:0],
    )


# Named entry points for the four samplers.

def ts_opt(problem, horizon, epochs=1, seed=0, tables=None) -> RunMetrics:
    return run_epochs("ts-opt", problem, horizon, epochs, seed, tables=tables)


def ts_ett(problem, horizon, epochs=1, seed=0, tables=None) -> RunMetrics:
    return run_epochs("ts-ett", problem, horizon, epochs, seed, tables=tables)


def ts_standard(problem, horizon, epochs=1, seed=0, tables=None) -> RunMetrics:
    return run_epochs("ts", problem, horizon, epochs, seed, tables=tables)


def ts_aug(problem, horizon, epochs=1, seed=0, tables=None) -> RunMetrics:
    return run_epochs("ts-aug", problem, horizon, epochs, seed, tables=tables)


def mab_opt(problem, solver_factory, horizon, epochs=1, seed=0, tables=None) -> RunMetrics:
    """The two-stage sampler with a pluggable per-arm solver (draw /
    update / hot_start); the Thompson solver reproduces ts_opt."""
    return run_epochs(
        "mab-opt", problem, horizon, epochs, seed, solver_factory=solver_factory,
        tables=tables,
    )


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_metric_csv(path: str | Path, metrics: RunMetrics, which: str) -> None:
    """One row per iteration: mean and 95% band of CR or OAP."""
    if which == "cr":
        mean, lo, hi = metrics.regret_band()
    elif which == "oap":
        mean, lo, hi = metrics.oap_band()
    else:
        raise EstimationError(f"unknown metric {which!r}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean", "ci95_low", "ci95_high"])
        for t in range(len(mean)):
            writer.writerow(
                [t + 1, f"{mean[t]:.10g}", f"{lo[t]:.10g}", f"{hi[t]:.10g}"]
            )
