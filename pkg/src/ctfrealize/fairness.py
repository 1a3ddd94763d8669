"""Counterfactual fairness audit on the two-model screening scenario.

One protected binary attribute X feeds two automated approvals: Y
(admission screen) and Z (aid screen), trained on historically biased
decisions and sharing a latent confounder. The latent is discretized
into canonical response types — each of Y and Z is always-approve,
approve-iff-x1, approve-iff-x0, or always-reject — so a 16-entry joint
over type pairs parameterizes every model pair compatible with the
diagram.

The audit quantity couples the two screens across regimes:

    mu_ctf = |P(Y_x1=1, Z_x1=0) - P(Y_x1=1, Z_x0=0)|

It is not identifiable from single-regime experiments, but it is
directly sampleable by fixing the attribute separately as input to each
model (two simultaneous input randomizations). The single-regime
surrogates mu_int1 (product form) and mu_int2 (joint form) can both
vanish while mu_ctf stays large; constraining models on the surrogates
therefore passes discriminatory model pairs that constraining on
mu_ctf rejects, which is the contrast the sampler below reproduces.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EstimationError, ModelError
from .graphs import CausalDiagram
from .models import Mechanism, ScmModel
from .queries import CtfQuery, query, response
from .engine import exact_l3_probability
from .realizability import (
    ActionSet,
    ctf_rand_action,
    ctf_realize,
    read_action,
    select,
)
from .simulate import draw_plan_batch, estimate

RESPONSE_TYPES = ("always-approve", "approve-iff-x1", "approve-iff-x0", "always-reject")

PROB_TOL = 1e-12
DISCRIMINATION_THRESHOLD = 0.05  # reporting cut for "significant" disparity


def _respond(rtype: str, x: int) -> int:
    if rtype == "always-approve":
        return 1
    if rtype == "approve-iff-x1":
        return x
    if rtype == "approve-iff-x0":
        return 1 - x
    return 0


@dataclass(frozen=True)
class CanonicalScm:
    """P(X=1) plus the 16-entry joint over (Y-type, Z-type) pairs, in
    RESPONSE_TYPES-major order (Y-type outer, Z-type inner)."""

    type_probs: tuple[float, ...]
    p_x1: float = 0.5

    def __post_init__(self):
        if len(self.type_probs) != 16:
            raise ModelError("canonical parameterization needs 16 type-pair entries")
        if min(self.type_probs) < -PROB_TOL:
            raise ModelError("negative type-pair probability")
        if abs(sum(self.type_probs) - 1.0) > PROB_TOL:
            raise ModelError(
                f"type-pair probabilities sum to {sum(self.type_probs)}, not 1"
            )

    def prob(self, y_type: str, z_type: str) -> float:
        i = RESPONSE_TYPES.index(y_type)
        j = RESPONSE_TYPES.index(z_type)
        return self.type_probs[4 * i + j]

    def to_model(self) -> ScmModel:
        diagram = CausalDiagram(
            ["X", "Y", "Z"],
            directed_edges=[("X", "Y"), ("X", "Z")],
            bidirected_edges=[("Y", "Z")],
        )
        exo_vars = ("U_X", "U_YZ")
        exo_domains = {"U_X": (0, 1), "U_YZ": tuple(range(16))}
        dist = {}
        for ux in (0, 1):
            p_ux = self.p_x1 if ux == 1 else 1.0 - self.p_x1
            for t in range(16):
                dist[(ux, t)] = p_ux * self.type_probs[t]
        mech = {
            "X": Mechanism.tabulate((), ("U_X",), (), ((0, 1),), lambda u: u),
            "Y": Mechanism.tabulate(
                ("X",), ("U_YZ",), ((0, 1),), (tuple(range(16)),),
                lambda x, t: _respond(RESPONSE_TYPES[t // 4], x),
            ),
            "Z": Mechanism.tabulate(
                ("X",), ("U_YZ",), ((0, 1),), (tuple(range(16)),),
                lambda x, t: _respond(RESPONSE_TYPES[t % 4], x),
            ),
        }
        return ScmModel(diagram, exo_vars, exo_domains, dist, mech)


def example2_scm() -> CanonicalScm:
    """The screening scenario's published parameterization: both
    single-regime surrogates vanish while the counterfactual disparity
    is exactly 0.10."""
    table = {
        ("always-approve", "always-approve"): 0.040,
        ("always-approve", "approve-iff-x1"): 0.175,
        ("always-approve", "approve-iff-x0"): 0.160,
        ("always-approve", "always-reject"): 0.010,
        ("approve-iff-x1", "always-approve"): 0.040,
        ("approve-iff-x1", "approve-iff-x1"): 0.055,
        ("approve-iff-x1", "approve-iff-x0"): 0.170,
        ("approve-iff-x1", "always-reject"): 0.010,
        ("approve-iff-x0", "always-approve"): 0.040,
        ("approve-iff-x0", "approve-iff-x1"): 0.140,
        ("approve-iff-x0", "approve-iff-x0"): 0.025,
        ("approve-iff-x0", "always-reject"): 0.025,
        ("always-reject", "always-approve"): 0.050,
        ("always-reject", "approve-iff-x1"): 0.010,
        ("always-reject", "approve-iff-x0"): 0.025,
        ("always-reject", "always-reject"): 0.025,
    }
    probs = tuple(
        table[(yt, zt)] for yt in RESPONSE_TYPES for zt in RESPONSE_TYPES
    )
    return CanonicalScm(probs)


@dataclass(frozen=True)
class FairnessReport:
    mu_ctf: float
    mu_int1: float
    mu_int2: float
    exact: bool = True
    n: int | None = None
    ci95: tuple[float, float] | None = None


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _admission_actions(model: ScmModel) -> ActionSet:
    return ActionSet(
        [select(), read_action("X"), read_action("Y"), read_action("Z"),
         ctf_rand_action("X", ["Y"]), ctf_rand_action("X", ["Z"])],
        model.diagram,
    )


def _coupled_query(x_for_z: int) -> CtfQuery:
    return query(
        response("Y", {"X": 1}, 1),
        response("Z", {"X": x_for_z}, 0),
    )


def assert_audit_realizable(model: ScmModel) -> None:
    """The cross-regime joint P(Y_x1, Z_x0) must be sampleable with the
    two per-model input randomizations before any sampled estimate is
    trusted."""
    verdict = ctf_realize(
        _coupled_query(0).unvalued(), model.diagram, _admission_actions(model)
    )
    if not verdict:
        raise EstimationError(
            f"audit query is not realizable: {verdict.describe()}"
        )


def mu_ctf(
    scm: CanonicalScm,
    exact: bool = True,
    n: int = 100_000,
    seed: int | None = 0,
) -> FairnessReport:
    """|P(Y_x1=1, Z_x1=0) - P(Y_x1=1, Z_x0=0)|, exactly by enumeration or
    estimated by executing the two-randomization plan n times per term."""
    model = scm.to_model()
    if exact:
        a = exact_l3_probability(model, _coupled_query(1))
        b = exact_l3_probability(model, _coupled_query(0))
        return FairnessReport(
            mu_ctf=abs(a - b),
            mu_int1=mu_int(scm, 1),
            mu_int2=mu_int(scm, 2),
            exact=True,
        )
    assert_audit_realizable(model)
    actions = _admission_actions(model)
    estimates = []
    for i, x_for_z in enumerate((1, 0)):
        q = _coupled_query(x_for_z)
        plan = ctf_realize(q.unvalued(), model.diagram, actions)
        assert plan, plan.describe()
        batch = draw_plan_batch(
            plan, model, n, seed=np.random.SeedSequence([seed or 0, i])
        )
        estimates.append(estimate(batch, (1, 0)))
    a, b = estimates
    se = np.sqrt(a * (1 - a) / n + b * (1 - b) / n)
    return FairnessReport(
        mu_ctf=abs(a - b),
        mu_int1=mu_int(scm, 1),
        mu_int2=mu_int(scm, 2),
        exact=False,
        n=n,
        ci95=(abs(a - b) - 1.96 * se, abs(a - b) + 1.96 * se),
    )


def mu_int(scm: CanonicalScm, variant: int) -> float:
    """Single-regime surrogates: variant 1 is the product form
    P(Y=1;do x1) * |P(Z=0;do x1) - P(Z=0;do x0)|; variant 2 contrasts the
    same-regime joints |P(Y=1,Z=0;do x1) - P(Y=1,Z=0;do x0)|."""
    model = scm.to_model()
    if variant == 1:
        p_y1 = exact_l3_probability(model, query(response("Y", {"X": 1}, 1)))
        z1 = exact_l3_probability(model, query(response("Z", {"X": 1}, 0)))
        z0 = exact_l3_probability(model, query(response("Z", {"X": 0}, 0)))
        return abs(p_y1 * z1 - p_y1 * z0)
    if variant == 2:
        j1 = exact_l3_probability(
            model, query(response("Y", {"X": 1}, 1), response("Z", {"X": 1}, 0))
        )
        j0 = exact_l3_probability(
            model, query(response("Y", {"X": 0}, 1), response("Z", {"X": 0}, 0))
        )
        return abs(j1 - j0)
    raise EstimationError(f"unknown surrogate variant {variant!r}")


# ---------------------------------------------------------------------------
# Vectorized forms over batches of canonical tables
# ---------------------------------------------------------------------------

def _masks() -> dict[str, np.ndarray]:
    y1_x1 = np.zeros(16)   # Y_{x1} = 1
    y1_x0 = np.zeros(16)   # Y_{x0} = 1
    z0_x1 = np.zeros(16)   # Z_{x1} = 0
    z0_x0 = np.zeros(16)   # Z_{x0} = 0
    for i, (yt, zt) in enumerate(itertools.product(RESPONSE_TYPES, RESPONSE_TYPES)):
        y1_x1[i] = _respond(yt, 1)
        y1_x0[i] = _respond(yt, 0)
        z0_x1[i] = 1 - _respond(zt, 1)
        z0_x0[i] = 1 - _respond(zt, 0)
    return {"y1_x1": y1_x1, "y1_x0": y1_x0, "z0_x1": z0_x1, "z0_x0": z0_x0}


_M = _masks()


def batch_metrics(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mu_ctf, mu_int1, mu_int2) for each row of a (n, 16) batch of
    canonical tables; closed forms of the same quantities the exact
    engine computes one table at a time."""
    probs = np.atleast_2d(probs)
    m = _M
    ctf = np.abs(probs @ (m["y1_x1"] * m["z0_x1"]) - probs @ (m["y1_x1"] * m["z0_x0"]))
    int1 = np.abs(
        (probs @ m["y1_x1"]) * (probs @ m["z0_x1"])
        - (probs @ m["y1_x1"]) * (probs @ m["z0_x0"])
    )
    int2 = np.abs(
        probs @ (m["y1_x1"] * m["z0_x1"]) - probs @ (m["y1_x0"] * m["z0_x0"])
    )
    return ctf, int1, int2


# ---------------------------------------------------------------------------
# Constrained sampling over the canonical simplex
# ---------------------------------------------------------------------------

L2_PENALTY = "l2_penalty"
L3_PENALTY = "l3_penalty"

ACCEPTANCE_FLOOR = 1e-5


def sample_constrained_scms(
    constraint: str,
    n: int,
    epsilon: float = 0.01,
    seed: int | None = 0,
    batch_size: int = 50_000,
    max_proposals: int = 50_000_000,
) -> list[tuple[CanonicalScm, FairnessReport]]:
    """Rejection-sample canonical tables from the flat Dirichlet prior on
    the 16-simplex, keeping those whose penalized score is at most
    epsilon: the two single-regime surrogates summed for the l2
    constraint, the counterfactual disparity itself for l3. Each
    accepted table is returned with its true metrics."""
    if constraint not in (L2_PENALTY, L3_PENALTY):
        raise EstimationError(
            f"unknown constraint {constraint!r}; use {L2_PENALTY} or {L3_PENALTY}"
        )
    if n < 1:
        raise EstimationError("need at least one sample")
    rng = np.random.default_rng(seed)
    kept_rows: list[np.ndarray] = []
    proposals = 0
    while sum(len(r) for r in kept_rows) < n:
        if proposals >= max_proposals:
            rate = sum(len(r) for r in kept_rows) / max(proposals, 1)
            raise EstimationError(
                f"acceptance rate {rate:.2e} below floor after {proposals} "
                f"proposals; raise epsilon (currently {epsilon})"
            )
        block = rng.dirichlet(np.ones(16), size=batch_size)
        proposals += batch_size
        ctf, int1, int2 = batch_metrics(block)
        score = ctf if constraint == L3_PENALTY else int1 + int2
        kept = block[score <= epsilon]
        if len(kept):
            kept_rows.append(kept)
        if proposals >= 20 * batch_size and not kept_rows:
            raise EstimationError(
                f"no acceptances in {proposals} proposals; raise epsilon "
                f"(currently {epsilon})"
            )
    rows = np.concatenate(kept_rows)[:n]
    ctf, int1, int2 = batch_metrics(rows)
    out = []
    for i in range(n):
        scm = CanonicalScm(tuple(float(p) for p in rows[i]))
        out.append(
            (scm, FairnessReport(float(ctf[i]), float(int1[i]), float(int2[i])))
        )
    return out


def violation_fraction(
    reports: Sequence[tuple[CanonicalScm, FairnessReport]],
    threshold: float = DISCRIMINATION_THRESHOLD,
) -> float:
    """Share of sampled tables whose true counterfactual disparity
    exceeds the reporting threshold."""
    if not reports:
        return 0.0
    return sum(1 for _, r in reports if r.mu_ctf > threshold) / len(reports)
