import numpy as np
import pytest

from ctfrealize import (
    CausalDiagram,
    EstimationError,
    Mechanism,
    ModelError,
    ScmModel,
    exact_l3_probability,
    query,
    response,
    validate_scm,
)
from ctfrealize.fairness import (
    L2_PENALTY,
    L3_PENALTY,
    CanonicalScm,
    RESPONSE_TYPES,
    assert_audit_realizable,
    batch_metrics,
    example2_scm,
    mu_ctf,
    mu_int,
    sample_constrained_scms,
    violation_fraction,
)


def test_published_table_sums_to_one_and_entry_values():
    scm = example2_scm()
    assert sum(scm.type_probs) == pytest.approx(1.0, abs=1e-12)
    assert scm.prob("always-approve", "always-approve") == 0.040
    assert scm.prob("approve-iff-x1", "approve-iff-x0") == 0.170
    assert scm.prob("always-reject", "always-reject") == 0.025


def test_induced_model_is_valid_and_has_the_right_shape():
    model = example2_scm().to_model()
    assert validate_scm(model) == []
    d = model.diagram
    assert set(d.directed_edges) == {("X", "Y"), ("X", "Z")}
    assert d.bidirected_edges == frozenset({frozenset({"Y", "Z"})})


def test_exact_metric_values():
    scm = example2_scm()
    report = mu_ctf(scm, exact=True)
    assert report.mu_ctf == pytest.approx(0.10, abs=1e-12)
    assert mu_int(scm, 1) == pytest.approx(0.0, abs=1e-12)
    assert mu_int(scm, 2) == pytest.approx(0.0, abs=1e-12)


def test_zero_effect_on_aid_screen_gives_zero_disparity():
    # Z-type never reads the attribute: only always-approve / always-reject
    probs = np.zeros(16)
    for i, yt in enumerate(RESPONSE_TYPES):
        probs[4 * i + 0] = 0.15  # z always-approve
        probs[4 * i + 3] = 0.10  # z always-reject
    scm = CanonicalScm(tuple(probs))
    assert mu_ctf(scm, exact=True).mu_ctf == pytest.approx(0.0, abs=1e-12)


def test_symmetric_table_gives_zero_surrogates():
    # swapping the roles of the two attribute values maps the table to
    # itself: approve-iff-x1 <-> approve-iff-x0 with equal mass
    probs = np.zeros(16)
    pairs = [(0, 0), (1, 2), (2, 1), (3, 3), (1, 1), (2, 2)]
    mass = 1.0 / len(pairs)
    for i, j in pairs:
        probs[4 * i + j] += mass
    scm = CanonicalScm(tuple(probs))
    assert mu_int(scm, 1) == pytest.approx(0.0, abs=1e-12)
    assert mu_int(scm, 2) == pytest.approx(0.0, abs=1e-12)


def test_vectorized_metrics_match_engine():
    scm = example2_scm()
    ctf, i1, i2 = batch_metrics(np.array(scm.type_probs))
    assert ctf[0] == pytest.approx(mu_ctf(scm, exact=True).mu_ctf, abs=1e-12)
    assert i1[0] == pytest.approx(mu_int(scm, 1), abs=1e-12)
    assert i2[0] == pytest.approx(mu_int(scm, 2), abs=1e-12)
    rng = np.random.default_rng(0)
    for row in rng.dirichlet(np.ones(16), size=5):
        scm_r = CanonicalScm(tuple(float(p) for p in row))
        ctf, i1, i2 = batch_metrics(row)
        assert ctf[0] == pytest.approx(mu_ctf(scm_r, exact=True).mu_ctf, abs=1e-10)
        assert i1[0] == pytest.approx(mu_int(scm_r, 1), abs=1e-10)
        assert i2[0] == pytest.approx(mu_int(scm_r, 2), abs=1e-10)


def test_audit_query_is_realizable_with_per_model_randomizations():
    assert_audit_realizable(example2_scm().to_model())


def test_sampled_metric_concentrates():
    report = mu_ctf(example2_scm(), exact=False, n=20_000, seed=6)
    assert report.mu_ctf == pytest.approx(0.10, abs=0.02)
    assert not report.exact and report.n == 20_000
    lo, hi = report.ci95
    assert lo <= 0.10 <= hi


def test_relabeling_latent_categories_preserves_metrics():
    scm = example2_scm()
    base = scm.to_model()
    perm = np.random.default_rng(1).permutation(16)
    diagram = base.diagram
    dist = {}
    for (ux, t), p in base.exogenous_dist.items():
        dist[(ux, int(perm[t]))] = p
    inv = {int(perm[t]): t for t in range(16)}
    mech = {
        "X": base.mechanisms["X"],
        "Y": Mechanism.tabulate(
            ("X",), ("U_YZ",), ((0, 1),), (tuple(range(16)),),
            lambda x, t: base.mechanisms["Y"]((x,), (inv[t],)),
        ),
        "Z": Mechanism.tabulate(
            ("X",), ("U_YZ",), ((0, 1),), (tuple(range(16)),),
            lambda x, t: base.mechanisms["Z"]((x,), (inv[t],)),
        ),
    }
    relabeled = ScmModel(
        diagram, base.exogenous_vars, base.exogenous_domains, dist, mech
    )
    for q in (
        query(response("Y", {"X": 1}, 1), response("Z", {"X": 1}, 0)),
        query(response("Y", {"X": 1}, 1), response("Z", {"X": 0}, 0)),
    ):
        assert exact_l3_probability(relabeled, q) == pytest.approx(
            exact_l3_probability(base, q), abs=1e-12
        )


def test_canonical_table_round_trip_preserves_metrics():
    scm = example2_scm()
    model = scm.to_model()
    a = exact_l3_probability(
        model, query(response("Y", {"X": 1}, 1), response("Z", {"X": 1}, 0))
    )
    b = exact_l3_probability(
        model, query(response("Y", {"X": 1}, 1), response("Z", {"X": 0}, 0))
    )
    assert abs(a - b) == pytest.approx(mu_ctf(scm, exact=True).mu_ctf, abs=1e-12)


def test_bad_canonical_tables_rejected():
    with pytest.raises(ModelError):
        CanonicalScm(tuple([1.0 / 15] * 15))
    bad = [1.0 / 16] * 16
    bad[0] += 0.1
    with pytest.raises(ModelError):
        CanonicalScm(tuple(bad))


def test_published_table_fails_a_zero_tolerance_constraint():
    ctf, _, _ = batch_metrics(np.array(example2_scm().type_probs))
    assert ctf[0] > 0.0  # would be rejected at epsilon = 0


def test_sampler_errors():
    with pytest.raises(EstimationError, match="unknown constraint"):
        sample_constrained_scms("l7", 1)
    with pytest.raises(EstimationError, match="at least one"):
        sample_constrained_scms(L3_PENALTY, 0)
    with pytest.raises(EstimationError, match="raise epsilon"):
        sample_constrained_scms(
            L3_PENALTY, 10, epsilon=0.0, seed=0,
            batch_size=1000, max_proposals=3000,
        )


def test_constrained_samplers_contrast():
    l3 = sample_constrained_scms(L3_PENALTY, 200, 0.01, seed=7)
    l2 = sample_constrained_scms(L2_PENALTY, 200, 0.01, seed=8)
    assert len(l3) == len(l2) == 200
    for scm, report in l3[:5]:
        assert report.mu_ctf <= 0.01 + 1e-9
        assert sum(scm.type_probs) == pytest.approx(1.0, abs=1e-9)
    assert violation_fraction(l3) <= 0.05
    assert violation_fraction(l2) >= 0.25
