"""Command-line entry point.

Subcommands::

    realize     decide a query against a graph and action set
    eval        exact probability / distribution of a query on a model
    sample      execute the realization plan and write sample rows
    bandit      run one bandit algorithm, write cr.csv / oap.csv
    fairness    constrained-sampling fairness contrast
    procedures  list feasible input randomizations of an expanded diagram

Every run writes a summary.json embedding the resolved configuration
(seed always explicit) and the package version. Exit codes: 0 success
or realizable, 3 not realizable, 1 input error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import CtfRealizeError
from .graphs import CausalDiagram
from .queries import parse_query
from .engine import exact_distribution, exact_l3_probability
from .realizability import (
    Action,
    ActionSet,
    ctf_rand_action,
    ctf_realize,
    maximal_action_set,
    rand_action,
    read_action,
    select,
)
from .mediators import ctf_procedures
from . import bandits
from . import fairness
from .fixtures import (
    builtin_names,
    expanded_from_dict,
    load_fixture,
    resolve_diagram,
    resolve_model,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RUNTIME = 2
EXIT_NOT_REALIZABLE = 3

_ACTION_RE = re.compile(
    r"(?P<kind>Select|Read|Rand|CtfRand)"
    r"(?:\((?P<var>[A-Za-z0-9_.']+)"
    r"(?:->(?:\{(?P<many>[A-Za-z0-9_.',\s]+)\}|(?P<one>[A-Za-z0-9_.']+)))?\))?",
)


def _split_top_level(text: str) -> list[str]:
    parts, cur, depth = [], [], 0
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_action_set(text: str, diagram: CausalDiagram) -> ActionSet:
    """Comma-separated actions, e.g.
    ``Rand(X), CtfRand(X->{Z,W}), CtfRand(X->Z), Read(X), Select``."""
    actions: list[Action] = []
    for part in _split_top_level(text):
        m = _ACTION_RE.fullmatch(part)
        if not m:
            raise CtfRealizeError(f"cannot parse action {part!r}")
        kind = m.group("kind")
        var = m.group("var")
        if kind == "Select":
            actions.append(select())
        elif kind == "Read":
            actions.append(read_action(var))
        elif kind == "Rand":
            actions.append(rand_action(var))
        else:
            if m.group("many"):
                targets = [t.strip() for t in m.group("many").split(",")]
            elif m.group("one"):
                targets = [m.group("one")]
            else:
                raise CtfRealizeError(f"CtfRand needs targets: {part!r}")
            actions.append(ctf_rand_action(var, targets))
    if not actions:
        raise CtfRealizeError("empty action set")
    return ActionSet(actions, diagram)


def _resolve_actions(args, diagram: CausalDiagram) -> ActionSet:
    if getattr(args, "maximal", False):
        return maximal_action_set(diagram)
    if not getattr(args, "actions", None):
        raise CtfRealizeError("provide --actions or --maximal")
    acts = parse_action_set(args.actions, diagram)
    if not args.no_implicit_reads:
        acts = acts.union(
            ActionSet([select(), *(read_action(v) for v in diagram.variables)])
        )
    return acts


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("CTFREALIZE_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int.from_bytes(os.urandom(4), "little")


def _write_summary(path: Path, config: dict[str, Any], payload: dict[str, Any]) -> None:
    doc = {"version": __version__, "config": config, **payload}
    path.write_text(json.dumps(doc, indent=2, default=str) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_realize(args) -> int:
    diagram = resolve_diagram(args.graph)
    q = parse_query(args.query, diagram)
    actions = _resolve_actions(args, diagram)
    verdict = ctf_realize(q, diagram, actions)
    out = _out_dir(args)
    config = {
        "subcommand": "realize", "graph": args.graph, "query": args.query,
        "actions": [str(a) for a in actions], "maximal": bool(args.maximal),
    }
    if verdict:
        print(verdict.describe())
        plan_doc = {
            "realizable": True,
            "steps": [
                {
                    "variable": s.variable,
                    "interventions": [
                        {"action": str(a), "required": v} for a, v in s.interventions
                    ],
                    "reads": [str(q.terms[i]) for i in s.read_terms],
                }
                for s in verdict.steps
            ],
            "do_not_perform": [str(a) for a in verdict.natural_constraints],
            "notes": list(verdict.notes),
            "acceptance_probability": verdict.acceptance_probability(),
        }
        _write_summary(out / "plan.json", config, plan_doc)
        return EXIT_OK
    print(f"NOT REALIZABLE: {verdict.describe()}")
    doc = {
        "realizable": False,
        "conflict": {
            "variable": verdict.conflict.variable,
            "class": verdict.conflict.failure,
            "action": str(verdict.conflict.action) if verdict.conflict.action else None,
            "required": verdict.conflict.required,
            "existing": verdict.conflict.existing,
            "terms": [
                str(q.terms[i])
                for i in (verdict.conflict.term_index, verdict.conflict.prior_term_index)
                if i is not None and i >= 0
            ],
        },
        "criterion_witness": (
            [str(t) for t in verdict.criterion_pair] if verdict.criterion_pair else None
        ),
    }
    _write_summary(out / "plan.json", config, doc)
    return EXIT_NOT_REALIZABLE


def cmd_eval(args) -> int:
    model = resolve_model(args.model)
    q = parse_query(args.query, model.diagram)
    out = _out_dir(args)
    config = {"subcommand": "eval", "model": args.model, "query": args.query}
    if q.is_valued():
        p = exact_l3_probability(model, q)
        print(f"{q} = {p:.12g}")
        _write_summary(out / "summary.json", config, {"probability": p})
    else:
        dist = exact_distribution(model, q)
        for row, prob in zip(dist.support, dist.probabilities):
            print(f"  {row} -> {prob:.12g}")
        if args.format in ("csv", "both"):
            _write_csv(
                out / "distribution.csv",
                [str(t) for t in q.terms] + ["probability"],
                [list(r) + [f"{p:.12g}"] for r, p in zip(dist.support, dist.probabilities)],
            )
        _write_summary(
            out / "summary.json", config,
            {"distribution": {str(r): p for r, p in zip(dist.support, dist.probabilities)}},
        )
    return EXIT_OK


def cmd_sample(args) -> int:
    from .simulate import draw_plan_batch

    model = resolve_model(args.model)
    q = parse_query(args.query, model.diagram)
    actions = _resolve_actions(args, model.diagram)
    verdict = ctf_realize(q.unvalued(), model.diagram, actions)
    if not verdict:
        print(f"NOT REALIZABLE: {verdict.describe()}")
        return EXIT_NOT_REALIZABLE
    seed = _seed(args)
    batch = draw_plan_batch(verdict, model, args.n, seed=seed)
    out = _out_dir(args)
    if args.format in ("csv", "both"):
        _write_csv(
            out / "samples.csv",
            [str(t) for t in verdict.query.terms],
            batch.rows,
        )
    accepted = len(batch.rows)
    config = {
        "subcommand": "sample", "model": args.model, "query": args.query,
        "actions": [str(a) for a in actions], "n": args.n, "seed": seed,
    }
    payload: dict[str, Any] = {
        "accepted": accepted,
        "rejected_units": batch.rejected_units,
        "acceptance_rate": accepted / max(accepted + batch.rejected_units, 1),
    }
    empirical = batch.empirical()
    dist = exact_distribution(model, verdict.query)
    payload["empirical_vs_exact_tv"] = dist.total_variation(empirical)
    payload["exact"] = {str(k): v for k, v in dist.as_dict().items()}
    payload["empirical"] = {str(k): v for k, v in sorted(empirical.items(), key=repr)}
    _write_summary(out / "summary.json", config, payload)
    print(
        f"wrote {accepted} rows (rejected {batch.rejected_units} units); "
        f"TV vs exact = {payload['empirical_vs_exact_tv']:.4f}"
    )
    return EXIT_OK


def cmd_bandit(args) -> int:
    if args.problem == "example3":
        problem = bandits.example3_problem()
    else:
        from .bandits import MabProblem

        problem = MabProblem(resolve_model(args.problem))
    seed = _seed(args)
    metrics = bandits.run_epochs(args.algo, problem, args.T, args.epochs, seed)
    out = _out_dir(args)
    bandits.write_metric_csv(out / "cr.csv", metrics, "cr")
    bandits.write_metric_csv(out / "oap.csv", metrics, "oap")
    config = {
        "subcommand": "bandit", "algo": args.algo, "problem": args.problem,
        "T": args.T, "epochs": args.epochs, "seed": seed,
    }
    _write_summary(out / "summary.json", config, metrics.summary())
    s = metrics.summary()
    print(
        f"{args.algo}: terminal reward {s['terminal_mean_reward']:.4f}, "
        f"final CR {s['final_cumulative_regret']:.2f}, "
        f"terminal OAP {s['terminal_oap']:.3f}"
    )
    return EXIT_OK


def cmd_fairness(args) -> int:
    constraint = fairness.L2_PENALTY if args.constraint == "l2" else fairness.L3_PENALTY
    seed = _seed(args)
    samples = fairness.sample_constrained_scms(
        constraint, args.n, args.epsilon, seed=seed
    )
    out = _out_dir(args)
    _write_csv(
        out / "mu_ctf_histogram.csv",
        ["mu_ctf", "mu_int1", "mu_int2"],
        [
            [f"{r.mu_ctf:.10g}", f"{r.mu_int1:.10g}", f"{r.mu_int2:.10g}"]
            for _, r in samples
        ],
    )
    frac = fairness.violation_fraction(samples)
    config = {
        "subcommand": "fairness", "constraint": args.constraint, "n": args.n,
        "epsilon": args.epsilon, "seed": seed,
    }
    _write_summary(
        out / "summary.json", config,
        {
            "violation_threshold": fairness.DISCRIMINATION_THRESHOLD,
            "fraction_above_threshold": frac,
        },
    )
    print(
        f"{args.n} tables under the {args.constraint} constraint: "
        f"{100 * frac:.1f}% exceed mu_ctf > {fairness.DISCRIMINATION_THRESHOLD}"
    )
    return EXIT_OK


def cmd_procedures(args) -> int:
    expanded = expanded_from_dict(load_fixture(args.expanded))
    acts = ctf_procedures(expanded, args.variable)
    out = _out_dir(args)
    listed = [str(a) for a in acts]
    for a in listed:
        print(a)
    config = {
        "subcommand": "procedures", "expanded": args.expanded,
        "variable": args.variable,
    }
    _write_summary(out / "summary.json", config, {"actions": listed})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctfrealize",
        description=(
            "Decide whether counterfactual distributions are physically "
            "sampleable, and simulate the experiments that draw from them. "
            f"Built-in fixtures: {', '.join(builtin_names())}."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common_out(p):
        p.add_argument("--out", help="output directory (default: $CTFREALIZE_OUT or .)")
        p.add_argument("--format", choices=["json", "csv", "both"], default="both")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed; recorded in outputs (random if omitted)")

    p = sub.add_parser("realize", help="decide realizability of a query")
    p.add_argument("--graph", required=True, help="fixture path or built-in name")
    p.add_argument("--query", required=True, help="e.g. \"P(Y[X=1], X)\"")
    p.add_argument("--actions", help="e.g. \"Rand(X), CtfRand(X->{Z,W})\"")
    p.add_argument("--maximal", action="store_true",
                   help="use the per-child maximal action set")
    p.add_argument("--no-implicit-reads", action="store_true",
                   help="do not add Select/Read(V) to --actions automatically")
    common_out(p)
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("eval", help="exact probability or distribution")
    p.add_argument("--model", required=True)
    p.add_argument("--query", required=True)
    common_out(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="execute the plan and write sample rows")
    p.add_argument("--model", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--actions")
    p.add_argument("--maximal", action="store_true")
    p.add_argument("--no-implicit-reads", action="store_true")
    p.add_argument("--n", type=int, default=1000)
    common_out(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bandit", help="run a bandit algorithm")
    p.add_argument("--algo", choices=list(bandits.ALGORITHMS), required=True)
    p.add_argument("--problem", default="example3",
                   help="'example3' or a model fixture path")
    p.add_argument("--T", type=int, default=2000)
    p.add_argument("--epochs", type=int, default=200)
    common_out(p)
    p.set_defaults(func=cmd_bandit)

    p = sub.add_parser("fairness", help="constrained-sampling fairness contrast")
    p.add_argument("--constraint", choices=["l2", "l3"], required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--epsilon", type=float, default=0.01)
    common_out(p)
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("procedures", help="feasible input randomizations")
    p.add_argument("--expanded", required=True, help="expanded-diagram fixture path")
    p.add_argument("--variable", required=True)
    common_out(p)
    p.set_defaults(func=cmd_procedures)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; map to the input-error code
        return EXIT_INPUT if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CtfRealizeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
