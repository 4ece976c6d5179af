"""Command-line front end.

Every run that writes a file starts it with a provenance block: the command
line (minus ``--out``), the seed and the package version. Identical inputs
and seed give byte-identical files.

Exit codes: 0 success, 2 malformed input, 3 precondition violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import shlex
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, envsim, seqspace
from .contracts import (
    Belief,
    BeliefDecisionMaker,
    Contract,
    affine_decision_maker,
    always_accept,
    check_axioms,
    sign_flipped_decision_maker,
)
from .elicitation import CountingOracle, cross_validate, elicit_beliefs
from .errors import ParseError, RationalityError
from .mixture import distinguishing_depth, load_class, run_optimality_experiment

EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION = 0, 2, 3
PRESET_BELIEF = "0.1 0.2 0.3 0.4"


def _resolve(path: str) -> Path:
    """Use ``path`` if it exists, else a bundled data file of that name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("rationality") / "data" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise ParseError(f"file not found: {path}")


def _parse_belief(text: str) -> Belief:
    try:
        values = [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise ParseError(f"belief must be whitespace-separated numbers, got {text!r}") from None
    if not values:
        raise ParseError("belief is empty")
    return Belief.from_weights(values)


def _belief_arg(args) -> Belief:
    if getattr(args, "belief_file", None):
        path = _resolve(args.belief_file)
        return _parse_belief(path.read_text())
    return _parse_belief(args.belief or PRESET_BELIEF)


def _provenance(argv: list[str], seed: int) -> dict:
    kept, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        kept.append(tok)
    return {"command": shlex.join(["rationality", *kept]), "seed": seed, "version": __version__}


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _render(columns, rows, meta: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"metadata": meta, "columns": list(columns), "rows": rows}, indent=2) + "\n"
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_elicit(args, meta) -> int:
    belief = _belief_arg(args)
    oracle = CountingOracle(BeliefDecisionMaker(belief))
    recovered = elicit_beliefs(oracle, belief.alphabet_size, tol=args.tol)
    agreement = cross_validate(BeliefDecisionMaker(belief), recovered, args.samples, seed=args.seed)
    err = float(np.max(np.abs(recovered.probs - belief.probs)))
    print("recovered belief:", " ".join(f"{v:.8f}" for v in recovered.probs))
    print(f"max abs error: {err:.3e}  queries: {oracle.queries}  agreement: {agreement:.4f}")
    if args.out:
        rows = [{"outcome": i, "input": float(p), "recovered": float(q)}
                for i, (p, q) in enumerate(zip(belief.probs, recovered.probs))]
        meta = {**meta, "queries": oracle.queries, "agreement": agreement}
        _emit(_render(("outcome", "input", "recovered"), rows, meta, args.format), args.out)
    return EXIT_OK


def cmd_axioms(args, meta) -> int:
    belief = _belief_arg(args)
    m = belief.alphabet_size
    dms = {
        "belief": BeliefDecisionMaker(belief),
        "affine": affine_decision_maker(belief),
        "always-accept": always_accept,
        "sign-flipped": sign_flipped_decision_maker(belief),
    }
    rng = np.random.default_rng(args.seed)
    samples = [Contract(row) for row in rng.uniform(-1.0, 1.0, size=(args.samples, m))]
    violations = check_axioms(dms[args.dm], samples, seed=args.seed)
    print(f"decision maker: {args.dm}  samples: {args.samples}  violations: {len(violations)}")
    for v in violations:
        wit = "; ".join("(" + " ".join(f"{c:.4g}" for c in x.payoffs) + ")" for x in v.witness)
        print(f"  axiom {v.axiom}: {v.reason}  witness: {wit}")
    if args.out:
        rows = [{"axiom": v.axiom, "reason": v.reason,
                 "witness": ";".join(" ".join(repr(float(c)) for c in x.payoffs) for x in v.witness)}
                for v in violations]
        _emit(_render(("axiom", "reason", "witness"), rows, meta, args.format), args.out)
    return EXIT_OK


def cmd_plan(args, meta) -> int:
    env = envsim.load(_resolve(args.env))
    vstar, policy = envsim.optimal_value(env, 0, None, args.horizon)
    print(f"environment: {env.id} ({env.kind})  horizon: {args.horizon}")
    print(f"V* = {vstar!r}  tail bound beyond horizon: {env.tail_bound(args.horizon)!r}")
    rng = np.random.default_rng(args.seed)
    state, key, rows = env.initial_state, (), []
    for k in range(args.horizon):
        a = policy(key)
        o = envsim.sample_step(env, state, a, rng)
        rows.append({"step": k, "action": a, "percept": o.percept, "reward": env.reward_at(o.reward, k)})
        state, key = o.next_state, key + (a, o.percept)
    print("rollout of the optimal policy:")
    for r in rows:
        print(f"  step {r['step']}: action {r['action']} percept {r['percept']} reward {r['reward']!r}")
    if args.out:
        _emit(_render(("step", "action", "percept", "reward"), rows, {**meta, "V*": vstar}, args.format), args.out)
    return EXIT_OK


def cmd_mixture(args, meta) -> int:
    ec = load_class(_resolve(args.cls))
    curve = run_optimality_experiment(ec, args.true, args.steps, args.horizon, seed=args.seed)
    meta = {**meta, "class": ",".join(ec.ids), "true_env": args.true, "horizon": args.horizon}
    text = curve.to_json(meta) if args.format == "json" else curve.to_csv(meta)
    _emit(text, args.out)
    if args.out:
        first = curve.identified_from()
        depth = distinguishing_depth(ec) if all(e.deterministic for e in ec.environments) else None
        print(f"wrote {len(curve.records)} rows to {args.out}; W = 1 from step {first}; distinguishing depth {depth}")
        print("bound holds at every step" if all(r.bound_holds for r in curve.records) else "bound FAILED")
    return EXIT_OK


def _seqspace_demos():
    p = seqspace.SummableBelief.geometric()
    ones = seqspace.WeightedSequence.from_function(lambda k: 1.0, 1.0)
    finite = seqspace.WeightedSequence.finite([1.0, -0.5, 0.2])
    # x_0 chosen so the pairing vanishes: sum_{k>=1} 2^-(k+1) (-1)^k = -1/6
    boundary = seqspace.WeightedSequence([1.0 / 3.0], None, lambda k: (-1.0) ** k, 1.0, 1.0)
    return p, {"all-ones": ones, "finite": finite, "boundary": boundary}


def cmd_seqspace(args, meta) -> int:
    p, demos = _seqspace_demos()
    rows = []
    for name, x in demos.items():
        pair = seqspace.dual_pair(p, x)
        res = seqspace.monotone_check(p, x, args.tol)
        rows.append({"sequence": name, "value": pair.value, "error": pair.error,
                     "converged": res.converged, "J": res.J})
        print(f"{name:10s} f(x) = {pair.value:+.12f} +/- {pair.error:.1e}  converged: {res.converged}  J = {res.J}")
    if args.out:
        _emit(_render(("sequence", "value", "error", "converged", "J"), rows, meta, args.format), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="write results to this file")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="rationality", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("elicit", parents=[common], help="recover a belief from its accept/reject oracle")
    p.add_argument("--belief", help='e.g. "0.25 0.75"; default preset ' + repr(PRESET_BELIEF))
    p.add_argument("--belief-file")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--samples", type=int, default=1000, help="contracts used for the agreement rate")
    p.set_defaults(func=cmd_elicit)

    p = sub.add_parser("axioms", parents=[common], help="check the accept/reject axioms")
    p.add_argument("--dm", choices=("belief", "affine", "always-accept", "sign-flipped"), default="belief")
    p.add_argument("--belief")
    p.add_argument("--belief-file")
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(func=cmd_axioms)

    p = sub.add_parser("plan", parents=[common], help="optimal value and policy of one environment")
    p.add_argument("--env", required=True)
    p.add_argument("--horizon", type=int, default=4)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("mixture", parents=[common], help="run the mixture agent in a class")
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--true", required=True, help="id of the true environment")
    p.add_argument("--steps", type=int, default=12)
    p.add_argument("--horizon", type=int, default=4)
    p.set_defaults(func=cmd_mixture)

    p = sub.add_parser("seqspace", parents=[common], help="truncation convergence demos")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_seqspace)
    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, _provenance(argv, args.seed))
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (RationalityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


def main() -> None:
    sys.exit(run())
