"""Command-line front end.

Exit codes: 0 success, 1 invalid input (or a validation failure with
``--strict``), 2 usage error, 3 singular matrix with ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import environments as envs
from .estimators import (
    naive_is_population,
    naive_is_value,
    oracle_is_value,
    proposition1_value,
    theorem1_value,
    theorem2_value,
)
from .harness import (
    ExperimentConfig,
    figure3_crossing,
    figure3_series,
    fit_affine,
    run_experiment,
)
from .io import load_json, load_model, load_policy, model_from_json, model_to_json, policy_to_json, save_json
from .models import InvalidModelError, PolicyContextError, validate, validate_policy
from .oracle import exact_value
from .probtables import EmpiricalSource, PopulationSource, SingularMatrixError, dump_matrices
from .simulate import Dataset, sample_dataset

log = logging.getLogger("confounded_ope")

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_SINGULAR = 0, 1, 2, 3
METHODS = ("theorem1", "theorem2", "prop1", "naive-is", "oracle-is")


class _UsageError(Exception):
    pass


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads for sampling")
    p.add_argument("--strict", action="store_true", default=d(False),
                   help="treat validation failures and singular matrices as errors")
    p.add_argument("--verbose", "-v", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="confounded-ope", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        sp = sub.add_parser(name, help=help)
        _global_flags(sp, suppress=True)
        return sp

    sp = add("validate", "check a model (or policy) file")
    sp.add_argument("model")
    sp.add_argument("--policy", action="append", default=[], help="policy file(s) to check against the model")

    sp = add("simulate", "sample behaviour trajectories")
    sp.add_argument("--model", required=True)
    sp.add_argument("--policy", required=True, help="behaviour policy file")
    sp.add_argument("-L", type=int, required=True, help="last step index (L + 1 steps)")
    sp.add_argument("-n", type=int, required=True)
    sp.add_argument("-o", "--output", required=True, help="dataset NDJSON path")

    sp = add("estimate", "estimate the value of an evaluation policy")
    sp.add_argument("--method", required=True, choices=METHODS)
    sp.add_argument("--data", help="dataset NDJSON from `simulate`")
    sp.add_argument("--eval-policy", required=True)
    sp.add_argument("--population", action="store_true", help="use exact behaviour matrices from --model")
    sp.add_argument("--model")
    sp.add_argument("--behavior-policy", help="needed by --population and oracle-is")
    sp.add_argument("-L", type=int, default=None)
    sp.add_argument("--ridge", type=float, default=0.0)
    sp.add_argument("--smoothing", type=float, default=0.0)
    sp.add_argument("--cond-cap", type=float, default=1e8, help="refuse unregularised solves above this condition number")
    sp.add_argument("--index-sets", default="auto", choices=("auto", "full"))
    sp.add_argument("--context", default="full", choices=("full", "last"), help="naive IS conditioning")
    sp.add_argument("--min-count", type=int, default=5)
    sp.add_argument("--clip", type=float, default=None)
    sp.add_argument("--dump-matrices", metavar="DIR")

    sp = add("experiment", "run an alpha sweep from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--output-dir", help="override the config's output_dir")

    sp = add("figure3", "oracle and naive IS values on the two-step example")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--gamma", type=float, required=True)

    sp = add("export", "write a built-in environment as model/policy JSON files")
    sp.add_argument("--env", required=True, choices=("figure3", "medical", "assumption1", "random_pomdp", "random_dpomdp"))
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--gamma", type=float, default=0.9)
    sp.add_argument("--env-seed", type=int, default=0)
    sp.add_argument("-o", "--output-dir", required=True)
    return p


# ---------------------------------------------------------------------------
# commands


def _cmd_validate(args) -> int:
    raw = load_json(args.model)
    try:
        model = model_from_json(raw)
    except (KeyError, ValueError, TypeError) as exc:
        print(f"{args.model}: unreadable model: {exc}")
        return EXIT_INVALID
    problems = list(validate(model).issues)
    for path in args.policy:
        problems += [f"{path}: {msg}" for msg in validate_policy(load_policy(path), model).issues]
    if not problems:
        print(f"{args.model}: ok ({model.kind}, {model.spaces})")
        return EXIT_OK
    for msg in problems:
        print(msg)
    print(f"{len(problems)} problem(s)")
    return EXIT_INVALID if args.strict else EXIT_OK


def _cmd_simulate(args) -> int:
    model, pi_b = load_model(args.model), load_policy(args.policy)
    data = sample_dataset(model, pi_b, args.L, args.n, args.seed, threads=args.threads)
    data.save(args.output)
    print(f"wrote {data.n} trajectories ({args.L + 1} steps) to {args.output} [fingerprint {data.fingerprint}]")
    return EXIT_OK


def _source_for(args):
    """-> (source, data, model, pi_b, L)."""
    pi_b = load_policy(args.behavior_policy) if args.behavior_policy else None
    model = load_model(args.model) if args.model else None
    if args.population:
        if model is None or pi_b is None:
            raise _UsageError("--population needs --model and --behavior-policy")
        L = args.L if args.L is not None else pi_b.horizon - 1
        return PopulationSource(model, pi_b, L), None, model, pi_b, L
    if not args.data:
        raise _UsageError("--data is required unless --population is given")
    data = Dataset.load(args.data)
    L = args.L if args.L is not None else data.horizon
    src = EmpiricalSource(data, data.spaces, data.gamma, smoothing=args.smoothing)
    return src, data, model, pi_b, L


def _cmd_estimate(args) -> int:
    pi_e = load_policy(args.eval_policy)
    src, data, model, pi_b, L = _source_for(args)
    m = args.method
    try:
        if m == "theorem1":
            out = theorem1_value(src, pi_e, L, ridge=args.ridge, cond_cap=args.cond_cap).to_json()
        elif m == "theorem2":
            out = theorem2_value(src, pi_e, L, index_sets=args.index_sets, ridge=args.ridge,
                                 cond_cap=args.cond_cap).to_json()
        elif m == "prop1":
            dist = proposition1_value(src, pi_e, L, ridge=args.ridge, cond_cap=args.cond_cap)
            out = {"method": "prop1", "t": dist.t, "distribution": {repr(k): v for k, v in dist.as_dict().items()},
                   "mean": dist.mean()}
        elif m == "naive-is":
            if data is None:
                out = naive_is_population(model, pi_b, pi_e, L, context=args.context).to_json()
            else:
                out = naive_is_value(data, pi_e, context=args.context, min_count=args.min_count,
                                     clip=args.clip).to_json()
        else:
            if data is None or pi_b is None:
                raise _UsageError("oracle-is needs --data and --behavior-policy")
            out = oracle_is_value(data, pi_e, pi_b).to_json()
    except SingularMatrixError as exc:
        if args.strict:
            print(f"singular matrix: {exc}", file=sys.stderr)
            return EXIT_SINGULAR
        log.warning("singular matrix: %s", exc)
        out = {"method": m, "v": math.nan, "error": str(exc)}
    finally:
        if args.dump_matrices:
            d = Path(args.dump_matrices)
            d.mkdir(parents=True, exist_ok=True)
            dump_matrices(list(src.requested.values()), d / "matrices.json")
    if not args.verbose:
        out.pop("diagnostics", None)
    print(json.dumps(out, indent=1, allow_nan=True))
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.threads != 1:
        cfg.threads = args.threads
    table = run_experiment(cfg, strict=args.strict)
    if cfg.output_dir:
        print(f"wrote {len(table.rows)} rows to {Path(cfg.output_dir) / 'results.csv'}")
    else:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


def _cmd_figure3(args) -> int:
    model, pi_b, pi_e = envs.figure3_pomdp(args.alpha, args.gamma)
    L = envs.FIGURE3_HORIZON
    v_b = exact_value(model, pi_b, L).v
    v_e = exact_value(model, pi_e, L).v
    v_is = naive_is_population(model, pi_b, pi_e, L).v
    print(f"alpha={args.alpha:g} gamma={args.gamma:g}")
    print(f"  v(pi_b)           = {v_b:.6f}")
    print(f"  v(pi_e)           = {v_e:.6f}")
    print(f"  naive IS (pop.)   = {v_is:.6f}")
    print("affine fits over alpha in {0.2..1.0}, gamma in {0.3, 0.6, 0.9}:")
    for name, (A, G, V) in figure3_series().items():
        ca, cg, res = fit_affine(A, G, V)
        print(f"  {name:9s} ~ {ca:+.4f} alpha {cg:+.4f} gamma   (max residual {res:.2e})")
    print(f"  v(pi_b) = IS at alpha = {figure3_crossing(args.gamma):.4f} for gamma = {args.gamma:g}")
    return EXIT_OK


def _cmd_export(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.env == "figure3":
        model, pi_b, pi_e = envs.figure3_pomdp(args.alpha, args.gamma)
    elif args.env == "medical":
        cfg = envs.MedicalConfig(seed=args.env_seed, alpha=args.alpha, gamma=args.gamma)
        model, pi_b = envs.medical_dpomdp(cfg)
        pi_e = envs.medical_eval_policy(cfg)
    elif args.env == "assumption1":
        model, pi_b, pi_e = envs.assumption1_env(args.env_seed, gamma=args.gamma)
    else:
        gen = getattr(envs, args.env)(args.env_seed, gamma=args.gamma)
        model, pi_b, pi_e = gen.model, gen.behavior_policy, gen.eval_policy
    save_json(model_to_json(model), out / "model.json")
    save_json(policy_to_json(pi_b), out / "behavior_policy.json")
    save_json(policy_to_json(pi_e), out / "eval_policy.json")
    print(f"wrote model.json, behavior_policy.json, eval_policy.json to {out}")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "experiment": _cmd_experiment,
    "figure3": _cmd_figure3,
    "export": _cmd_export,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors this way
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularMatrixError as exc:
        print(f"singular matrix: {exc}", file=sys.stderr)
        return EXIT_SINGULAR if args.strict else EXIT_INVALID
    except (InvalidModelError, PolicyContextError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
