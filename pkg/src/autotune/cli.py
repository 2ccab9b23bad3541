"""Command-line interface.

Every command prints one JSON document on stdout and writes files only
through ``--out`` / ``--save-model``. Each written file gets a sibling
``<file>.manifest.json`` holding the resolved argument vector, so
``autotune replay <manifest>`` reruns the command exactly.

Exit codes: 0 success, 1 learner failure, 2 usage, 3 data, 4 infeasible
request, 5 resource cap.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .dataset import CLASSIFICATION, REGRESSION, DataError, encode, load_csv, make_synthetic, write_csv
from .evaluation import EvalScheme, EvaluationError, IncompatibleRequest
from .learners import load_model, save_model
from .optimizers import GridTooLarge, OptConfig, grid_search
from .tuner import (
    TuneRequest,
    _objective,
    benchmark,
    cv_verify,
    default_scheme,
    space_for,
    tune,
)

EXIT_OK = 0
EXIT_FIT = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4
EXIT_RESOURCE = 5

SEED_ENV = "AUTOTUNE_SEED"

# excluded from determinism comparisons
TIMING_FIELDS = frozenset({
    "elapsed_seconds", "seconds", "started", "finished", "std_time",
    "mean_seconds", "mean_std_time", "fastest_20",
})

_TASKS = {"bin": CLASSIFICATION, "reg": REGRESSION}


class UsageError(Exception):
    pass


def strip_timing(doc):
    """Drop every :data:`TIMING_FIELDS` key, recursively."""
    if isinstance(doc, dict):
        return {k: strip_timing(v) for k, v in doc.items() if k not in TIMING_FIELDS}
    if isinstance(doc, list):
        return [strip_timing(v) for v in doc]
    return doc


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _fast_value(text: str):
    if text.lower() == "true":
        return True
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--fast expects true, a fraction or a row count, got {text!r}") from None
    if 0 < value < 1:
        return value
    if value == int(value) and value > 1:
        return int(value)
    raise UsageError(f"--fast expects true, a fraction in (0, 1) or a row count > 1, got {text!r}")


def _scheme(args, ds, seed: int) -> EvalScheme:
    try:
        if args.resub:
            return EvalScheme.resub(seed)
        if args.fast is not None:
            return EvalScheme.fast(_fast_value(args.fast), seed)
        if args.cv is not None:
            return EvalScheme.cv(args.cv, seed)
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(str(exc)) from None
    return default_scheme(ds, seed)


def _points(text: str) -> list[int]:
    try:
        points = [int(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if any(p < 1 for p in points):
        raise UsageError("lattice sizes must be positive")
    return points


def _load(args):
    return encode(load_csv(args.data, args.response, _TASKS[args.task]))


def _opt_config(args) -> OptConfig:
    try:
        return OptConfig(max_evaluations=args.max_evals)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _manifest(command: str, argv: list[str], args, seed: int, started: str) -> dict:
    options = {k: v for k, v in vars(args).items() if k not in ("handler", "command")}
    return {
        "command": command,
        "argv": argv,
        "options": options,
        "seeds": [seed],
        "version": __version__,
        "started": started,
        "finished": _now(),
    }


def _write_with_manifest(path, manifest: dict) -> None:
    _write_json(f"{path}.manifest.json", manifest)


def _argv_with_seed(argv: list[str], seed: int) -> list[str]:
    if "--seed" in argv:
        return list(argv)
    return list(argv) + ["--seed", str(seed)]


def cmd_tune(args, argv):
    started = _now()
    seed = _resolve_seed(args.seed)
    ds = _load(args)
    req = TuneRequest(args.model, args.opt, _scheme(args, ds, seed), _opt_config(args), seed)
    result = tune(ds, req, jobs=args.jobs)
    doc = {"command": "tune", "result": result.to_dict()}
    manifest = _manifest("tune", _argv_with_seed(argv, seed), args, seed, started)
    if args.save_model:
        save_model(args.save_model, result.model, ds.task, result.best_params, ds.encoding,
                   ds.class_labels)
        _write_with_manifest(args.save_model, manifest)
    if args.out:
        _write_json(args.out, doc)
        _write_with_manifest(args.out, manifest)
    doc["manifest"] = manifest
    return doc


def cmd_verify(args, argv):
    started = _now()
    seed = _resolve_seed(args.seed)
    try:
        _, model_doc = load_model(args.model_file)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read model file {args.model_file}: {exc}") from None
    task = model_doc["task"]
    ds = encode(load_csv(args.data, args.response, task))
    result = cv_verify(ds, model_doc["params"], args.k, seed, family=model_doc["family"],
                       jobs=args.jobs)
    doc = {"command": "verify", "family": model_doc["family"], "task": task,
           "params": model_doc["params"], "k": args.k, "seed": seed, "result": result.to_dict()}
    manifest = _manifest("verify", _argv_with_seed(argv, seed), args, seed, started)
    if args.out:
        _write_json(args.out, doc)
        _write_with_manifest(args.out, manifest)
    doc["manifest"] = manifest
    return doc


def cmd_grid(args, argv):
    started = _now()
    seed = _resolve_seed(args.seed)
    ds = _load(args)
    space = space_for(args.model, ds.task)
    points = _points(args.points)
    if len(points) != len(space):
        raise UsageError(f"--points needs {len(space)} sizes for {args.model} "
                         f"({', '.join(space.names)}), got {len(points)}")
    scheme = _scheme(args, ds, seed)
    scheme.check(ds)
    grid = grid_search(_objective(ds, args.model, space, scheme, args.jobs), space, points,
                       cell_cap=args.cell_cap)
    grid.to_csv(args.out)
    doc = {"command": "grid", "scheme": scheme.to_dict(), "dims": list(space.names),
           "csv": str(args.out), "summary": grid.summary(space)}
    manifest = _manifest("grid", _argv_with_seed(argv, seed), args, seed, started)
    _write_with_manifest(args.out, manifest)
    doc["manifest"] = manifest
    return doc


def cmd_benchmark(args, argv):
    started = _now()
    seed = _resolve_seed(args.seed)
    ds = _load(args)
    space = space_for(args.model, ds.task)
    points = _points(args.grid_points)
    if len(points) != len(space):
        raise UsageError(f"--grid-points needs {len(space)} sizes for {args.model}")
    search = _scheme(args, ds, seed)
    cfg = _opt_config(args)
    optimizers = [o for o in args.opt.split(",") if o]
    try:
        requests = [TuneRequest(args.model, o, search, cfg, seed) for o in optimizers]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = benchmark(ds, requests, points, reps=args.reps, verify_k=args.verify_k,
                       verify_seed=args.verify_seed, jobs=args.jobs)
    doc = {"command": "benchmark", "report": report.to_dict()}
    manifest = _manifest("benchmark", _argv_with_seed(argv, seed), args, seed, started)
    if args.out:
        report.to_csv(args.out)
        _write_with_manifest(args.out, manifest)
    doc["manifest"] = manifest
    return doc


def cmd_synth(args, argv):
    started = _now()
    seed = _resolve_seed(args.seed)
    ds = make_synthetic(args.kind, args.n, args.noise, seed)
    write_csv(ds, args.out)
    manifest = _manifest("synth", _argv_with_seed(argv, seed), args, seed, started)
    _write_with_manifest(args.out, manifest)
    return {"command": "synth", "kind": args.kind, "n": args.n, "noise": args.noise,
            "seed": seed, "out": str(args.out), "task": ds.task, "manifest": manifest}


def cmd_replay(args, argv):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        recorded = list(manifest["argv"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read manifest {args.manifest}: {exc}") from None
    if recorded and recorded[0] == "replay":
        raise UsageError("a replay manifest cannot replay itself")
    sub = build_parser().parse_args(recorded)
    return sub.handler(sub, recorded)


def _add_data(p, with_task=True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--response", required=True, help="response column name or 0-based index")
    if with_task:
        p.add_argument("--task", required=True, choices=sorted(_TASKS))


def _add_scheme(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--cv", type=int, help="k-fold cross-validation")
    g.add_argument("--fast", help="holdout: true (50%%), a training fraction, or a training row count")
    g.add_argument("--resub", action="store_true", help="score on the training rows")


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
    p.add_argument("--jobs", type=int, default=1, help="concurrent fold/cell evaluations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autotune", description="Tune SVM, GBM and AdaBoost models.")
    parser.add_argument("--version", action="version", version=f"autotune {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="search the tuning space and refit the best model")
    _add_data(p)
    p.add_argument("--model", required=True, choices=["svm", "gbm", "ada"])
    p.add_argument("--opt", default="hjn", choices=["hjn", "ga"])
    _add_scheme(p)
    p.add_argument("--max-evals", type=int, default=1000)
    p.add_argument("--save-model", help="write the fitted model as JSON")
    p.add_argument("--out", help="also write the result JSON here")
    _add_common(p)
    p.set_defaults(handler=cmd_tune)

    p = sub.add_parser("verify", help="cross-validate the parameters of a saved model")
    p.add_argument("--model-file", required=True)
    _add_data(p, with_task=False)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("grid", help="evaluate a full lattice over the tuning space")
    _add_data(p)
    p.add_argument("--model", required=True, choices=["svm", "gbm", "ada"])
    p.add_argument("--points", required=True, help="lattice size per dimension, e.g. 9,9")
    p.add_argument("--out", required=True, help="CSV of cells")
    p.add_argument("--cell-cap", type=int, default=100_000)
    _add_scheme(p)
    _add_common(p)
    p.set_defaults(handler=cmd_grid)

    p = sub.add_parser("benchmark", help="compare optimizers against the grid oracle")
    _add_data(p)
    p.add_argument("--model", required=True, choices=["svm", "gbm", "ada"])
    p.add_argument("--opt", default="hjn,ga", help="comma-separated optimizers")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--grid-points", required=True)
    p.add_argument("--verify-k", type=int, default=10)
    p.add_argument("--verify-seed", type=int, default=1)
    p.add_argument("--max-evals", type=int, default=1000)
    p.add_argument("--out", help="CSV with one row per repetition")
    _add_scheme(p)
    _add_common(p)
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--kind", required=True, choices=["two-gaussians", "friedman1"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.set_defaults(handler=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        doc = args.handler(args, argv)
    except UsageError as exc:
        print(f"autotune: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IncompatibleRequest as exc:
        print(f"autotune: infeasible request: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DataError as exc:
        print(f"autotune: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GridTooLarge as exc:
        print(f"autotune: resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except EvaluationError as exc:
        print(f"autotune: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except OSError as exc:
        print(f"autotune: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"autotune: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(doc, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
