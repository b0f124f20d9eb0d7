"""Command-line front end.

Exit codes: 0 success, 2 bad configuration or input, 3 solver failure,
4 enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .benchmark import INSTANCE_CLASSES, run_benchmark, summary_csv
from .choice_matrix import empirical
from .core import ChoiceModel, ModelError
from .datagen import (
    GroundTruth,
    Symmetry,
    gen_gsp_instance,
    gen_halo_instance,
    gen_offer_sets,
    sample_transactions,
)
from .enumerative_rb import DEFAULT_THRESHOLD, EnumerationCapError, loss_of_rationality
from .evaluation import crossval, l1_weighted, per_set_l1, score_against_truth
from .fixtures import CAMERA_SETS, CAMERA_SHARES, camera_ground_truth, shares_to_transactions
from .formats import (
    dumps,
    load_model,
    read_offer_sets,
    read_transactions,
    save_model,
    write_offer_sets,
    write_transactions,
)
from .master import SolverError
from .methods import METHODS, FittedMethod, MethodSpec, fit_method, training_errors

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CAP = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid command-line parameters."""


def _provenance(args: argparse.Namespace) -> dict[str, Any]:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "handler"}
    return {"version": __version__, "config": config}


def _load_data(args: argparse.Namespace):
    sets = read_offer_sets(args.offer_sets)
    tx = read_transactions(args.transactions, sets)
    n = args.n or 1 + max(max(s.items) for s in sets.values())
    return tx, n


def _spec(args: argparse.Namespace) -> MethodSpec:
    try:
        return MethodSpec(args.method, loss=args.loss, gamma=args.gamma, delta=args.delta,
                          significance=args.significance, seed=args.seed,
                          max_iterations=args.max_iterations)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_generate(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    if args.gt == "camera":
        gt: GroundTruth = camera_ground_truth()
        if args.t % len(CAMERA_SETS):
            raise ConfigError("--t must split evenly over the two camera offer sets")
        sets = list(CAMERA_SETS)
        try:
            tx = shares_to_transactions(sets, CAMERA_SHARES, args.t // len(CAMERA_SETS))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        if args.n < 3:
            raise ConfigError("--n must be at least 3")
        if args.gt == "gsp":
            if args.k < 1 or not 0 <= args.irrational_pct <= 100 or args.imax < 1:
                raise ConfigError("need --k >= 1, 0 <= --irrational-pct <= 100, --imax >= 1")
            gt = gen_gsp_instance(args.k, args.irrational_pct, args.imax, rng, n_products=args.n)
        else:
            if args.segments < 1 or not 0 <= args.interaction_pct <= 100:
                raise ConfigError("need --segments >= 1 and 0 <= --interaction-pct <= 100")
            gt = gen_halo_instance(args.segments, args.interaction_pct, Symmetry(args.symmetry), rng,
                                   n_products=args.n)
        try:
            sets = gen_offer_sets(args.n, args.m, rng)
            tx = sample_transactions(gt, sets, args.t, rng)
        except ModelError as exc:
            raise ConfigError(str(exc)) from exc
    save_model(out / "ground_truth.json", gt, gt.n_products, _provenance(args))
    ids = write_offer_sets(out / "offer_sets.csv", sets)
    write_transactions(out / "transactions.csv", tx, ids)
    print(f"seed {args.seed}: wrote {len(tx)} transactions over {len(sets)} offer sets to {out}")
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    tx, n = _load_data(args)
    spec = _spec(args)
    emp = empirical(tx, n)
    start = time.perf_counter()
    fitted = fit_method(spec, emp)
    elapsed = time.perf_counter() - start
    report = {
        **_provenance(args),
        "method": spec.name,
        "objective": fitted.objective,
        "iterations": fitted.iterations,
        **training_errors(fitted, emp),
        "details": fitted.details,
    }
    if args.timing:
        report["wall_time"] = elapsed
    save_model(args.model_out, fitted.model, n, {"method": spec.name, "objective": fitted.objective})
    if args.report_out:
        Path(args.report_out).write_text(dumps(report), encoding="utf-8")
    print(f"{spec.name}: objective {fitted.objective:.6g}, training L1 {report['train_l1']:.6g}, "
          f"{fitted.iterations} iterations")
    return EXIT_OK


def cmd_lor(args: argparse.Namespace) -> int:
    tx, n = _load_data(args)
    report = loss_of_rationality(empirical(tx, n), threshold=args.threshold, method=args.route,
                                 cap=args.cap)
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        side = "above" if report.is_irrational_flag else "not above"
        print(f"LoR {report.lor:.6g} ({side} threshold {report.threshold:g}; "
              f"{report.n_columns} columns, {report.method})")
    return EXIT_OK


def _fitted_from_file(path: Path) -> tuple[FittedMethod, int]:
    model, n = load_model(path)
    if isinstance(model, GroundTruth):
        if model.kind.value == "gsp":
            model = model.to_choice_model()
        else:
            raise ConfigError("Halo-MNL mixtures cannot be scored as fitted models")
    name = "halo-mnl" if not isinstance(model, ChoiceModel) else "gpt-i"
    return FittedMethod(MethodSpec(name), model, float("nan"), 0), n


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.crossval:
        tx, n = _load_data(args)
        spec = _spec(args)
        report = crossval(tx, spec, n_folds=args.folds, rng=np.random.default_rng(args.seed),
                          n_products=n, timed=args.timing, train_fraction=args.train_fraction)
        payload = {**_provenance(args), **report.to_dict()}
        for label, err in zip(report.labels, report.errors):
            print(f"{label},{err:.6f}")
        print(f"mean,{report.mean:.6f}\nmedian,{report.median:.6f}\nmax,{report.max:.6f}")
    else:
        if not args.model:
            raise ConfigError("evaluate needs --model unless --crossval is given")
        fitted, n = _fitted_from_file(args.model)
        if args.ground_truth:
            gt, _ = load_model(args.ground_truth)
            if not isinstance(gt, GroundTruth):
                raise ConfigError(f"{args.ground_truth} is not a ground-truth file")
            train_sets = list(read_offer_sets(args.offer_sets).values()) if args.offer_sets else []
            err, n_sets = score_against_truth(fitted, gt, train_sets)
            payload = {**_provenance(args), "l1_random": err, "n_test_sets": n_sets}
            print(f"l1_random,{err:.6f} over {n_sets} held-out offer sets")
        else:
            tx, n_data = _load_data(args)
            emp = empirical(tx, max(n, n_data))
            x = fitted.predict(emp.offer_sets, emp.n_products)
            per_set = per_set_l1(x, emp.freq, emp.offer_sets)
            err = l1_weighted(x, emp.freq, emp.offer_sets, emp.counts, emp.total)
            payload = {
                **_provenance(args),
                "l1_weighted": err,
                "per_set": [{"offer_set": list(s.items), "transactions": int(c), "l1": float(e)}
                            for s, c, e in zip(emp.offer_sets, emp.counts, per_set)],
            }
            print(f"l1_weighted,{err:.6f} over {emp.total} transactions")
    if args.out:
        Path(args.out).write_text(dumps(payload), encoding="utf-8")
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    classes = args.classes.split(",")
    methods = args.methods.split(",")
    for c in classes:
        if c not in INSTANCE_CLASSES:
            raise ConfigError(f"unknown instance class {c!r}")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
    rows = run_benchmark(classes, methods, args.instances, seed=args.seed, n_products=args.n,
                         n_sets=args.m, n_transactions=args.t,
                         progress=(lambda r: print(f"{r.instance_class}[{r.index}] {r.method}: "
                                                   f"{r.test_l1:.4f}", file=sys.stderr))
                         if args.verbose else None)
    text = summary_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def _add_data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--transactions", type=Path, required=required, help="CSV offer_set_id,chosen")
    p.add_argument("--offer-sets", type=Path, required=required, help="CSV offer_set_id,items")
    p.add_argument("--n", type=int, default=None, help="catalog size (default: largest id + 1)")


def _add_method_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="gpt-ic")
    p.add_argument("--loss", choices=("kl", "l1"), default="kl")
    p.add_argument("--gamma", type=int, default=10, help="nodes sampled per iteration")
    p.add_argument("--delta", type=int, default=20, help="columns entering per iteration")
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timing", action="store_true", help="record wall time (breaks byte-reproducibility)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gspchoice", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic instance")
    p.add_argument("--gt", choices=("gsp", "halo", "camera"), required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--t", type=int, default=3000)
    p.add_argument("--k", type=int, default=10, help="GSP customer types")
    p.add_argument("--irrational-pct", type=float, default=0.0)
    p.add_argument("--imax", type=int, default=1)
    p.add_argument("--segments", type=int, default=1, help="Halo-MNL segments")
    p.add_argument("--interaction-pct", type=float, default=0.0)
    p.add_argument("--symmetry", choices=[s.value for s in Symmetry], default="symmetric")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("estimate", help="fit a choice model")
    _add_data_args(p)
    _add_method_args(p)
    p.add_argument("--model-out", type=Path, required=True)
    p.add_argument("--report-out", type=Path)
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("lor", help="loss of rationality of a dataset")
    _add_data_args(p)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--route", choices=("auto", "enumerate", "pricing"), default="auto")
    p.add_argument("--cap", type=int, default=None, help="maximum rankings to enumerate")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_lor)

    p = sub.add_parser("evaluate", help="score a model or cross-validate a method")
    _add_data_args(p, required=False)
    _add_method_args(p)
    p.add_argument("--model", type=Path)
    p.add_argument("--ground-truth", type=Path)
    p.add_argument("--crossval", action="store_true")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--train-fraction", type=float, default=1.0,
                   help="share of each training fold's transactions to keep")
    p.add_argument("--out", type=Path)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("benchmark", help="methods x instance classes summary CSV")
    p.add_argument("--classes", default="mnl,mmnl,halo1")
    p.add_argument("--methods", default="gpt-r,gpt-i,gpt-ic,halo-mnl")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--t", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(handler=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.handler(args)
    except EnumerationCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
