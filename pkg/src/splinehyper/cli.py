"""Command-line entry point: calibrate, ensemble, synth, predict, check.

Exit status is 0 on success, 1 for invalid input (files, config, arguments)
and 2 for numerical failures, including data outside fixed spline domains.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .calibration import alternate_optimize, seed_ensemble
from .constitutive import assemble_model, piola_stress
from .errors import ConfigError, DatasetError, DomainError, NumericalError
from .io import (Config, config_dict, dumps, load_config, load_dataset, load_model,
                 save_dataset, save_predictions, write_calibration_outputs)
from .kinematics import DeformationProgram, default_programs, invariant_ranges

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class UsageError(ValueError):
    pass


def _ranges(cfg: Config, dataset):
    ranges = invariant_ranges(dataset.programs)
    for arg, (lo, hi) in cfg.domain.items():
        dlo, dhi = ranges[arg]
        if dlo < lo or dhi > hi:
            raise DomainError(
                f"data span {arg} in [{dlo:.6g}, {dhi:.6g}], outside the configured "
                f"domain [{lo:.6g}, {hi:.6g}]")
        ranges[arg] = (lo, hi)
    return ranges


def _setup(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    dataset = load_dataset(args.data, cfg.lambda_pre)
    model = assemble_model(cfg.ansatz(), _ranges(cfg, dataset), cfg.positive_bounds)
    return cfg, dataset, model


def cmd_calibrate(args) -> int:
    cfg, dataset, model = _setup(args)
    result = alternate_optimize(model, dataset, cfg.loss_spec(), cfg.options())
    out = Path(args.out or cfg.output_dir)
    write_calibration_outputs(result, dataset, out, cfg)
    r2 = " ".join(f"{m}={v:.6f}" for m, v in result.r2_per_mode.items())
    print(f"{result.status} after {result.n_iterations} sweeps; sqrt(L)={result.sqrt_loss:.6g}; R2 {r2}")
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg, dataset, model = _setup(args)
    n = args.seeds if args.seeds is not None else cfg.n_seeds
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        report = seed_ensemble(model, dataset, cfg.loss_spec(), cfg.options(), n, map_fn=pool.map)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ensemble.json").write_text(dumps({"config": config_dict(cfg), **report.to_dict()}))
    for seed, res in zip(report.seeds, report.results):
        write_calibration_outputs(res, dataset, out / f"seed_{seed}")
    ok = sum(report.successes)
    print(f"{ok}/{n} seeds succeeded; max pairwise distance {report.max_distance:.6g}")
    return EXIT_OK


def _parse_params(text: str) -> dict:
    params = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise UsageError(f"parameter {item!r} is not of the form name=value")
        key, val = (s.strip() for s in item.split("=", 1))
        try:
            params[key] = float(val)
        except ValueError:
            raise UsageError(f"parameter {key!r} has non-numeric value {val!r}") from None
    return params


def cmd_synth(args) -> int:
    from .oracle import synth_dataset

    programs = default_programs(lambda_pre=args.lambda_pre)
    if args.program:
        programs = parse_program(args.program, args.lambda_pre)
    ds = synth_dataset(args.kind, _parse_params(args.params), programs, args.noise, args.seed,
                       traction_free=args.traction_free)
    save_dataset(ds, args.out)
    print(f"wrote {sum(ds.counts.values())} samples to {args.out}")
    return EXIT_OK


def parse_program(spec: str, lambda_pre: float = 0.8) -> list[DeformationProgram]:
    """``MODE:start:stop:count[:lambda_pre]`` items separated by ``;``.

    ``default`` expands to the standard tension, compression and shear paths.
    """
    programs = []
    for item in filter(None, (s.strip() for s in spec.split(";"))):
        if item == "default":
            programs.extend(default_programs(lambda_pre=lambda_pre))
            continue
        parts = item.split(":")
        if len(parts) not in (4, 5):
            raise UsageError(f"program item {item!r} must be MODE:start:stop:count[:lambda_pre]")
        try:
            start, stop = float(parts[1]), float(parts[2])
            count = int(parts[3])
            pre = float(parts[4]) if len(parts) == 5 else lambda_pre
        except ValueError:
            raise UsageError(f"program item {item!r} has non-numeric fields") from None
        if count < 1:
            raise UsageError(f"program item {item!r} needs a positive count")
        programs.append(DeformationProgram(parts[0], np.linspace(start, stop, count), pre))
    if not programs:
        raise UsageError("empty program specification")
    return programs


def cmd_predict(args) -> int:
    model, theta = load_model(args.model)
    curves = {}
    for prog in parse_program(args.program):
        P = piola_stress(model, theta, prog.states())
        curves[prog.mode] = {"control": np.array(prog.controls), "P11": P[:, 0, 0],
                             "P22": P[:, 1, 1], "P12": P[:, 0, 1]}
    save_predictions(curves, args.out)
    print(f"wrote predictions for {', '.join(curves)} to {args.out}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .selfcheck import run_checks

    results = run_checks()
    width = max(len(name) for name, _, _ in results)
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(not p for _, p, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splinehyper", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="fit one model to a dataset")
    c.add_argument("--data", required=True)
    c.add_argument("--config")
    c.add_argument("--out")
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("ensemble", help="fit from several random initial guesses")
    e.add_argument("--data", required=True)
    e.add_argument("--config")
    e.add_argument("--out")
    e.add_argument("--seeds", type=int)
    e.add_argument("--seed", type=int, help="first seed")
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("synth", help="write a synthetic dataset from a closed-form material")
    s.add_argument("--kind", required=True)
    s.add_argument("--params", default="")
    s.add_argument("--out", required=True)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--program")
    s.add_argument("--lambda-pre", type=float, default=0.8)
    s.add_argument("--traction-free", action="store_true",
                   help="add the volumetric correction that removes lateral stress")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("predict", help="evaluate a fitted model along programs")
    r.add_argument("--model", required=True)
    r.add_argument("--program", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    k = sub.add_parser("check", help="run the built-in invariant and oracle checks")
    k.set_defaults(func=cmd_check)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except (DomainError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, ConfigError, UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run_cli())
