"""Command-line front end.

    shvlab eigen    --config plan.ini       build and cache eigenpairs
    shvlab run      --config plan.ini       single run (sweep axis ignored)
    shvlab sweep    --config plan.ini       full parameter sweep
    shvlab verify                           acceptance suite (source checkout)
    shvlab pressure --config plan.ini       wall-closure identity study

Exit status: 0 when everything succeeded, 2 when some sweep points failed
but the bundle is usable, 1 on fatal errors (bad plan, unwritable output,
nothing succeeded).  All behaviour comes from the plan file; the only
overrides are the flags below, and no environment variables are read.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import subprocess
import sys
from pathlib import Path

from .harness import (
    ensure_spectrum,
    load_config,
    run_experiment,
    emit_outputs,
    run_pressure_study,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shvlab",
        description="spectrally damped incompressible-flow experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "eigen": "build and cache the eigenpairs a plan needs",
        "run": "execute the plan as a single run per seed",
        "sweep": "execute the plan's parameter sweep",
        "verify": "run the acceptance test suite from a source checkout",
        "pressure": "wall-closure identity refinement study",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        if name != "verify":
            p.add_argument("--config", required=True, type=Path,
                           help="plan file (INI)")
            p.add_argument("--out", type=Path, default=None,
                           help="override the plan's output directory")
            p.add_argument("--threads", type=int, default=1,
                           help="worker threads for sweep points")
            p.add_argument("--seed", type=int, default=None,
                           help="replace the repetition seed list")
    return parser


def _load_plan(args):
    plan = load_config(args.config)
    if args.out is not None:
        moved = {"out_dir": args.out}
        if plan.cache_dir == plan.out_dir / "cache":
            moved["cache_dir"] = args.out / "cache"
        plan = dataclasses.replace(plan, **moved)
    if args.seed is not None:
        plan = dataclasses.replace(plan, seeds=(args.seed,))
    return plan


def _grid_variants(plan):
    variants = {plan.cells}
    if plan.sweep_axis == "grid":
        variants |= {(int(v),) * len(plan.cells) for v in plan.sweep_values}
    return sorted(variants)


def _cmd_eigen(plan) -> int:
    for cells in _grid_variants(plan):
        _, spectrum, path = ensure_spectrum(plan, cells)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        print(f"{'x'.join(map(str, cells))}  {path}  sha256={digest}")
    return 0


def _cmd_simulate(plan, threads: int) -> int:
    bundle = run_experiment(plan, threads=threads)
    files = emit_outputs(bundle)
    n_ok = sum(p.ok for p in bundle.points)
    print(f"{n_ok}/{len(bundle.points)} points succeeded; "
          f"{len(files)} files in {plan.out_dir}")
    if bundle.slope is not None:
        print(f"fitted log-log slope: {bundle.slope:.4f}")
    for p in bundle.points:
        if not p.ok:
            print(f"failed: value={p.value} seed={p.seed}: {p.reason}")
    if n_ok == 0:
        return 1
    return 2 if bundle.partial else 0


def _acceptance_path() -> Path:
    return Path(__file__).resolve().parents[2] / "tests" / "test_acceptance.py"


def _cmd_verify() -> int:
    tests = _acceptance_path()
    if not tests.is_file():
        print("acceptance tests not found; `verify` needs a source checkout",
              file=sys.stderr)
        return 1
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", str(tests), "-v"], check=False
    )
    return 0 if proc.returncode == 0 else 1


def _cmd_pressure(plan) -> int:
    files = run_pressure_study(plan)
    for f in files:
        print(f)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "verify":
        return _cmd_verify()
    try:
        plan = _load_plan(args)
        if args.command == "eigen":
            return _cmd_eigen(plan)
        if args.command == "pressure":
            return _cmd_pressure(plan)
        if args.command == "run":
            plan = dataclasses.replace(plan, sweep_axis="none",
                                       sweep_values=())
        return _cmd_simulate(plan, args.threads)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
