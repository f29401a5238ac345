"""Command line entry point: ``chwet {run,converge-time,converge-space,angle-test}``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import build, experiments
from .io import load_config


def _floats(text: str):
    from .io import parse_value

    vals = [parse_value(s.strip()) for s in text.split(",") if s.strip()]
    if not vals or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}")
    return [float(v) for v in vals]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="scenario file")
    common.add_argument("--output", type=Path, help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--scheme", choices=("od1w", "od2w", "od2modw"), help="time scheme")
    common.add_argument("--no-mesh-adapt", action="store_true", help="disable mesh adaptation")
    common.add_argument("--no-time-adapt", action="store_true", help="disable time step adaptation")
    common.add_argument("--fixed-dt", type=float, help="run with this fixed time step")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="chwet", description="Cahn-Hilliard wetting simulations")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run a scenario")
    ct = sub.add_parser("converge-time", parents=[common], help="temporal self-convergence study")
    ct.add_argument("--dts", type=_floats, help="step sizes (default 2,3,4,6 x dt-ref)")
    ct.add_argument("--dt-ref", type=float, default=experiments.DT_REF)
    ct.add_argument("--schemes", default="od1w,od2w,od2modw")
    ct.add_argument("--relax-steps", type=int, default=0)
    cs = sub.add_parser("converge-space", parents=[common], help="spatial self-convergence study")
    cs.add_argument("--hs", type=_floats, default=[0.125, 0.1, 0.0625, 0.05])
    cs.add_argument("--h-ref", type=float, default=0.02)
    at = sub.add_parser("angle-test", parents=[common], help="equilibrium contact angle study")
    at.add_argument("--thetas", type=_floats, default=[math.pi / 3, math.pi / 2, 2 * math.pi / 3])
    at.add_argument("--tol", type=float, default=1e-6, help="stop when max |d phi / dt| falls below")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = build.apply_overrides(cfg, args.output, args.seed, args.scheme, args.no_mesh_adapt,
                                    args.no_time_adapt, args.fixed_dt)
        out = Path(cfg.output.directory)
        if args.command == "run":
            build.run_scenario(cfg, out)
        elif args.command == "converge-time":
            dts = args.dts or [k * args.dt_ref for k in (2, 3, 4, 6)]
            schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
            res = experiments.converge_time(cfg, dts, args.dt_ref, schemes, relax_steps=args.relax_steps,
                                            result_path=out / "converge_time.json")
            print(f"{'scheme':<10}{'dt':>12}{'L2 error':>14}")
            for name, r in res["schemes"].items():
                for dt, e in zip(res["dts"], r["errors"] or [math.nan] * len(dts)):
                    print(f"{name:<10}{dt:>12.5g}{e:>14.4e}")
                print(f"{name:<10} observed order {r['order']:.3f}")
        elif args.command == "converge-space":
            res = experiments.converge_space(cfg, args.hs, args.h_ref, result_path=out / "converge_space.json")
            print(f"{'h':>10}{'L2 error':>14}")
            for h, e in zip(res["hs"], res["errors"]):
                print(f"{h:>10.4g}{e:>14.4e}")
            print(f"observed order {res['order']:.3f}")
        elif args.command == "angle-test":
            res = experiments.angle_test(cfg, args.thetas, tol=args.tol, result_path=out / "angle_test.json")
            print(f"{'theta':>10}{'theta*':>10}{'ratio':>8}")
            for r in res["rows"]:
                print(f"{r['theta']:>10.4f}{r['theta_star']:>10.4f}{r['ratio']:>8.4f}")
    except Exception as exc:  # report every failure as a nonzero exit
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
