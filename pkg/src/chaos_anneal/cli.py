"""Command-line entry point.

Subcommands run one experiment each from a config file; ``replay``
re-executes a manifest, and ``report`` renders figures from a finished
run directory.  Data subcommands never import matplotlib.
"""

import argparse
import os
import sys

from .errors import ChaosAnnealError
from .runner import replay, run


def _workers_default():
    env = os.environ.get("CHAOS_ANNEAL_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError:
            return None
    return None


def _add_run_flags(p):
    p.add_argument("--config", required=True, help="INI config file")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: CHAOS_ANNEAL_WORKERS or 1)")
    p.add_argument("--dims", help="dim_a,dim_b override for qjump")
    p.add_argument("--dt", type=float, help="time step override")
    p.add_argument("--t-end", dest="t_end", type=float,
                   help="integration span override")
    p.add_argument("--n-traj", dest="n_traj", type=int,
                   help="trajectory count override")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chaos-anneal",
        description="Mean-field, stochastic Langevin, and quantum-jump "
                    "simulations of a driven Kerr optomechanical cavity.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("meanfield", "langevin", "qjump", "spectrum", "wigner"):
        _add_run_flags(sub.add_parser(name, help=f"run a {name} experiment"))

    rp = sub.add_parser("replay", help="re-execute a run manifest")
    rp.add_argument("manifest", help="path to a manifest.ini")
    rp.add_argument("--out", required=True, help="output directory")
    rp.add_argument("--seed", type=int, help="override the recorded seed")
    rp.add_argument("--workers", type=int, default=None)

    rep = sub.add_parser("report", help="render figures for a run directory")
    rep.add_argument("run_dir", help="directory containing run artifacts")
    rep.add_argument("--out", help="figure directory (default: run_dir)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            replay(args.manifest, args.out, seed=args.seed,
                   workers=args.workers if args.workers is not None
                   else _workers_default())
        elif args.command == "report":
            from .report import render_run
            written = render_run(args.run_dir, args.out or args.run_dir)
            for name in written:
                print(name)
        else:
            overrides = {
                "seed": args.seed,
                "workers": (args.workers if args.workers is not None
                            else _workers_default()),
                "out": args.out,
                "dt": args.dt,
                "t_end": args.t_end,
                "n_traj": args.n_traj,
            }
            if args.dims:
                try:
                    a, b = args.dims.split(",")
                    overrides["dims"] = (int(a), int(b))
                except ValueError:
                    print("error: --dims expects `dim_a,dim_b`", file=sys.stderr)
                    return 2
            # the subcommand names the experiment; the config must agree
            files = run(args.config, out_dir=args.out, overrides=overrides,
                        expect_experiment=args.command)
            for name in files:
                print(name)
    except ChaosAnnealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
