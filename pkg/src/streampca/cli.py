"""Command line: streampca {run,sweep,distributed,oracle} [options]."""

import argparse
import logging
import sys

from . import backend
from .errors import StreamPCAError
from .experiment import ALGORITHMS, load_config, run_distributed, run_experiment, run_sweep


def _common(p):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--k", type=int)
    p.add_argument("--no-oracle", action="store_true", help="skip the batch PCA reference loss")
    p.add_argument("--backend", choices=("auto", "python", "compiled"), help="kernel implementation")
    p.add_argument("-v", "--verbose", action="store_true")


def _schedule(p):
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--eta0", type=float)
    p.add_argument("--gamma", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="streampca", description="Streaming k-PCA experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single-machine run with a loss trace")
    _common(p)
    _schedule(p)

    p = sub.add_parser("sweep", help="final loss across eta0 scales")
    _common(p)
    _schedule(p)
    p.add_argument("--scales", type=float, nargs="+")
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("distributed", help="synchronous multi-worker run")
    _common(p)
    _schedule(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--sync-period", type=int)
    p.add_argument("--combine", choices=("average", "average_qr"))
    p.add_argument("--parallel", action="store_true", help="run workers on threads")

    p = sub.add_parser("oracle", help="batch PCA loss of the configured data")
    _common(p)
    return parser


def _config(args):
    cfg = load_config(args.config)
    over = {
        "seed": args.seed,
        "k": args.k,
        "algorithm": getattr(args, "algo", None),
        "schedule.eta0": getattr(args, "eta0", None),
        "schedule.gamma": getattr(args, "gamma", None),
        "repeats": getattr(args, "repeats", None),
        "scales": getattr(args, "scales", None),
        "distributed.workers": getattr(args, "workers", None),
        "distributed.sync_period": getattr(args, "sync_period", None),
        "distributed.combine": getattr(args, "combine", None),
    }
    if args.no_oracle:
        over["oracle"] = False
    if getattr(args, "parallel", False):
        over["distributed.parallel"] = True
    if args.command == "oracle":
        over["algorithm"] = "oracle"
    return cfg.with_overrides(**over)


def _print_summary(s):
    ex = "" if s["excess_pct"] is None else f"  excess {s['excess_pct']:.4f}%"
    print(f"{s['algorithm']}: steps {s['steps']}  loss {s['final_loss']:.6g}{ex}  ({s['wall_ms']:.0f} ms)")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.backend:
        backend.set_backend(args.backend)
    try:
        cfg = _config(args)
        if args.command in ("run", "oracle"):
            _print_summary(run_experiment(cfg, out_dir=args.out).summary)
        elif args.command == "distributed":
            _print_summary(run_distributed(cfg, out_dir=args.out).summary)
        else:
            res = run_sweep(cfg, out_dir=args.out)
            for row in res.rows:
                print(f"scale {row['scale']:g}  eta0 {row['eta0']:.4g}  loss {row['loss_mean']:.6g} +- {row['loss_std']:.2g}")
            print(f"best scale {res.best_scale:g}")
    except StreamPCAError as e:
        print(f"streampca: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
