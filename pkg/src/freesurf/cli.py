"""``freesurf {run,sweep,kernels,norms}``.

Exit codes: 0 success, 2 configuration error, 3 numerical breakdown, 4 failed check.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import lab
from .config import ConfigError, RunConfig, dump_config, load_config
from .dynamics import read_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_BREAKDOWN, EXIT_CHECK = 0, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="freesurf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "single run at the first eps"), ("sweep", "eps sweep against eps = 0"),
                        ("kernels", "analytic kernel verification"), ("norms", "norm report")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="key = value config file")
        s.add_argument("--out", type=Path, help="output directory (overrides config 'out')")
        s.add_argument("--eps", help="comma-separated eps list (overrides physics.eps)")
        s.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "norms":
            s.add_argument("--checkpoint", type=Path, help="evaluate a checkpoint instead of the initial data")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.eps:
        try:
            cfg.physics.eps = tuple(float(x) for x in args.eps.split(",") if x.strip())
        except ValueError as exc:
            raise ConfigError(f"--eps: {exc}") from exc
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(args.out)
    return cfg.validate()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))

    if args.command == "run":
        res = lab.run_single(cfg, cfg.physics.eps[0], out_dir=out)
        print(f"eps={lab.eps_tag(res.eps)} status={res.status} steps={res.steps} "
              f"energy_residual={res.ledger.residual:.3e}")
        for f in res.flags:
            print("flag:", f)
        if not res.ok:
            print(res.error, file=sys.stderr)
            return EXIT_BREAKDOWN
        return EXIT_OK

    if args.command == "sweep":
        try:
            rep = lab.run_sweep(cfg, out_dir=out)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for r in rep.rows:
            print(" ".join(f"{k}={lab.fmt(r[k])}" for k in lab.SWEEP_COLUMNS))
        for k, v in rep.checks.items():
            print(f"{'PASS' if v else 'FAIL'} {k}")
        if rep.partial:
            print("sweep is partial: some members broke down", file=sys.stderr)
        return EXIT_OK if rep.passed else EXIT_CHECK

    if args.command == "kernels":
        results = lab.run_kernels(cfg, out_dir=out)
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.family}: {r.detail}")
        return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK

    state = None
    if args.checkpoint is not None:
        try:
            state, _ = read_checkpoint(args.checkpoint)
        except (OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    for row in lab.run_norms(cfg, state, out_dir=out):
        print(" ".join(f"{k}={lab.fmt(v)}" for k, v in row.items()))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
