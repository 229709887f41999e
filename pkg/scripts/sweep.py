"""Inviscid-limit sweep; writes per-member diagnostics plus sweep_report.csv and sweep_summary.csv."""
import argparse
import sys

from freesurf import lab
from freesurf.config import dump_config, load_config

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--config", default="configs/sweep.cfg")
ap.add_argument("--m", type=int, help="conormal order of the monitored norms")
args = ap.parse_args()

cfg = load_config(args.config)
if args.m is not None:
    cfg.monitor.m = args.m
    cfg.out = f"{cfg.out}_m{args.m}"
rep = lab.run_sweep(cfg, out_dir=cfg.out)
with open(f"{cfg.out}/config.txt", "w") as fh:
    fh.write(dump_config(cfg))
for r in rep.rows:
    print(" ".join(f"{k}={lab.fmt(r[k])}" for k in lab.SWEEP_COLUMNS))
for k, v in {**rep.summary, **rep.checks}.items():
    print(f"{k}: {lab.fmt(v)}")
sys.exit(0 if rep.passed else 1)
