"""Linear dispersion check: measured standing-wave period against 2 pi / sqrt(g k tanh(k depth))."""
import argparse
from pathlib import Path

from freesurf import lab
from freesurf.config import load_config

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--config", default="configs/dispersion.cfg")
args = ap.parse_args()

cfg = load_config(args.config)
r = lab.run_dispersion(cfg)
out = Path(cfg.out)
lab.write_csv(out / "mode_amplitude.csv", ("t", "amplitude"),
              [{"t": t, "amplitude": a} for t, a in zip(r.times, r.amplitude)])
print("zero crossings:", " ".join(f"{c:.4f}" for c in r.crossings))
print(f"period {r.period:.6f}  linear theory {r.predicted:.6f}  rel err {r.rel_error:.2e}")
