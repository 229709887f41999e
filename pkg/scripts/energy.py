"""Energy identity at dt and dt/2: residuals and their refinement ratio."""
import argparse
import time

from freesurf import lab
from freesurf.config import load_config

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--config", default="configs/energy.cfg")
args = ap.parse_args()

cfg = load_config(args.config)
eps = cfg.physics.eps[0]
res = []
for dt in (cfg.physics.dt, cfg.physics.dt / 2):
    t0 = time.perf_counter()
    r = lab.run_single(cfg, eps, dt=dt, out_dir=f"{cfg.out}/dt{dt:g}")
    res.append(abs(r.ledger.residual))
    print(f"dt={dt:g} status={r.status} residual={res[-1]:.3e} "
          f"dissipated={r.ledger.dissipation_integral:.4e} ({time.perf_counter() - t0:.0f} s)")
print(f"refinement ratio {res[0] / res[1]:.3f}")
