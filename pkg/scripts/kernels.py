"""Analytic kernel suite (heat trace gain, Fokker-Planck, symmetrizer, Hardy)."""
import argparse
import sys

from freesurf import cli

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--config", default="configs/kernels.cfg")
sys.exit(cli.main(["kernels", "--config", ap.parse_args().config]))
