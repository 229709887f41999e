"""Free-surface Navier-Stokes on a fixed strip and its inviscid limit: numerics and diagnostics."""
from .grid import StripGrid
from .geometry import CutoffProfile, DiffeoFrame, SurfaceState, assemble_frame, choose_A, extend_surface
from .dynamics import FlowState, Physics, Stepper, step
from .config import RunConfig, load_config

__all__ = ["StripGrid", "CutoffProfile", "DiffeoFrame", "SurfaceState", "assemble_frame", "choose_A",
           "extend_surface", "FlowState", "Physics", "Stepper", "step", "RunConfig", "load_config"]
__version__ = "0.1.0"
