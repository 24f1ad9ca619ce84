"""Rendering of moisture panel grids and convergence-rate plots from the
simulation CSV outputs.  File in, file out: no in-process coupling to the
solver package."""

__version__ = "0.1.0"

from .io import SchemaError, load_convergence, load_trajectory
from .panels import PanelSpec, render_panels
from .convergence import render_convergence

__all__ = [
    "SchemaError",
    "PanelSpec",
    "load_convergence",
    "load_trajectory",
    "render_panels",
    "render_convergence",
]
