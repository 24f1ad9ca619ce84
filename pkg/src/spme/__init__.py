"""Desk-scale numerical laboratory for a stochastic porous-media equation
with Robin boundary conditions, gravity transport, and linear
multiplicative noise."""

__version__ = "0.1.0"
