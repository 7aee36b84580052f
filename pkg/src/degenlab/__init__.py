"""Numerical lab for degenerate cross-diffusion systems and BMO-type estimates."""

__version__ = "0.1.0"
