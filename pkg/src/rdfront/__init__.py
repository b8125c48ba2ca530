"""Curved transition fronts of bistable reaction-diffusion in periodic media."""

__version__ = "0.1.0"
