"""Simulation, priors and posterior sampling for jump diffusions with unit diffusion."""
__version__ = "0.1.0"
