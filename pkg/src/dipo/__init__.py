"""Diffusion-policy reinforcement learning on plain numpy."""

__version__ = "0.1.0"
