"""Benchmark for 3D counterfactual image generation on synthetic brain phantoms."""

__version__ = "0.1.0"
