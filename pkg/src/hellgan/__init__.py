"""Hellinger-type adversarial losses for parametric generative estimation."""

__version__ = "0.1.0"
