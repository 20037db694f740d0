"""Adversarial scenario generation and statistical safety validation for a
black-box collision-avoidance system."""

__version__ = "0.1.0"
