"""Secure AAV communication: wiretap physics, an RL environment with LLM-proposed
state/reward augmentation, off-policy agents, and analytic benchmarks."""

__version__ = "0.1.0"
