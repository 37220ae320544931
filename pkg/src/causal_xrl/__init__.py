"""Causal importance explanations for reinforcement-learning policies."""

from __future__ import annotations

__version__ = "0.1.0"
