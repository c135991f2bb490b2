"""Hashgraph atomic broadcast: consensus engine, adversarial simulator and delay attack."""

__version__ = "0.1.0"
