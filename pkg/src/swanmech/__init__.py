"""Federated-learning network effects, welfare-optimal social states and the SWAN mechanism."""

__version__ = "0.1.0"
