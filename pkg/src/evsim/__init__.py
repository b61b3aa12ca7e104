"""Agent-based EV charging simulator with deep Q-learning drivers."""

__version__ = "0.1.0"
