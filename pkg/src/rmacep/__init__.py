"""Register Match Automata for complex event processing."""

__version__ = "0.1.0"
