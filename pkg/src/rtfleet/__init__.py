"""Agent-based Robo-Taxi fleet sizing with user trust and willingness-to-use."""

__version__ = "0.1.0"
