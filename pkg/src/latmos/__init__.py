"""Latent automaton task models learned from positive demonstrations."""

__version__ = "0.1.0"
