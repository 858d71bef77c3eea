"""Sampling and recovery of graph signals: analytical, neural and multiscale."""

__version__ = "0.1.0"
