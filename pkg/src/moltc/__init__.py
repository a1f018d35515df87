"""Quantum-trajectory simulation of a cavity coupled to many emitters and a vibrating molecule."""

__version__ = "0.1.0"
