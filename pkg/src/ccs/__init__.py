"""Coded compressed sensing for unsourced multiple access: tree code, CS engine, analysis and simulation."""

__version__ = "0.1.0"
