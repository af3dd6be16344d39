"""Solver modules for convecta."""
