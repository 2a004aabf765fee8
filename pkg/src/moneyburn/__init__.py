"""Efficient money-burning mechanisms: reduced-problem design, benchmarks, LPs and finite markets."""

__version__ = "0.1.0"
