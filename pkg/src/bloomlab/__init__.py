"""Dyadic bi-parameter model operators, weights and commutator experiments on finite grids."""

__version__ = "0.1.0"
