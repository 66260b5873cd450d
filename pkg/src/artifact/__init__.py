"""Numerical experiments on non-uniqueness and randomized well-posedness for the heat equation
with a power nonlinearity, u_t = Delta u + |u|^{p-1} u."""

__version__ = "0.1.0"
