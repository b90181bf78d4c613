"""Doeblin-Lenstra statistics of best approximations: exact continued
fractions, multidimensional best approximations, lattice observables,
fractal measures and the experiment harness around them."""

__version__ = "0.1.0"
