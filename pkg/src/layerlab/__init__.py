"""Desk-scale laboratory for layer potentials of 2D divergence-form elliptic
operators with t-independent coefficients on Lipschitz graph domains.

Subpackages cover the boundary geometry, coefficient algebra, fundamental
solutions, singular-integral layer potentials, weak-form boundary value
solvers, harmonic-analysis functionals, the rising-sun build-up scheme, and
the piecewise-rotation counterexample operator.
"""

__version__ = "0.1.0"
