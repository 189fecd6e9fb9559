"""Monomial-matrix symmetry actions on neural-network weight spaces, the
stable polynomial terms they preserve, and parameter-shared equivariant and
invariant polynomial layers, with property-based verification suites and a
closed-form toy fitting pipeline."""

__version__ = "0.1.0"
