"""Numerical checks of H-convergence through quotient representations M A = P."""
