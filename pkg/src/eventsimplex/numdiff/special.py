"""Polygamma functions on float64 arrays, restricted to positive arguments.

scipy returns nan or inf quietly at the poles; the losses only ever see
positive concentrations, so a nonpositive argument is reported as an error.
"""
import numpy as np
from scipy import special


def _positive(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise ValueError("polygamma argument must be positive")
    return x


def digamma(x) -> np.ndarray:
    """psi(x) = d/dx log Gamma(x) for x > 0."""
    return special.digamma(_positive(x))


def trigamma(x) -> np.ndarray:
    """psi'(x) for x > 0."""
    return special.polygamma(1, _positive(x))
