"""Independent numeric oracles used to freeze expected test values.

Deliberately avoids the package's own numerics: beta densities come from
math.lgamma directly, cdfs from dense trapezoid integration, and Pearson
integrals from adaptive quadrature, so a bug in the implementation cannot
hide in the oracle.
"""

import math

import numpy as np


def beta_pdf_reference(a: float, b: float, x):
    ln = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.exp(ln + (a - 1) * np.log(x) + (b - 1) * np.log1p(-x))


def beta_cdf_grid(a: float, b: float, n: int = 4_000_001):
    """Dense trapezoid cdf table for interior-safe shapes (a, b >= 1)."""
    x = np.linspace(0.0, 1.0, n)
    p = np.zeros_like(x)
    p[1:-1] = beta_pdf_reference(a, b, x[1:-1])
    if a == 1:
        p[0] = b
    if b == 1:
        p[-1] = a
    c = np.concatenate([[0.0], np.cumsum((p[1:] + p[:-1]) * 0.5) * (x[1] - x[0])])
    return x, c / c[-1]


def beta_quantile_oracle(a: float, b: float, qs):
    x, c = beta_cdf_grid(a, b)
    return np.interp(qs, c, x)


def beta_cdf_oracle(a: float, b: float, xs):
    x, c = beta_cdf_grid(a, b)
    return np.interp(xs, x, c)
