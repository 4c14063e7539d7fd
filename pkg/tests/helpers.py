"""Shared test oracles, kept independent of the production integration
path: brute-force quadrature on a dense log grid straight from the
filter-function definition."""

import numpy as np

from qns import filter_function


def brute_force_chi(spectrum, sequence, n_points=2_000_000, x_lo=1e-4, x_hi=3e5):
    """Dense-grid trapezoid of S(w) F(w t) / (2 pi w^2) in the omega domain."""
    t = sequence.total_time
    w = np.geomspace(x_lo / t, x_hi / t, n_points)
    integrand = spectrum.evaluate(w) * filter_function(sequence, w) / w**2
    return float(np.trapezoid(integrand, w) / (2.0 * np.pi))


def local_maxima(values):
    v = np.asarray(values)
    return [i for i in range(1, len(v) - 1) if v[i] > v[i - 1] and v[i] >= v[i + 1]]
