"""Independent reference computations for the test suite.

Everything here is deliberately written from scratch against the model
definitions (scalar math, adaptive quadrature, brute force scans) and must
stay independent of the library's evaluation paths.
"""

import math

import numpy as np
from scipy.integrate import quad


def soft_integrand_scalar(t, r, alpha, tau_h, r1, r2, c):
    """Literal composition of the soft-return integrand at one instant."""
    x = r - c * t / 2.0
    if x <= r1:
        return 0.0
    xi = 1.0 if x >= r2 else (x - r1) / (r2 - r1)
    pulse = math.sin(math.pi * t / (2.0 * tau_h)) ** 2
    return pulse * math.exp(-2.0 * alpha * x) / (x * x) * xi


def soft_integral_quad(r, alpha, tau_h=20e-9, r1=0.9, r2=1.0, c=299_792_458.0,
                       hard_range=None):
    """Adaptive-quadrature value of the soft-return integral (1e-10 absolute).

    Integration is restricted to the integrand support with breakpoints at
    the crossover kink so the quadrature converges far beyond the nominal
    tolerance.
    """
    x_hi = r if hard_range is None else min(r, hard_range)
    t_lo = 2.0 * (r - x_hi) / c
    t_hi = min(2.0 * tau_h, 2.0 * (r - r1) / c)
    if t_hi <= t_lo:
        return 0.0
    t_kink = 2.0 * (r - r2) / c
    points = [t_kink] if t_lo < t_kink < t_hi else None
    val, _ = quad(
        soft_integrand_scalar, t_lo, t_hi, args=(r, alpha, tau_h, r1, r2, c),
        epsabs=1e-10, epsrel=1e-12, points=points, limit=400,
    )
    return val


def naive_running_max(values, k_max):
    """Left-to-right strict-maximum scan over the first k_max grid entries.

    Returns (max, argmax_range) with the same tie-breaking as a literal
    per-point loop: first occurrence wins, empty scan gives (0.0, 0.0).
    """
    best = 0.0
    best_r = 0.0
    for k in range(1, k_max + 1):
        v = values[k - 1]
        if v > best:
            best = v
            best_r = k * 0.1
    return best, best_r


def brute_force_match_mask(strongest_xyz, last_xyz, tol):
    """For each strongest point: any last point within tol (pairwise distances)."""
    mask = np.zeros(len(strongest_xyz), dtype=bool)
    for i, p in enumerate(strongest_xyz):
        d = np.sqrt(((last_xyz - p) ** 2).sum(axis=1))
        mask[i] = bool(np.any(d <= tol))
    return mask
