"""Stable elementary kernels used by the closed-form transform code."""

import math

import numpy as np


def cexpm1(z):
    """exp(z) - 1 for complex z without cancellation near 0."""
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    return np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2 + 1j * np.exp(x) * np.sin(y)


def e1c(z):
    """(exp(z) - 1)/z for complex z, with the removable singularity filled in."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-6
    zs = np.where(small, 1.0, z)
    direct = cexpm1(zs) / zs
    series = 1.0 + z / 2.0 + z * z / 6.0
    return np.where(small, series, direct)


def e2c(z):
    """(exp(z) - 1 - z)/z^2 for complex z, series below the cancellation knee."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    direct = (cexpm1(zs) - zs) / (zs * zs)
    series = 0.5 + z / 6.0 + z * z / 24.0
    return np.where(small, series, direct)


def e1(x):
    """(exp(x) - 1)/x for real x."""
    x = np.asarray(x, dtype=float)
    xs = np.where(x == 0.0, 1.0, x)
    return np.where(x == 0.0, 1.0, np.expm1(xs) / xs)


def e2(x):
    """(exp(x) - 1 - x)/x^2 for real x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    direct = (np.expm1(xs) - xs) / (xs * xs)
    series = 0.5 + x / 6.0 + x * x / 24.0
    return np.where(small, series, direct)


# Taylor coefficients of (e^{2x} - 4 e^x + 3 + 2x)/(2 x^3) around 0:
# c_k = (2^{k+3} - 4) / (2 (k+3)!).
_G3_COEF = np.array(
    [(2.0 ** (k + 3) - 4.0) / (2.0 * float(math.factorial(k + 3))) for k in range(9)]
)


def g3(x):
    """(e^{2x} - 4 e^x + 3 + 2x)/(2 x^3) for real x, stable through x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    direct = (np.expm1(2.0 * xs) - 4.0 * np.expm1(xs) + 2.0 * xs) / (2.0 * xs**3)
    series = np.polynomial.polynomial.polyval(x, _G3_COEF)
    return np.where(small, series, direct)


def continuous_log(values):
    """log of the last entry of a complex path, argument unwrapped along the path.

    The branch is anchored at ``values[0]`` whose argument is taken in
    (-pi, pi].  Consecutive entries must differ in argument by less than pi.
    """
    v = np.asarray(values, dtype=complex)
    ang = np.unwrap(np.angle(v))
    return np.log(np.abs(v[-1])) + 1j * ang[-1]


def pairwise_sum(values):
    """Deterministic pairwise summation (numpy's reduction order)."""
    return float(np.sum(np.asarray(values, dtype=float)))
