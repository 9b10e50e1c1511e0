"""Closed forms and frozen reference values used across the tests.

Everything here is written independently of the package internals.
"""

import numpy as np

TWO_PI = 2.0 * np.pi

# frozen values
FS_PHI_0 = np.log(2.0)                      # log(1 + e^0)
FS_N2_MAX_VOL = np.pi**2 * np.sqrt(16.0 / 27.0)  # pi^2 sqrt(det Hess) at x = 0
KINK_INTEGRAL = 8.0                         # int_0^2pi |1 + e^{iy}| dy
FLAT_CYL_N2_VOL = 2.0 * np.pi**2


def fs_h(x):
    """Fubini-Study metric coefficient h = 1/4 phi'' for n = 1."""
    e = np.exp(2 * x)
    return e / (1 + e) ** 2


def fs_vol(x):
    return np.pi / np.cosh(x)


def flat_vol(x):
    return TWO_PI * np.exp(x)


def cosh_ricci(x):
    return -1.0 / np.cosh(2 * x) ** 2


def trapezoid_kink(N):
    """Exact N-point trapezoid sum for |1 + e^{iy}| = 2|cos(y/2)| on [0, 2pi).

    Summing 2|cos(pi k / N)| over k gives (4 pi / N) cot(pi / (2N)).
    """
    return 4.0 * np.pi / N / np.tan(np.pi / (2 * N))


def levi_n2(hess):
    """The explicit n = 2 Levi form in the basis (x, xi, y, eta)."""
    f = hess
    xx, xixi, yy, etaeta = f[0, 0], f[1, 1], f[2, 2], f[3, 3]
    xxi, yeta, xeta, yxi = f[0, 1], f[2, 3], f[0, 3], f[2, 1]
    return 0.5 * np.array([
        [xx + yy, xxi + yeta, 0.0, -xeta + yxi],
        [xxi + yeta, xixi + etaeta, xeta - yxi, 0.0],
        [0.0, xeta - yxi, xx + yy, xxi + yeta],
        [-xeta + yxi, 0.0, xxi + yeta, xixi + etaeta],
    ])


def parseval_abs2(coeffs, exponents, x):
    """Torus average of |sum c_k z^k|^2 at log-radii x: sum |c_k|^2 e^{2 k.x}."""
    coeffs = np.asarray(coeffs, dtype=complex)
    return np.exp(2 * np.asarray(x) @ np.asarray(exponents, float).T) @ np.abs(coeffs) ** 2
