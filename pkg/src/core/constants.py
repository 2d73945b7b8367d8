"""
Physical constants (CODATA, via scipy.constants)
"""

from scipy.constants import Boltzmann, hbar, pi

HBAR = hbar  # J s
K_B = Boltzmann  # J / K
TWO_PI = 2.0 * pi

KHZ = 1e3
MICROSECOND = 1e-6

# Matrix checks
HERMITIAN_TOL = 1e-10
NORM_TOL = 1e-10
