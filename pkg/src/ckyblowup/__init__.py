"""Self-similar blow-up profiles of a 1D Euler blow-up model.

Near-field power series, RK4 shooting for the scaling exponent, interval
sign certificates for the decay functional G(c_l), and a particle-method
simulator used as an independent check.
"""
from ._backend import BACKEND
from .interval import Interval

__version__ = "0.1.0"

__all__ = ["Interval", "BACKEND", "__version__"]
