"""Correlators of the quartic spectral curve computed by a residue recursion.

Modules
-------
ratcore      dense complex polynomials and rational functions
contour      trapezoidal Cauchy integrals on circles
curve        the spectral curve, its bootstrap and its local geometry
closedforms  planar closed forms and their identities
recursion    residue engine for genus zero and one correlators
loopeq       global loop equations as numerical checks
cli          command-line driver
"""

from .curve import CurveConfig, SpectralCurve, bootstrap
from .errors import BTRError
from .recursion import CorrelatorQuery, EvalCache, Engine, RecursionSettings, omega_eval, w_eval

__all__ = ["BTRError", "CorrelatorQuery", "CurveConfig", "Engine", "EvalCache",
           "RecursionSettings", "SpectralCurve", "bootstrap", "omega_eval", "w_eval"]
__version__ = "0.1.0"
