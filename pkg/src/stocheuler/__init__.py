"""stocheuler: pseudo-spectral laboratory for the stochastic incompressible
Euler equations on the periodic torus."""

from . import analysis, checks, dynamics, ensemble, errors, noise, spectral

__version__ = "0.1.0"

__all__ = ["analysis", "checks", "dynamics", "ensemble", "errors", "noise",
           "spectral", "__version__"]
