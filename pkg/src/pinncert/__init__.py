"""Neural-network PDE solvers with loss-level error certificates.

The package trains dense tanh networks to minimize PDE loss functionals
(elliptic equations and the 2D incompressible Navier-Stokes equations) and
converts the achieved loss value into a-posteriori error-rate certificates.
Supporting machinery: exact network derivatives, quadrature-based Sobolev
norms, grid Hodge decomposition, deterministic training, and experiment
drivers that verify the predicted error-vs-loss scaling empirically.

All numerics run in float64; jax is configured for it at import time.
"""

import jax

jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"

from . import certify, dnn, elliptic, geometry, harness, hodge, norms, nse, optimize, presets

__all__ = [
    "certify",
    "dnn",
    "elliptic",
    "geometry",
    "harness",
    "hodge",
    "norms",
    "nse",
    "optimize",
    "presets",
    "__version__",
]
