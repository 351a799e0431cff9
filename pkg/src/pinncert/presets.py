"""Manufactured-solution presets with load-time residual self-tests.

Every preset carries an exact solution whose closed form is differentiated
automatically, and a forcing that makes the PDE hold identically.  A preset
is only handed out after its residual has been checked at 100 random
interior points (cached per process), so a broken coefficient or a typo in
a forcing term fails loudly at load rather than polluting experiments.

Elliptic presets (homogeneous Dirichlet data in all cases):

* ``poisson-square``    -Lap u = f with u* = sin(pi x1) sin(pi x2)
* ``variable-a-square`` -div(phi grad u) = f, phi = 1 + sin(pi x1) cos(pi x2)/2
* ``reaction-square``   -Lap u + u = f, same u*
* ``poisson-disk``      -Lap u = f on the unit disk, u* = sin(1 - |x|^2)

The Navier-Stokes preset ``mms-stream`` is the stream-function solution
from the nse module.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import jax.numpy as jnp
import numpy as np

from . import elliptic, nse
from .geometry import Domain, GaussLegendre, MonteCarlo, sample_interior, unit_disk, unit_square
from .norms import FieldView, field_from_function, norm

_SELF_TEST_POINTS = 100
_SELF_TEST_TOL = 1e-9


@dataclass(frozen=True)
class EllipticPreset:
    name: str
    problem: elliptic.EllipticProblem
    h2_exact: float            # H2 norm of the exact solution (the constant M)

    @property
    def domain(self) -> Domain:
        return self.problem.domain

    @property
    def exact(self) -> FieldView:
        return self.problem.exact


def _self_test_elliptic(problem: elliptic.EllipticProblem) -> None:
    pts = sample_interior(problem.domain, MonteCarlo(_SELF_TEST_POINTS, seed=42)).points
    worst = max(abs(elliptic.residual(problem.exact, problem, p)) for p in pts)
    if worst > _SELF_TEST_TOL:
        raise AssertionError(
            f"preset {problem.name!r} failed its residual self-test (max {worst:.2e})")


def _self_test_nse(problem: nse.NSEProblem) -> None:
    import jax

    rng = np.random.default_rng(42)
    pts = sample_interior(problem.domain, MonteCarlo(_SELF_TEST_POINTS, seed=42)).points
    ts = rng.uniform(0.0, problem.horizon, _SELF_TEST_POINTS)
    zs = jnp.asarray(np.column_stack([pts, ts]))
    residuals = jax.vmap(
        lambda z: nse.momentum_residual_at(problem.exact, problem.forcing, z))(zs)
    worst = float(jnp.abs(residuals).max())
    if worst > _SELF_TEST_TOL:
        raise AssertionError(
            f"preset {problem.name!r} failed its residual self-test (max {worst:.2e})")


def _sin_sin() -> FieldView:
    return field_from_function(
        lambda x: jnp.sin(jnp.pi * x[0]) * jnp.sin(jnp.pi * x[1]), 2)


@lru_cache(maxsize=None)
def elliptic_preset(name: str) -> EllipticPreset:
    square = unit_square()
    if name == "poisson-square":
        problem = elliptic.make_problem(
            elliptic.laplace_operator(),
            lambda x: 2 * jnp.pi**2 * jnp.sin(jnp.pi * x[0]) * jnp.sin(jnp.pi * x[1]),
            square, exact=_sin_sin(), name=name)
    elif name == "variable-a-square":
        phi = lambda x: 1.0 + 0.5 * jnp.sin(jnp.pi * x[0]) * jnp.cos(jnp.pi * x[1])
        grad_phi = lambda x: 0.5 * jnp.pi * jnp.array([
            jnp.cos(jnp.pi * x[0]) * jnp.cos(jnp.pi * x[1]),
            -jnp.sin(jnp.pi * x[0]) * jnp.sin(jnp.pi * x[1]),
        ])

        def source(x):
            u = jnp.sin(jnp.pi * x[0]) * jnp.sin(jnp.pi * x[1])
            return (2 * jnp.pi**2 * phi(x) * u
                    - 0.25 * jnp.pi**2 * jnp.sin(2 * jnp.pi * x[1]) * jnp.cos(2 * jnp.pi * x[0]))

        problem = elliptic.make_problem(
            elliptic.isotropic_operator(phi, grad_phi, name="variable-a"),
            source, square, exact=_sin_sin(), name=name)
    elif name == "reaction-square":
        problem = elliptic.make_problem(
            elliptic.reaction_operator(1.0),
            lambda x: (2 * jnp.pi**2 + 1.0) * jnp.sin(jnp.pi * x[0]) * jnp.sin(jnp.pi * x[1]),
            square, exact=_sin_sin(), name=name)
    elif name == "poisson-disk":
        exact = field_from_function(lambda x: jnp.sin(1.0 - x[0] ** 2 - x[1] ** 2), 2)

        def source(x):
            w = 1.0 - x[0] ** 2 - x[1] ** 2
            r2 = x[0] ** 2 + x[1] ** 2
            return 4.0 * r2 * jnp.sin(w) + 4.0 * jnp.cos(w)

        problem = elliptic.make_problem(
            elliptic.laplace_operator(), source, unit_disk(), exact=exact, name=name)
    else:
        raise KeyError(f"unknown elliptic preset {name!r}; "
                       "available: poisson-square, variable-a-square, reaction-square, poisson-disk")

    _self_test_elliptic(problem)
    h2 = norm(problem.exact, "h2", problem.domain, GaussLegendre(24))
    return EllipticPreset(name, problem, h2)


@lru_cache(maxsize=None)
def nse_preset(name: str, horizon: float = 0.25) -> nse.NSEProblem:
    if name != "mms-stream":
        raise KeyError(f"unknown NSE preset {name!r}; available: mms-stream")
    problem = nse.stream_mms(horizon=horizon)
    _self_test_nse(problem)
    return problem


ELLIPTIC_PRESETS = ("poisson-square", "variable-a-square", "reaction-square", "poisson-disk")
NSE_PRESETS = ("mms-stream",)
