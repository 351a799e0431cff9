"""Elliptic problems and their loss functionals.

A problem is ``L u = f`` on a 2D domain with homogeneous Dirichlet data (the
only boundary case supported; nonzero data is rejected at construction).  The
operator acts in non-divergence form

    L u = -sum_ij a_ij d_ij u - sum_j (div a)_j d_j u + b . grad u + c u,

which requires differentiable ``a``; operators are built from coefficient
callables plus the divergence of ``a`` supplied in closed form.

Three loss functionals are provided:

* ``loss_l2``   -- alpha^2 |L u - f|_{L2}^2 + beta^2 |u|_{L2(bdry)}^2
* ``loss_h12``  -- same residual term, boundary term in the H^{1/2} norm
* ``loss_collocation`` -- unweighted sums over explicit collocation points

plus a soft penalty ``mu * max(0, |u|_{H2} - cap)^2`` that converts the
H2-budget constraint into an unconstrained objective.  The H2 norm inside
the penalty is measured on the same interior quadrature points as the
residual, so each training step evaluates the derivative bundle once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from . import dnn
from .geometry import (
    BoundaryRule,
    Domain,
    GaussLegendre,
    InteriorRule,
    MonteCarlo,
    UniformBoundary,
    boundary_param,
    sample_boundary,
    sample_interior,
)
from .norms import FieldView, h12_sq_from_samples, network_field


# ---------------------------------------------------------------------------
# operators and problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticOperator:
    """Second-order operator with symmetric uniformly elliptic coefficients.

    ``div_a(x)`` must return the vector with components sum_i d_i a_ij(x);
    it is the price of evaluating the divergence-form operator through
    pointwise derivatives.
    """

    name: str
    a: Callable          # x -> (2, 2)
    div_a: Callable      # x -> (2,)
    b: Callable          # x -> (2,)
    c: Callable          # x -> scalar

    def apply(self, value, grad, hess, x):
        """L u at a point, from the (value, gradient, Hessian) bundle."""
        a = self.a(x)
        return (
            -jnp.sum(a * hess)
            - jnp.dot(self.div_a(x), grad)
            + jnp.dot(self.b(x), grad)
            + self.c(x) * value
        )


def laplace_operator() -> EllipticOperator:
    """Negative Laplacian: a = I, b = 0, c = 0."""
    return EllipticOperator(
        name="laplace",
        a=lambda x: jnp.eye(2),
        div_a=lambda x: jnp.zeros(2),
        b=lambda x: jnp.zeros(2),
        c=lambda x: 0.0,
    )


def isotropic_operator(phi: Callable, grad_phi: Callable, name: str = "isotropic") -> EllipticOperator:
    """-div(phi grad u) for a scalar coefficient phi(x) > 0."""
    return EllipticOperator(
        name=name,
        a=lambda x: phi(x) * jnp.eye(2),
        div_a=grad_phi,
        b=lambda x: jnp.zeros(2),
        c=lambda x: 0.0,
    )


def reaction_operator(c: float = 1.0) -> EllipticOperator:
    """-Laplacian + c * identity."""
    return EllipticOperator(
        name="reaction",
        a=lambda x: jnp.eye(2),
        div_a=lambda x: jnp.zeros(2),
        b=lambda x: jnp.zeros(2),
        c=lambda x: jnp.asarray(c, dtype=jnp.float64),
    )


def check_ellipticity(operator: EllipticOperator, domain: Domain,
                      samples: int = 64, seed: int = 0) -> float:
    """Smallest eigenvalue of a(x) over sample points; raises if not positive."""
    pts = sample_interior(domain, MonteCarlo(samples, seed)).points
    theta = np.inf
    for x in pts:
        eigs = np.linalg.eigvalsh(np.asarray(operator.a(jnp.asarray(x))))
        theta = min(theta, eigs[0])
    if theta <= 0:
        raise ValueError(f"operator {operator.name!r} is not elliptic (min eig {theta})")
    return float(theta)


@dataclass(frozen=True)
class EllipticProblem:
    """Operator, source and domain; boundary data is the zero function."""

    operator: EllipticOperator
    source: Callable                # x -> scalar, jax-traceable
    domain: Domain
    exact: FieldView | None = None  # manufactured solution, if known
    name: str = "elliptic"


def make_problem(
    operator: EllipticOperator,
    source: Callable,
    domain: Domain,
    exact: FieldView | None = None,
    boundary_data: Callable | float | None = None,
    name: str = "elliptic",
    validate: bool = True,
) -> EllipticProblem:
    """Validated problem constructor.

    Only homogeneous Dirichlet data is supported: any ``boundary_data`` that
    is not identically zero is rejected.
    """
    if boundary_data is not None:
        if callable(boundary_data):
            bset = sample_boundary(domain, UniformBoundary(32))
            vals = np.asarray([float(boundary_data(jnp.asarray(p))) for p in bset.points])
            if np.abs(vals).max() > 0:
                raise ValueError("nonzero boundary data is not supported")
        elif float(boundary_data) != 0.0:
            raise ValueError("nonzero boundary data is not supported")
    if validate:
        check_ellipticity(operator, domain)
    return EllipticProblem(operator, source, domain, exact, name)


# ---------------------------------------------------------------------------
# residual and losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("loss weights must be strictly positive")


@dataclass(frozen=True)
class H2Budget:
    """Soft H2 cap: penalty weight mu on max(0, |u|_H2 - h2_cap)^2."""

    h2_cap: float
    mu: float = 0.0

    def __post_init__(self):
        if self.h2_cap <= 0:
            raise ValueError("H2 cap must be positive")
        if self.mu < 0:
            raise ValueError("penalty weight must be nonnegative")


@dataclass(frozen=True)
class LossBreakdown:
    residual: float
    boundary: float
    penalty: float

    @property
    def total(self) -> float:
        return self.residual + self.boundary + self.penalty

    def as_dict(self) -> dict:
        return {
            "residual": self.residual,
            "boundary": self.boundary,
            "penalty": self.penalty,
            "total": self.total,
        }


def residual_at(field: FieldView, problem: EllipticProblem, x):
    """(L u - f)(x) for a field view; jax-traceable scalar."""
    x = jnp.asarray(x)
    value = field.value(x)[0]
    grad = field.jacobian(x)[0]
    hess = field.hessian(x)[0]
    return problem.operator.apply(value, grad, hess, x) - problem.source(x)


def residual(net_or_field, problem: EllipticProblem, x) -> float:
    """Pointwise PDE residual of a network or field view."""
    field = net_or_field if isinstance(net_or_field, FieldView) else network_field(net_or_field)
    return float(residual_at(field, problem, x))


def _interior_terms(field: FieldView, problem: EllipticProblem, points, weights):
    """Residual quadrature and squared H2 norm from one derivative bundle."""
    def per_point(x):
        value = field.value(x)[0]
        grad = field.jacobian(x)[0]
        hess = field.hessian(x)[0]
        r = problem.operator.apply(value, grad, hess, x) - problem.source(x)
        h2_density = value**2 + jnp.sum(grad**2) + jnp.sum(hess**2)
        return r**2, h2_density

    r_sq, h2_density = jax.vmap(per_point)(jnp.asarray(points))
    weights = jnp.asarray(weights)
    return jnp.dot(weights, r_sq), jnp.dot(weights, h2_density)


def _penalty(h2_sq, budget: H2Budget | None):
    if budget is None or budget.mu == 0.0:
        return jnp.asarray(0.0)
    excess = jnp.maximum(jnp.sqrt(h2_sq) - budget.h2_cap, 0.0)
    return budget.mu * excess**2


@dataclass(frozen=True)
class EllipticLossEvaluator:
    """Loss as a pure function of network parameters, for training.

    ``batch(seed)`` materializes the quadrature arrays (Monte Carlo rules are
    redrawn per seed, deterministic rules ignore it); ``objective`` maps a
    parameter pytree and a batch to ``(total, per-term tuple)``.
    """

    net: dnn.Network
    problem: EllipticProblem
    weights: LossWeights
    budget: H2Budget | None
    interior_rule: InteriorRule
    boundary_rule: BoundaryRule
    variant: str = "l2"  # "l2" | "h12"
    term_names: tuple = ("residual", "boundary", "penalty")

    def __post_init__(self):
        if self.variant not in ("l2", "h12"):
            raise ValueError(f"unknown loss variant {self.variant!r}")
        if self.variant == "h12" and not isinstance(self.boundary_rule, UniformBoundary):
            raise ValueError("the H^{1/2} boundary term needs a UniformBoundary rule")

    def batch(self, seed: int = 0) -> dict:
        interior_rule = self.interior_rule
        boundary_rule = self.boundary_rule
        if isinstance(interior_rule, MonteCarlo):
            interior_rule = MonteCarlo(interior_rule.count, interior_rule.seed + seed)
        if isinstance(boundary_rule, MonteCarlo):
            boundary_rule = MonteCarlo(boundary_rule.count, boundary_rule.seed + seed)
        pset = sample_interior(self.problem.domain, interior_rule)
        bset = sample_boundary(self.problem.domain, boundary_rule)
        return {
            "interior_points": jnp.asarray(pset.points),
            "interior_weights": jnp.asarray(pset.weights),
            "boundary_points": jnp.asarray(bset.points),
            "boundary_weights": jnp.asarray(bset.weights),
        }

    def objective(self, params, batch):
        field = network_field(self.net, params)
        r_sq, h2_sq = _interior_terms(
            field, self.problem, batch["interior_points"], batch["interior_weights"])
        residual_term = self.weights.alpha**2 * r_sq

        trace = jax.vmap(field.value)(batch["boundary_points"])[:, 0]
        if self.variant == "l2":
            boundary_sq = jnp.dot(batch["boundary_weights"], trace**2)
        else:
            boundary_sq = h12_sq_from_samples(
                trace, boundary_param(self.problem.domain).length)
        boundary_term = self.weights.beta**2 * boundary_sq

        penalty = _penalty(h2_sq, self.budget)
        terms = (residual_term, boundary_term, penalty)
        return residual_term + boundary_term + penalty, terms

    def breakdown(self, params=None, seed: int = 0) -> LossBreakdown:
        params = self.net.params if params is None else params
        _, terms = self.objective(params, self.batch(seed))
        return LossBreakdown(*(float(t) for t in terms))


def loss_l2(
    net: dnn.Network,
    problem: EllipticProblem,
    weights: LossWeights = LossWeights(),
    budget: H2Budget | None = None,
    interior_rule: InteriorRule = GaussLegendre(16),
    boundary_rule: BoundaryRule = GaussLegendre(16),
) -> LossBreakdown:
    """Integral loss with the L2 boundary term."""
    ev = EllipticLossEvaluator(net, problem, weights, budget, interior_rule,
                               boundary_rule, variant="l2")
    return ev.breakdown()


def loss_h12(
    net: dnn.Network,
    problem: EllipticProblem,
    weights: LossWeights = LossWeights(),
    budget: H2Budget | None = None,
    interior_rule: InteriorRule = GaussLegendre(16),
    boundary_rule: UniformBoundary = UniformBoundary(128),
) -> LossBreakdown:
    """Integral loss with the fractional H^{1/2} boundary term."""
    ev = EllipticLossEvaluator(net, problem, weights, budget, interior_rule,
                               boundary_rule, variant="h12")
    return ev.breakdown()


def loss_collocation(
    net_or_field,
    problem: EllipticProblem,
    weights: LossWeights,
    interior_points,
    boundary_points,
) -> float:
    """Unweighted collocation sums; the Monte Carlo counterpart of loss_l2.

    Equals the integral form only after multiplying the interior sum by
    |domain|/m and the boundary sum by L/n.
    """
    interior_points = np.atleast_2d(np.asarray(interior_points, dtype=float))
    boundary_points = np.atleast_2d(np.asarray(boundary_points, dtype=float))
    if interior_points.shape[0] == 0 or boundary_points.shape[0] == 0:
        raise ValueError("collocation point lists must be nonempty")
    field = net_or_field if isinstance(net_or_field, FieldView) else network_field(net_or_field)
    r = jax.vmap(lambda x: residual_at(field, problem, x))(jnp.asarray(interior_points))
    trace = jax.vmap(field.value)(jnp.asarray(boundary_points))[:, 0]
    return float(weights.alpha**2 * jnp.sum(r**2) + weights.beta**2 * jnp.sum(trace**2))
