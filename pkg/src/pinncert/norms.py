"""Quadrature-based Sobolev norm estimators shared by losses and certificates.

A :class:`FieldView` bundles per-point value / Jacobian / Hessian callables
for either a network output or an exact (closed-form) function, so the same
norm code measures both.  All core routines are jax-traceable: losses call
them inside jitted objectives, and the public wrappers return plain floats.

Supported norms: L2 and full H1/H2 over a domain, L2 and H^{1/2} over the
boundary, plus L2 over space-time and L4-in-time composites of any spatial
norm.  The fractional boundary norm is the periodic Fourier-multiplier norm
on the arc-length circle rescaled to [0, 2*pi),

    |g|_{H^{1/2}}^2 = L * sum_k (1 + k^2)^{1/2} |g_hat_k|^2,

normalized (the factor L) so that the H^{1/2} norm of a constant equals its
L2 boundary norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import jax
import jax.numpy as jnp
import numpy as np

from . import dnn
from .geometry import (
    BoundaryRule,
    Domain,
    GaussLegendre,
    InteriorRule,
    UniformBoundary,
    boundary_param,
    gauss_legendre_1d,
    sample_boundary,
    sample_interior,
)


@dataclass(frozen=True)
class FieldView:
    """Value / gradient / Hessian of an R^m-valued field at points of R^d.

    All three callables take one point of shape (d,) and return arrays of
    shape (m,), (m, d) and (m, d, d).  They must be jax-traceable.
    """

    dim: int
    outputs: int
    value: Callable
    jacobian: Callable
    hessian: Callable


def field_from_function(fn: Callable, dim: int, outputs: int | None = None) -> FieldView:
    """FieldView of a closed-form jnp function via automatic differentiation.

    ``fn`` maps a point (d,) to either a scalar or an (m,) array; scalars are
    promoted to a single output component.
    """
    probe = np.asarray(fn(jnp.zeros(dim)))
    if probe.ndim == 0:
        vec = lambda x: jnp.atleast_1d(fn(x))
        m = 1
    else:
        vec = fn
        m = probe.shape[0] if outputs is None else outputs
    return FieldView(
        dim=dim,
        outputs=m,
        value=vec,
        jacobian=jax.jacfwd(vec),
        hessian=jax.jacfwd(jax.jacfwd(vec)),
    )


def network_field(net: dnn.Network, params=None) -> FieldView:
    """FieldView of a network, optionally over substituted parameters.

    Passing ``params`` makes the view close over a traced parameter pytree,
    which is how training losses differentiate through it.
    """
    p = net.params if params is None else params
    fn = lambda x: dnn.apply_params(p, x, net.activation)
    return FieldView(
        dim=net.input_dim,
        outputs=net.output_dim,
        value=fn,
        jacobian=jax.jacfwd(fn),
        hessian=jax.jacfwd(jax.jacfwd(fn)),
    )


def field_difference(f: FieldView, g: FieldView) -> FieldView:
    if (f.dim, f.outputs) != (g.dim, g.outputs):
        raise ValueError("fields must share input dimension and output count")
    return FieldView(
        dim=f.dim,
        outputs=f.outputs,
        value=lambda x: f.value(x) - g.value(x),
        jacobian=lambda x: f.jacobian(x) - g.jacobian(x),
        hessian=lambda x: f.hessian(x) - g.hessian(x),
    )


def field_slice(f: FieldView, start: int, stop: int) -> FieldView:
    """View of a contiguous range of output components."""
    if not (0 <= start < stop <= f.outputs):
        raise ValueError(f"bad component range [{start}, {stop}) for {f.outputs} outputs")
    return FieldView(
        dim=f.dim,
        outputs=stop - start,
        value=lambda x: f.value(x)[start:stop],
        jacobian=lambda x: f.jacobian(x)[start:stop],
        hessian=lambda x: f.hessian(x)[start:stop],
    )


def field_scale(f: FieldView, c: float) -> FieldView:
    return FieldView(
        dim=f.dim,
        outputs=f.outputs,
        value=lambda x: c * f.value(x),
        jacobian=lambda x: c * f.jacobian(x),
        hessian=lambda x: c * f.hessian(x),
    )


def at_time(field: FieldView, t) -> FieldView:
    """Freeze the last input coordinate (time) of a space-time field."""
    if field.dim != 3:
        raise ValueError("at_time expects a field over (x1, x2, t)")
    embed = lambda x: jnp.concatenate([x, jnp.atleast_1d(t)])
    return FieldView(
        dim=2,
        outputs=field.outputs,
        value=lambda x: field.value(embed(x)),
        jacobian=lambda x: field.jacobian(embed(x))[:, :2],
        hessian=lambda x: field.hessian(embed(x))[:, :2, :2],
    )


# ---------------------------------------------------------------------------
# traceable squared-norm cores
# ---------------------------------------------------------------------------

_ORDER_OF = {"l2": 0, "h1": 1, "h2": 2}


def sobolev_sq(field: FieldView, order: int, points, weights):
    """Squared L2/H1/H2 norm over weighted sample points (jax-traceable)."""
    points = jnp.asarray(points)
    weights = jnp.asarray(weights)
    vals = jax.vmap(field.value)(points)
    acc = jnp.sum(vals**2, axis=tuple(range(1, vals.ndim)))
    if order >= 1:
        jac = jax.vmap(field.jacobian)(points)
        acc = acc + jnp.sum(jac**2, axis=tuple(range(1, jac.ndim)))
    if order >= 2:
        hess = jax.vmap(field.hessian)(points)
        acc = acc + jnp.sum(hess**2, axis=tuple(range(1, hess.ndim)))
    return jnp.dot(weights, acc)


def boundary_l2_sq(field: FieldView, points, weights):
    vals = jax.vmap(field.value)(jnp.asarray(points))
    return jnp.dot(jnp.asarray(weights), jnp.sum(vals**2, axis=1))


def h12_sq_from_samples(values, length):
    """Squared H^{1/2} norm from uniform samples along the closed boundary.

    ``values`` has shape (n,) or (n, m); components are summed.  The Fourier
    multiplier (1 + k^2)^{1/2} acts on the rescaled-circle mode index k.
    """
    values = jnp.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    k = jnp.fft.fftfreq(n) * n
    mult = jnp.sqrt(1.0 + k**2)
    spectrum = jnp.fft.fft(values, axis=0) / n
    return length * jnp.sum(mult[:, None] * jnp.abs(spectrum) ** 2)


def h12_boundary_sq(field: FieldView, domain: Domain, samples: int):
    """Squared H^{1/2} boundary norm of a field's trace (jax-traceable)."""
    bset = sample_boundary(domain, UniformBoundary(samples))
    vals = jax.vmap(field.value)(jnp.asarray(bset.points))
    return h12_sq_from_samples(vals, boundary_param(domain).length)


# ---------------------------------------------------------------------------
# space-time composites
# ---------------------------------------------------------------------------

def time_nodes(horizon: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, horizon]."""
    return gauss_legendre_1d(order, 0.0, horizon)


def l4_time_sq(inner_sq_at_t: Callable, horizon: float, order: int):
    """Square of the L4-in-time norm given t -> (spatial norm)^2.

    Returns sum_k w_k * inner_sq(t_k)^2, i.e. the integral of the fourth
    power; take the fourth root of this for the norm itself.
    """
    ts, wts = time_nodes(horizon, order)
    vals = jnp.stack([inner_sq_at_t(t) for t in ts])
    return jnp.dot(jnp.asarray(wts), vals**2)


def l2_spacetime_sq(field: FieldView, domain: Domain, spatial_rule: InteriorRule,
                    horizon: float, time_order: int):
    pset = sample_interior(domain, spatial_rule)
    ts, wts = time_nodes(horizon, time_order)
    per_t = jnp.stack([
        sobolev_sq(at_time(field, t), 0, pset.points, pset.weights) for t in ts
    ])
    return jnp.dot(jnp.asarray(wts), per_t)


@dataclass(frozen=True)
class L4InTime:
    """L4([0,T]; X) composite for a spatial norm kind X."""

    inner: str  # "l2" | "h1" | "h2" | "boundary_h12"


NormKind = Union[str, L4InTime]


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def norm(
    field: FieldView,
    kind: NormKind,
    domain: Domain,
    rule: InteriorRule | BoundaryRule = GaussLegendre(16),
    horizon: float | None = None,
    time_order: int = 8,
    boundary_samples: int = 128,
) -> float:
    """Evaluate a norm of a field; see the module docstring for the catalog.

    Boundary H^{1/2} requires enough uniform samples for the trace content
    (``boundary_samples``); space-time kinds require ``horizon``.
    """
    if isinstance(kind, L4InTime):
        if horizon is None:
            raise ValueError("L4-in-time norms need a time horizon")
        if kind.inner in _ORDER_OF:
            pset = sample_interior(domain, rule)
            inner = lambda t: sobolev_sq(
                at_time(field, t), _ORDER_OF[kind.inner], pset.points, pset.weights)
        elif kind.inner == "boundary_h12":
            inner = lambda t: h12_boundary_sq(at_time(field, t), domain, boundary_samples)
        else:
            raise ValueError(f"unsupported inner norm {kind.inner!r}")
        return float(l4_time_sq(inner, horizon, time_order)) ** 0.25

    if kind in _ORDER_OF:
        pset = sample_interior(domain, rule)
        return float(sobolev_sq(field, _ORDER_OF[kind], pset.points, pset.weights)) ** 0.5
    if kind == "boundary_l2":
        bset = sample_boundary(domain, rule if isinstance(rule, (GaussLegendre, UniformBoundary)) else GaussLegendre(16))
        return float(boundary_l2_sq(field, bset.points, bset.weights)) ** 0.5
    if kind == "boundary_h12":
        return float(h12_boundary_sq(field, domain, boundary_samples)) ** 0.5
    if kind == "l2_spacetime":
        if horizon is None:
            raise ValueError("space-time norms need a time horizon")
        return float(l2_spacetime_sq(field, domain, rule, horizon, time_order)) ** 0.5
    raise ValueError(f"unknown norm kind {kind!r}")


def h2_norm_of_network(net: dnn.Network, domain: Domain,
                       rule: InteriorRule = GaussLegendre(16)) -> float:
    """Full H2 norm of a scalar network output over the domain."""
    return norm(network_field(net), "h2", domain, rule)
