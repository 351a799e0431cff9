"""Domains, interior/boundary sampling, quadrature and boundary Fourier analysis.

Two domain shapes are supported: axis-aligned rectangles (the unit square as
the common case) and disks.  Boundaries are parametrized by arc length
``s in [0, L)`` with outward unit normals.  Interior rules are tensor
Gauss-Legendre or uniform Monte Carlo; boundary rules add a uniform
(trapezoid) option which doubles as the sampling grid for Fourier
coefficients.

Everything here is immutable and deterministic: Monte Carlo rules carry their
seed, and weights are constructed so that integrating the constant 1 returns
the exact measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

_WEIGHT_TOL = 1e-12


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("rectangle must have positive side lengths")

    @property
    def kind(self) -> str:
        return "rectangle"

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def boundary_length(self) -> float:
        return 2.0 * ((self.x1 - self.x0) + (self.y1 - self.y0))

    def contains(self, points, tol: float = 1e-12):
        p = np.atleast_2d(points)
        return (
            (p[:, 0] >= self.x0 - tol) & (p[:, 0] <= self.x1 + tol)
            & (p[:, 1] >= self.y0 - tol) & (p[:, 1] <= self.y1 + tol)
        )


@dataclass(frozen=True)
class Disk:
    """Disk of given center and radius; the unit disk by default."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("disk radius must be positive")

    @property
    def kind(self) -> str:
        return "disk"

    @property
    def area(self) -> float:
        return np.pi * self.radius**2

    @property
    def boundary_length(self) -> float:
        return 2.0 * np.pi * self.radius

    def contains(self, points, tol: float = 1e-12):
        p = np.atleast_2d(points)
        r2 = (p[:, 0] - self.center[0]) ** 2 + (p[:, 1] - self.center[1]) ** 2
        return r2 <= (self.radius + tol) ** 2


Domain = Union[Rectangle, Disk]


def unit_square() -> Rectangle:
    return Rectangle(0.0, 1.0, 0.0, 1.0)


def unit_disk() -> Disk:
    return Disk((0.0, 0.0), 1.0)


# ---------------------------------------------------------------------------
# boundary parametrization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryParam:
    """Arc-length parametrization s -> (point, outward unit normal), L-periodic."""

    length: float
    point_of: Callable[[np.ndarray], np.ndarray]
    normal_of: Callable[[np.ndarray], np.ndarray]

    def points(self, s):
        return self.point_of(np.mod(np.asarray(s, dtype=float), self.length))

    def normals(self, s):
        return self.normal_of(np.mod(np.asarray(s, dtype=float), self.length))


def boundary_param(domain: Domain) -> BoundaryParam:
    if isinstance(domain, Disk):
        cx, cy = domain.center
        r = domain.radius

        def point_of(s):
            th = np.atleast_1d(np.asarray(s, dtype=float)) / r
            return np.stack([cx + r * np.cos(th), cy + r * np.sin(th)], axis=-1)

        def normal_of(s):
            th = np.atleast_1d(np.asarray(s, dtype=float)) / r
            return np.stack([np.cos(th), np.sin(th)], axis=-1)

        return BoundaryParam(domain.boundary_length, point_of, normal_of)

    lx = domain.x1 - domain.x0
    ly = domain.y1 - domain.y0
    corners = np.array([0.0, lx, lx + ly, 2 * lx + ly, 2 * (lx + ly)])
    # counterclockwise: bottom, right, top, left
    edge_normals = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

    def point_of(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((s.size, 2))
        for k in range(4):
            mask = (s >= corners[k]) & (s < corners[k + 1])
            t = s[mask] - corners[k]
            if k == 0:
                out[mask] = np.stack([domain.x0 + t, np.full_like(t, domain.y0)], -1)
            elif k == 1:
                out[mask] = np.stack([np.full_like(t, domain.x1), domain.y0 + t], -1)
            elif k == 2:
                out[mask] = np.stack([domain.x1 - t, np.full_like(t, domain.y1)], -1)
            else:
                out[mask] = np.stack([np.full_like(t, domain.x0), domain.y1 - t], -1)
        return out

    def normal_of(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        idx = np.searchsorted(corners[1:-1], s, side="right")
        return edge_normals[idx]

    return BoundaryParam(domain.boundary_length, point_of, normal_of)


# ---------------------------------------------------------------------------
# rules and sampled point sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussLegendre:
    """Tensor Gauss-Legendre of the given order per direction."""

    order: int = 16

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("quadrature order must be >= 1")


@dataclass(frozen=True)
class MonteCarlo:
    """Uniform Monte Carlo with a fixed seed; weights are measure/count."""

    count: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("sample count must be >= 1")


@dataclass(frozen=True)
class UniformBoundary:
    """Equispaced arc-length samples; the trapezoid rule on a closed curve."""

    count: int = 64

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("need at least 2 boundary samples")


InteriorRule = Union[GaussLegendre, MonteCarlo]
BoundaryRule = Union[GaussLegendre, MonteCarlo, UniformBoundary]


@dataclass(frozen=True)
class SpaceTimeSampler:
    """Gauss-Legendre time nodes on [0, horizon], one spatial rule per slice."""

    horizon: float
    time_order: int = 8
    spatial: InteriorRule = GaussLegendre(8)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("time horizon must be positive")
        if self.time_order < 1:
            raise ValueError("need at least one time node")

    def time_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return gauss_legendre_1d(self.time_order, 0.0, self.horizon)


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray  # (m, 2)
    weights: np.ndarray  # (m,)


@dataclass(frozen=True)
class BoundarySet:
    points: np.ndarray   # (n, 2)
    weights: np.ndarray  # (n,)
    normals: np.ndarray  # (n, 2)
    s: np.ndarray        # (n,) arc-length parameters


def gauss_legendre_1d(order: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [a, b]; exact for polynomials of degree 2*order-1."""
    x, w = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def sample_interior(domain: Domain, rule: InteriorRule) -> PointSet:
    """Weighted interior point set whose weights sum to the domain measure."""
    if isinstance(rule, GaussLegendre):
        if isinstance(domain, Rectangle):
            xs, wx = gauss_legendre_1d(rule.order, domain.x0, domain.x1)
            ys, wy = gauss_legendre_1d(rule.order, domain.y0, domain.y1)
            xx, yy = np.meshgrid(xs, ys, indexing="ij")
            ww = np.outer(wx, wy)
            pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
            return PointSet(pts, ww.ravel())
        # disk: Gauss-Legendre radially (with the r Jacobian), uniform midpoint
        # rule in angle, which integrates trigonometric polynomials exactly
        rs, wr = gauss_legendre_1d(rule.order, 0.0, domain.radius)
        n_th = 4 * rule.order
        th = (np.arange(n_th) + 0.5) * (2 * np.pi / n_th)
        wth = np.full(n_th, 2 * np.pi / n_th)
        rr, tt = np.meshgrid(rs, th, indexing="ij")
        ww = np.outer(wr * rs, wth)
        pts = np.stack(
            [domain.center[0] + rr.ravel() * np.cos(tt.ravel()),
             domain.center[1] + rr.ravel() * np.sin(tt.ravel())], axis=1)
        return PointSet(pts, ww.ravel())

    if isinstance(rule, MonteCarlo):
        rng = np.random.default_rng(rule.seed)
        if isinstance(domain, Rectangle):
            pts = np.stack(
                [rng.uniform(domain.x0, domain.x1, rule.count),
                 rng.uniform(domain.y0, domain.y1, rule.count)], axis=1)
        else:
            r = domain.radius * np.sqrt(rng.uniform(0.0, 1.0, rule.count))
            th = rng.uniform(0.0, 2 * np.pi, rule.count)
            pts = np.stack(
                [domain.center[0] + r * np.cos(th),
                 domain.center[1] + r * np.sin(th)], axis=1)
        weights = np.full(rule.count, domain.area / rule.count)
        return PointSet(pts, weights)

    raise TypeError(f"unsupported interior rule: {rule!r}")


def sample_boundary(domain: Domain, rule: BoundaryRule) -> BoundarySet:
    """Weighted boundary samples with outward normals and arc-length parameters."""
    param = boundary_param(domain)
    length = param.length

    if isinstance(rule, GaussLegendre) and isinstance(domain, Rectangle):
        # Gauss-Legendre per edge, so corner kinks never sit inside a panel.
        lx = domain.x1 - domain.x0
        ly = domain.y1 - domain.y0
        s_list, w_list = [], []
        start = 0.0
        for edge_len in (lx, ly, lx, ly):
            s, w = gauss_legendre_1d(rule.order, start, start + edge_len)
            s_list.append(s)
            w_list.append(w)
            start += edge_len
        s = np.concatenate(s_list)
        w = np.concatenate(w_list)
    elif isinstance(rule, (GaussLegendre, UniformBoundary)):
        n = rule.count if isinstance(rule, UniformBoundary) else 4 * rule.order
        s = np.arange(n) * (length / n)
        w = np.full(n, length / n)
    elif isinstance(rule, MonteCarlo):
        rng = np.random.default_rng(rule.seed)
        s = rng.uniform(0.0, length, rule.count)
        w = np.full(rule.count, length / rule.count)
    else:
        raise TypeError(f"unsupported boundary rule: {rule!r}")

    return BoundarySet(param.points(s), w, param.normals(s), s)


def quad_integrate(field: Callable, point_set: PointSet | BoundarySet) -> float:
    """Weighted sum of a scalar field over a sampled point set."""
    vals = np.asarray([field(p) for p in point_set.points], dtype=float)
    return float(np.dot(point_set.weights, vals))


def uniform_boundary_samples(domain: Domain, count: int) -> BoundarySet:
    return sample_boundary(domain, UniformBoundary(count))


def boundary_fourier_coeffs(
    g: Callable[[float], float] | np.ndarray,
    modes: int,
    rule: UniformBoundary,
    domain: Domain,
) -> np.ndarray:
    """Fourier coefficients of a boundary function on the rescaled circle.

    The boundary is rescaled to [0, 2*pi); the trapezoid rule on uniform
    samples gives coefficients g_hat[k] for k = -modes..modes (exact for
    band-limited g).  ``g`` is a callable of arc length or an array of values
    at the uniform sample points.

    Raises if ``modes`` exceeds the Nyquist limit of the sample count.
    """
    n = rule.count
    if modes > n // 2:
        raise ValueError(f"mode count {modes} exceeds Nyquist limit {n // 2} of {n} samples")
    length = boundary_param(domain).length
    if callable(g):
        s = np.arange(n) * (length / n)
        vals = np.asarray([g(si) for si in s], dtype=complex)
    else:
        vals = np.asarray(g, dtype=complex)
        if vals.shape != (n,):
            raise ValueError(f"expected {n} samples, got shape {vals.shape}")
    spectrum = np.fft.fft(vals) / n
    ks = np.arange(-modes, modes + 1)
    return spectrum[np.mod(ks, n)]


def verify_weights(point_set: PointSet | BoundarySet, measure: float) -> None:
    total = float(point_set.weights.sum())
    if abs(total - measure) > _WEIGHT_TOL * max(1.0, abs(measure)):
        raise AssertionError(f"weights sum to {total}, expected {measure}")
