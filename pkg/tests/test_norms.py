import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinncert import dnn, geometry as geo, norms

SQUARE = geo.unit_square()
DISK = geo.unit_disk()
GL16 = geo.GaussLegendre(16)


def sin_sin():
    return norms.field_from_function(
        lambda x: jnp.sin(jnp.pi * x[0]) * jnp.sin(jnp.pi * x[1]), 2)


class TestInteriorNorms:
    def test_zero_field_all_kinds(self):
        zero = norms.field_from_function(lambda x: 0.0 * x[0], 2)
        for kind in ("l2", "h1", "h2", "boundary_l2", "boundary_h12"):
            assert norms.norm(zero, kind, SQUARE, GL16) == 0.0

    def test_sine_product_l2(self):
        assert norms.norm(sin_sin(), "l2", SQUARE, GL16) == pytest.approx(0.5, rel=1e-12)

    def test_sine_product_h1(self):
        # |u|^2 = 1/4, |grad u|^2 = pi^2 / 2
        expected = np.sqrt(0.25 + np.pi**2 / 2)
        assert norms.norm(sin_sin(), "h1", SQUARE, GL16) == pytest.approx(expected, rel=1e-12)

    def test_affine_h2_equals_h1(self):
        field = norms.field_from_function(lambda x: x[0], 2)
        expected = np.sqrt(1 / 3 + 1.0)
        assert norms.norm(field, "h2", SQUARE, GL16) == pytest.approx(expected, rel=1e-12)
        assert norms.norm(field, "h1", SQUARE, GL16) == pytest.approx(expected, rel=1e-12)

    def test_nesting_on_network(self):
        net = dnn.init_network([2, 16, 1], seed=21)
        field = norms.network_field(net)
        l2 = norms.norm(field, "l2", SQUARE, GL16)
        h1 = norms.norm(field, "h1", SQUARE, GL16)
        h2 = norms.norm(field, "h2", SQUARE, GL16)
        assert l2 <= h1 <= h2
        assert norms.h2_norm_of_network(net, SQUARE, GL16) == pytest.approx(h2, rel=1e-12)


class TestBoundaryNorms:
    def test_h12_normalization_fixed_by_l2_oracle(self):
        # brute-force boundary integral pins the normalization before any
        # fractional weighting is trusted
        field = norms.field_from_function(lambda x: x[0], 2)  # trace cos(theta)
        bset = geo.sample_boundary(DISK, geo.UniformBoundary(512))
        brute = np.sqrt(np.dot(bset.weights, bset.points[:, 0] ** 2))
        assert brute == pytest.approx(np.sqrt(np.pi), rel=1e-10)
        assert norms.norm(field, "boundary_l2", DISK, geo.UniformBoundary(512)) == \
            pytest.approx(brute, rel=1e-12)

    def test_h12_of_cosine_mode(self):
        # modes +-1 with coefficients 1/2: squared norm = L * sqrt(2) / 2
        field = norms.field_from_function(lambda x: x[0], 2)
        expected = np.sqrt(np.sqrt(2.0) * np.pi)
        assert norms.norm(field, "boundary_h12", DISK, boundary_samples=128) == \
            pytest.approx(expected, rel=1e-12)

    def test_h12_of_constant_equals_boundary_l2(self):
        const = norms.field_from_function(lambda x: 3.0 + 0.0 * x[0], 2)
        h12 = norms.norm(const, "boundary_h12", DISK, boundary_samples=64)
        l2 = norms.norm(const, "boundary_l2", DISK, geo.UniformBoundary(64))
        assert h12 == pytest.approx(l2, rel=1e-12)
        assert h12 == pytest.approx(3.0 * np.sqrt(2 * np.pi), rel=1e-12)

    def test_h12_dominates_boundary_l2(self):
        net = dnn.init_network([2, 12, 1], seed=3)
        field = norms.network_field(net)
        h12 = norms.norm(field, "boundary_h12", DISK, boundary_samples=256)
        l2 = norms.norm(field, "boundary_l2", DISK, geo.UniformBoundary(256))
        assert h12 >= l2 * (1 - 1e-12)

    def test_pure_mode_formula(self):
        # g = sin(3 theta): squared norm = L * (1 + 9)^{1/2} * (1/4 + 1/4)
        k = 3
        field = norms.field_from_function(
            lambda x: jnp.sin(k * jnp.arctan2(x[1], x[0])), 2)
        expected_sq = 2 * np.pi * np.sqrt(1.0 + k**2) * 0.5
        got = norms.norm(field, "boundary_h12", DISK, boundary_samples=128)
        assert got**2 == pytest.approx(expected_sq, rel=1e-10)


class TestComposites:
    def test_l2_spacetime_of_separable_field(self):
        # u = sin(pi x1) sin(pi x2) e^{-t}: integral of |u|^2 over time scales it
        field3 = norms.field_from_function(
            lambda z: jnp.sin(jnp.pi * z[0]) * jnp.sin(jnp.pi * z[1]) * jnp.exp(-z[2]), 3)
        horizon = 0.5
        expected = np.sqrt(0.25 * (1 - np.exp(-2 * horizon)) / 2)
        got = norms.norm(field3, "l2_spacetime", SQUARE, geo.GaussLegendre(12),
                         horizon=horizon, time_order=12)
        assert got == pytest.approx(expected, rel=1e-10)

    def test_l4_in_time_of_l2(self):
        field3 = norms.field_from_function(
            lambda z: jnp.sin(jnp.pi * z[0]) * jnp.sin(jnp.pi * z[1]) * jnp.exp(-z[2]), 3)
        horizon = 0.5
        # |u(t)|_{L2}^4 = (1/16) e^{-4t}; integral = (1 - e^{-2}) / 64
        expected = ((1 - np.exp(-4 * horizon)) / 64) ** 0.25
        got = norms.norm(field3, norms.L4InTime("l2"), SQUARE, geo.GaussLegendre(12),
                         horizon=horizon, time_order=12)
        assert got == pytest.approx(expected, rel=1e-10)

    def test_missing_horizon_rejected(self):
        field3 = norms.field_from_function(lambda z: z[0], 3)
        with pytest.raises(ValueError, match="horizon"):
            norms.norm(field3, norms.L4InTime("l2"), SQUARE)


class TestFieldViews:
    def test_at_time_freezes_t(self):
        field3 = norms.field_from_function(lambda z: z[0] * z[2], 3)
        frozen = norms.at_time(field3, 2.0)
        assert float(frozen.value(jnp.array([0.5, 0.0]))[0]) == pytest.approx(1.0)
        assert frozen.jacobian(jnp.array([0.5, 0.0])).shape == (1, 2)

    def test_field_slice(self):
        field = norms.field_from_function(lambda z: jnp.array([z[0], z[1], 7.0]), 3)
        vel = norms.field_slice(field, 0, 2)
        assert vel.outputs == 2
        assert np.allclose(vel.value(jnp.array([1.0, 2.0, 0.0])), [1.0, 2.0])
        with pytest.raises(ValueError):
            norms.field_slice(field, 2, 2)

    def test_difference_requires_matching_shapes(self):
        a = norms.field_from_function(lambda x: x[0], 2)
        b = norms.field_from_function(lambda z: z[0], 3)
        with pytest.raises(ValueError):
            norms.field_difference(a, b)


@settings(max_examples=15, deadline=None)
@given(c=st.floats(-10, 10, allow_nan=False))
def test_homogeneity(c):
    field = sin_sin()
    scaled = norms.field_scale(field, c)
    for kind in ("l2", "h1", "h2"):
        base = norms.norm(field, kind, SQUARE, geo.GaussLegendre(8))
        got = norms.norm(scaled, kind, SQUARE, geo.GaussLegendre(8))
        assert got == pytest.approx(abs(c) * base, rel=1e-12, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a_amp, b_amp = rng.uniform(0.1, 2.0, 2)
    a = norms.field_from_function(
        lambda x: a_amp * jnp.sin(jnp.pi * x[0]) * x[1], 2)
    b = norms.field_from_function(
        lambda x: b_amp * jnp.cos(jnp.pi * x[1]) * x[0] ** 2, 2)
    s = norms.FieldView(2, 1, lambda x: a.value(x) + b.value(x),
                        lambda x: a.jacobian(x) + b.jacobian(x),
                        lambda x: a.hessian(x) + b.hessian(x))
    for kind in ("l2", "h1"):
        rule = geo.GaussLegendre(8)
        assert norms.norm(s, kind, SQUARE, rule) <= \
            norms.norm(a, kind, SQUARE, rule) + norms.norm(b, kind, SQUARE, rule) + 1e-12
