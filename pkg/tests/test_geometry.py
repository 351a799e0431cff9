import numpy as np
import pytest

from pinncert import geometry as geo


class TestDomains:
    def test_measures(self):
        assert geo.unit_square().area == 1.0
        assert geo.unit_square().boundary_length == 4.0
        assert geo.Rectangle(0, 2, 0, 3).area == 6.0
        assert geo.unit_disk().area == pytest.approx(np.pi)
        assert geo.unit_disk().boundary_length == pytest.approx(2 * np.pi)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            geo.Rectangle(0, 0, 0, 1)
        with pytest.raises(ValueError):
            geo.Disk(radius=0.0)


class TestInteriorQuadrature:
    @pytest.mark.parametrize("domain", [geo.unit_square(), geo.Rectangle(-1, 2, 0, 0.5),
                                        geo.unit_disk(), geo.Disk((1.0, -2.0), 0.7)])
    @pytest.mark.parametrize("rule", [geo.GaussLegendre(4), geo.GaussLegendre(9),
                                      geo.MonteCarlo(2000, seed=1)])
    def test_weights_sum_to_measure(self, domain, rule):
        pset = geo.sample_interior(domain, rule)
        assert pset.weights.sum() == pytest.approx(domain.area, rel=1e-13)
        assert domain.contains(pset.points).all()

    def test_gl_exact_for_polynomials(self):
        # order q integrates degree 2q-1 exactly per direction
        sq = geo.unit_square()
        for q in (2, 4, 6):
            pset = geo.sample_interior(sq, geo.GaussLegendre(q))
            for deg in range(2 * q):
                val = float(np.dot(pset.weights, pset.points[:, 0] ** deg))
                assert val == pytest.approx(1.0 / (deg + 1), rel=1e-12), (q, deg)

    def test_linear_moment(self):
        pset = geo.sample_interior(geo.unit_square(), geo.GaussLegendre(4))
        assert float(np.dot(pset.weights, pset.points[:, 0])) == pytest.approx(0.5)

    def test_sine_product_integral(self):
        pset = geo.sample_interior(geo.unit_square(), geo.GaussLegendre(8))
        f = np.sin(np.pi * pset.points[:, 0]) * np.sin(np.pi * pset.points[:, 1])
        assert float(np.dot(pset.weights, f)) == pytest.approx(4 / np.pi**2, abs=1e-10)

    def test_monte_carlo_deterministic(self):
        a = geo.sample_interior(geo.unit_disk(), geo.MonteCarlo(128, seed=9))
        b = geo.sample_interior(geo.unit_disk(), geo.MonteCarlo(128, seed=9))
        assert np.array_equal(a.points, b.points)
        c = geo.sample_interior(geo.unit_disk(), geo.MonteCarlo(128, seed=10))
        assert not np.array_equal(a.points, c.points)


class TestBoundary:
    def test_square_perimeter(self):
        bset = geo.sample_boundary(geo.unit_square(), geo.GaussLegendre(4))
        assert bset.weights.sum() == pytest.approx(4.0, rel=1e-13)

    def test_disk_circumference(self):
        bset = geo.sample_boundary(geo.unit_disk(), geo.UniformBoundary(64))
        assert bset.weights.sum() == pytest.approx(2 * np.pi, rel=1e-13)

    @pytest.mark.parametrize("domain", [geo.unit_square(), geo.unit_disk(),
                                        geo.Rectangle(0, 2, -1, 1)])
    def test_normals_orthogonal_to_tangent(self, domain):
        param = geo.boundary_param(domain)
        ds = 1e-6
        # probe away from the square's corners, where the tangent jumps
        rng = np.random.default_rng(7)
        probes = rng.uniform(0.01, param.length - 0.01, 40)
        quarter = param.length / 4
        probes = probes[np.abs(probes / quarter - np.round(probes / quarter)) > 1e-3]
        for s in probes:
            tangent = (param.points(s + ds) - param.points(s - ds))[0] / (2 * ds)
            normal = param.normals(s)[0]
            assert abs(np.dot(tangent, normal)) < 1e-8
            assert np.linalg.norm(normal) == pytest.approx(1.0, abs=1e-12)

    def test_normals_point_outward(self):
        domain = geo.unit_square()
        bset = geo.sample_boundary(domain, geo.UniformBoundary(32))
        outside = bset.points + 1e-6 * bset.normals
        assert not domain.contains(outside, tol=0.0).any()


class TestFourier:
    def test_constant(self):
        c = geo.boundary_fourier_coeffs(lambda s: 1.0, 4, geo.UniformBoundary(32),
                                        geo.unit_disk())
        assert c[4] == pytest.approx(1.0, abs=1e-12)  # k = 0 sits at index `modes`
        others = np.delete(c, 4)
        assert np.abs(others).max() < 1e-12

    def test_cosine_mode(self):
        disk = geo.unit_disk()
        c = geo.boundary_fourier_coeffs(lambda s: np.cos(s), 3, geo.UniformBoundary(64), disk)
        assert c[2] == pytest.approx(0.5, abs=1e-12)   # k = -1
        assert c[4] == pytest.approx(0.5, abs=1e-12)   # k = +1
        assert abs(c[3]) < 1e-12

    def test_sin_3theta(self):
        disk = geo.unit_disk()
        c = geo.boundary_fourier_coeffs(lambda s: np.sin(3 * s), 5,
                                        geo.UniformBoundary(64), disk)
        nonzero = {k for k, v in zip(range(-5, 6), c) if abs(v) > 1e-12}
        assert nonzero == {-3, 3}
        assert c[5 + 3] == pytest.approx(-0.5j, abs=1e-12)

    def test_nyquist_guard(self):
        with pytest.raises(ValueError, match="Nyquist"):
            geo.boundary_fourier_coeffs(lambda s: 1.0, 20, geo.UniformBoundary(32),
                                        geo.unit_disk())


class TestSpaceTime:
    def test_nodes_inside_horizon(self):
        sampler = geo.SpaceTimeSampler(0.25, 6)
        ts, wts = sampler.time_nodes()
        assert (ts > 0).all() and (ts < 0.25).all()
        assert wts.sum() == pytest.approx(0.25, rel=1e-13)

    def test_validation(self):
        with pytest.raises(ValueError):
            geo.SpaceTimeSampler(-1.0, 4)
        with pytest.raises(ValueError):
            geo.SpaceTimeSampler(1.0, 0)


def test_quad_integrate_matches_dot():
    pset = geo.sample_interior(geo.unit_square(), geo.GaussLegendre(5))
    val = geo.quad_integrate(lambda p: p[0] ** 2 + p[1], pset)
    assert val == pytest.approx(1 / 3 + 1 / 2, rel=1e-12)
