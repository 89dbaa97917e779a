"""Geometry backend tests: exact Brownian increments, theta-series heat
kernel, conformal rescaling, symbolic trig calculus and flows."""

import numpy as np
import pytest
from scipy import integrate, stats

from dflab.geometry import (Manifold, TrigFunction, VectorField,
                            brownian_increment, distance, flow,
                            heat_kernel_density, sample_uniform)

from oracles import (central_diff_gradient, central_diff_jacobian,
                     wrapped_gaussian_uniform_tv_bound)

T2 = Manifold(dim=2, side=1.0, beta=1.0)


class TestBrownianIncrement:
    def test_rejects_nonpositive_time(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            brownian_increment(T2, np.zeros(2), 0.0, rng)
        with pytest.raises(ValueError):
            brownian_increment(T2, np.zeros(2), -1.0, rng)

    def test_zero_time_limit_collapses(self):
        rng = np.random.default_rng(1)
        x = np.array([0.25, 0.5])
        y = brownian_increment(T2, np.tile(x, (2000, 1)), 1e-14, rng)
        assert np.abs(y - x).max() < 1e-5

    def test_long_time_is_uniform(self):
        # ante: the Fourier tail bounds the density gap to uniform
        tau = 1e6 * T2.side ** 2
        assert wrapped_gaussian_uniform_tv_bound(tau, T2.side) < 1e-300
        rng = np.random.default_rng(20)
        n = 10 ** 4
        y = brownian_increment(T2, np.zeros((n, 2)), tau, rng)
        crit = 1.63 / np.sqrt(n)  # KS critical value at alpha ~ 0.01
        for j in range(2):
            ks = stats.kstest(y[:, j], "uniform").statistic
            assert ks < crit

    def test_mean_displacement_vanishes(self):
        rng = np.random.default_rng(3)
        n, tau = 10 ** 5, 0.01
        x = np.full((n, 2), 0.5)
        y = brownian_increment(T2, x, tau, rng)
        disp = (y - x + 0.5) % 1.0 - 0.5
        se = disp.std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(disp.mean(axis=0)) < 3 * se)

    def test_metric_scaling_matches_time_change_bitwise(self):
        scaled = Manifold(dim=2, metric_scale=4.0)
        tau = 0.3
        y1 = brownian_increment(scaled, np.full((64, 2), 0.1), tau,
                                np.random.default_rng(9))
        y2 = brownian_increment(T2, np.full((64, 2), 0.1), tau / 4.0,
                                np.random.default_rng(9))
        assert np.array_equal(y1, y2)


class TestHeatKernel:
    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            heat_kernel_density(T2, np.zeros(2), np.zeros(2), 0.0)

    @pytest.mark.parametrize("t", [0.003, 0.05, 0.5, 5.0])
    def test_stochastic_completeness(self, t):
        # the d-dim integral factorizes; quadrature on the 1-d factor
        circle = Manifold(dim=1)
        x = np.array([0.37])

        def dens(y):
            return heat_kernel_density(circle, x, np.array([y]), t)

        val, err = integrate.quad(dens, 0.0, 1.0, limit=200,
                                  epsabs=1e-13, epsrel=1e-13)
        assert abs(val - 1.0) < 1e-10

    def test_conformal_rescaling_identity(self):
        # density under metric a*g equals density at time t/a; the scaled
        # side computes through an independent float path
        rng = np.random.default_rng(4)
        for a in (0.25, 0.5, 2.0, 5.0):
            scaled = Manifold(dim=2, side=1.0, metric_scale=a)
            equiv = Manifold(dim=2, side=np.sqrt(a))
            for _ in range(25):
                x = rng.uniform(0, 1, 2)
                y = rng.uniform(0, 1, 2)
                t = rng.uniform(0.01, 2.0)
                h_scaled = heat_kernel_density(scaled, x, y, t)
                h_time = heat_kernel_density(T2, x, y, t / a)
                h_side = heat_kernel_density(equiv, np.sqrt(a) * x,
                                             np.sqrt(a) * y, t)
                assert abs(h_scaled - h_time) <= 1e-12 * max(1.0, h_time)
                assert abs(h_side - h_time) <= 1e-12 * max(1.0, h_time)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = rng.uniform(0, 1, 2)
            y = rng.uniform(0, 1, 2)
            t = rng.uniform(0.005, 3.0)
            assert abs(heat_kernel_density(T2, x, y, t) -
                       heat_kernel_density(T2, y, x, t)) < 1e-14

    @pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
    def test_sampler_density_chisquare(self, t):
        rng = np.random.default_rng(int(t * 1000))
        n = 10 ** 5
        y = brownian_increment(Manifold(dim=1), np.full((n, 1), 0.3), t, rng)
        bins = np.linspace(0.0, 1.0, 41)
        counts, _ = np.histogram(y[:, 0], bins=bins)
        centers = 0.5 * (bins[:-1] + bins[1:])
        circle = Manifold(dim=1)
        # expected bin mass by 3-point Simpson per bin
        probs = np.zeros(len(centers))
        for i in range(len(centers)):
            xs = np.array([bins[i], centers[i], bins[i + 1]])
            vals = np.array([heat_kernel_density(
                circle, np.array([0.3]), np.array([v]), t) for v in xs])
            probs[i] = (bins[i + 1] - bins[i]) * (
                vals[0] + 4 * vals[1] + vals[2]) / 6.0
        probs /= probs.sum()
        chi2 = stats.chisquare(counts, n * probs)
        # 0.999 quantile of chi2 with 39 dof ~ 72.05
        assert chi2.statistic < stats.chi2.ppf(0.999, len(counts) - 1)


class TestTrigCalculus:
    def _basket(self):
        return [
            TrigFunction.from_terms([(1.0, (1, 0), "cos")], 2),
            TrigFunction.from_terms([(0.5, (0, 2), "sin"),
                                     (-0.3, (1, 1), "cos")], 2),
            TrigFunction.from_terms([(0.2, (2, -1), "sin"),
                                     (0.7, (0, 0), "cos")], 2),
        ]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        for f in self._basket():
            for _ in range(10):
                x = rng.uniform(0, 1, 2)
                fd = central_diff_gradient(f, x)
                assert np.abs(f.gradient(x) - fd).max() < 1e-6

    def test_laplacian_exact_eigenvalue(self):
        f = TrigFunction.from_terms([(1.0, (2, 1), "cos")], 2)
        x = np.array([0.13, 0.41])
        lam = -(2 * np.pi) ** 2 * (2 ** 2 + 1 ** 2)
        assert abs(f.laplacian(x) - lam * f(x)) < 1e-12

    def test_divergence_free_detection(self):
        # stream-function field (d_y phi, -d_x phi) is divergence free
        phi_y = TrigFunction.from_terms([(0.4, (1, 1), "cos")], 2).partial(1)
        phi_x = TrigFunction.from_terms([(0.4, (1, 1), "cos")], 2).partial(0)
        w = VectorField((phi_y, TrigFunction(-phi_x.coefs, phi_x.kvecs,
                                             phi_x.phases, 1.0)))
        assert w.divergence_free
        w2 = VectorField.from_terms(
            [[(0.3, (1, 0), "sin")], [(0.0, (0, 0), "cos")]], 2)
        assert not w2.divergence_free
        div = w2.divergence()
        x = np.array([0.2, 0.9])
        assert abs(div(x) - 0.3 * 2 * np.pi * np.cos(2 * np.pi * 0.2)) < 1e-12

    def test_constant_field_detection(self):
        w = VectorField.constant([0.3, -0.2])
        assert w.is_constant and w.divergence_free
        assert np.allclose(w.constant_value(), [0.3, -0.2])


class TestFlow:
    def test_constant_translation_exact(self):
        w = VectorField.constant([0.3, 0.4])
        y, ld = flow(w, 1.0, np.array([0.9, 0.9]))
        assert np.allclose(y, [0.2, 0.3], atol=1e-15)
        assert ld == 0.0

    def test_flow_inverse_composition(self):
        w = VectorField.from_terms(
            [[(0.2, (0, 1), "cos"), (0.1, (1, 0), "sin")],
             [(0.15, (1, 0), "sin")]], 2)
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 1, (20, 2))
        y, _ = flow(w, 1.0, x, step=1e-3)
        back, _ = flow(w, -1.0, y, step=1e-3)
        err = np.abs(back - x)
        err = np.minimum(err, 1.0 - err)
        assert err.max() < 1e-8

    def test_logdet_matches_finite_difference_jacobian(self):
        fields = [
            VectorField.from_terms(
                [[(0.2, (1, 0), "sin")], [(0.1, (0, 1), "cos")]], 2),
            VectorField.from_terms(
                [[(0.15, (0, 1), "cos"), (0.1, (1, 0), "sin")],
                 [(0.25, (1, 1), "sin")]], 2),
        ]
        rng = np.random.default_rng(8)
        for w in fields:
            for _ in range(5):
                x = rng.uniform(0, 1, 2)
                _, ld = flow(w, 0.7, x, step=1e-3)

                def push(z, w=w):
                    return flow(w, 0.7, z, step=1e-3)[0]

                J = central_diff_jacobian(push, x, h=1e-5)
                assert abs(ld - np.log(abs(np.linalg.det(J)))) < 1e-5


class TestSphereBackend:
    S2 = Manifold(kind="sphere2", dim=2)

    def test_walk_stays_on_sphere(self):
        rng = np.random.default_rng(9)
        x = sample_uniform(self.S2, (100,), rng)
        y = brownian_increment(self.S2, x, 0.2, rng)
        assert np.abs(np.linalg.norm(y, axis=-1) - 1.0).max() < 1e-12

    def test_heat_kernel_normalizes(self):
        # integrate over S^2 via the polar angle reduction
        north = np.array([0.0, 0.0, 1.0])

        def dens(theta):
            y = np.array([np.sin(theta), 0.0, np.cos(theta)])
            return heat_kernel_density(self.S2, north, y, 0.3) * \
                np.sin(theta) / 2.0

        val, _ = integrate.quad(dens, 0.0, np.pi, limit=100)
        assert abs(val - 1.0) < 1e-8

    def test_heat_kernel_symmetry(self):
        rng = np.random.default_rng(10)
        x = sample_uniform(self.S2, (), rng)
        y = sample_uniform(self.S2, (), rng)
        assert abs(heat_kernel_density(self.S2, x, y, 0.4) -
                   heat_kernel_density(self.S2, y, x, 0.4)) < 1e-12

    def test_distance(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        assert abs(distance(self.S2, a, b) - np.pi / 2) < 1e-12


def test_torus_distance_shortest_representative():
    x = np.array([0.05, 0.0])
    y = np.array([0.95, 0.0])
    assert abs(distance(T2, x, y) - 0.1) < 1e-15
