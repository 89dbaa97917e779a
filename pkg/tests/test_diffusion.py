"""Particle-diffusion simulator: exact transitions, frozen weights, the
martingale problem, stationarity and the energy cross-check."""

import math

import numpy as np
import pytest
from scipy import stats

from dflab.cylinder import (CylinderFunction, Polynomial, TestFunction,
                            WeightProfile)
from dflab.diffusion import (dirichlet_energy, paths_to_csv, simulate, step,
                             step_batch, verify_ergodic_component,
                             verify_invariance, verify_martingale)
from dflab.geometry import Manifold, TrigFunction
from dflab.measures import (AtomicMeasure, WeightVector,
                            sample_dirichlet_ferguson)

T2 = Manifold(dim=2, beta=1.0)
RHO = WeightProfile((1.0,), eps=0.01, delta=0.02)


def u_cos():
    f = TrigFunction.from_terms([(1.0, (1, 0), "cos")], 2)
    return CylinderFunction.single(TestFunction(f, RHO))


def u_weight_only():
    prof = WeightProfile((0.0, 1.0), eps=0.02, delta=0.03)
    return CylinderFunction.single(
        TestFunction(TrigFunction.constant(1.0, 2), prof))


class TestStep:
    def test_rejects_nonpositive_dt(self):
        rng = np.random.default_rng(60)
        eta = sample_dirichlet_ferguson(T2, 10, "renormalize", rng)
        with pytest.raises(ValueError):
            step(eta, 0.0, rng)

    def test_weights_unchanged(self):
        rng = np.random.default_rng(61)
        eta = sample_dirichlet_ferguson(T2, 10, "renormalize", rng)
        out = step(eta, 0.1, rng)
        assert out.weights is eta.weights

    def test_single_atom_is_plain_brownian_motion(self):
        # Dirac embedding: one atom of full mass moves at speed 1
        rng = np.random.default_rng(62)
        t = 0.01
        n = 10 ** 4
        w = np.ones((n, 1))
        x0 = np.full((n, 1, 2), 0.5)
        x1 = step_batch(T2, w, x0, t, rng)
        disp = (x1 - x0 + 0.5) % 1.0 - 0.5
        var = disp.var(axis=(0, 1))
        se = math.sqrt(2.0) * t / math.sqrt(n)  # SD of the variance estimate
        assert np.all(np.abs(var - t) < 3 * se)

    def test_two_atom_time_change(self):
        # atom of mass r diffuses at clock t / r
        rng = np.random.default_rng(63)
        r, t = 0.25, 0.0025
        n = 10 ** 4
        w = np.tile([1 - r, r], (n, 1))
        x0 = np.full((n, 2, 2), 0.3)
        x1 = step_batch(T2, w, x0, t, rng)
        disp = (x1 - x0 + 0.5) % 1.0 - 0.5
        for atom, mass in ((0, 1 - r), (1, r)):
            var = disp[:, atom, :].var(axis=0)
            target = t / mass
            se = math.sqrt(2.0) * target / math.sqrt(n)
            assert np.all(np.abs(var - target) < 3 * se), (atom, var, target)

    def test_zero_weight_atom_frozen(self):
        rng = np.random.default_rng(64)
        w = np.array([[0.6, 0.4, 0.0]])
        x0 = np.array([[[0.1, 0.1], [0.2, 0.2], [0.9, 0.9]]])
        x1 = step_batch(T2, w, x0, 0.5, rng)
        assert np.array_equal(x1[0, 2], x0[0, 2])
        assert not np.array_equal(x1[0, 0], x0[0, 0])

    def test_metric_scaling_equals_time_change(self):
        scaled = Manifold(dim=2, metric_scale=3.0)
        w = np.tile([0.7, 0.3], (50, 1))
        x0 = np.tile([0.4, 0.6], (50, 2, 1))
        a = step_batch(scaled, w, x0, 0.3, np.random.default_rng(65))
        b = step_batch(T2, w, x0, 0.1, np.random.default_rng(65))
        assert np.array_equal(a, b)

    def test_markov_two_stage_matches_one_stage_in_law(self):
        rng = np.random.default_rng(66)
        n = 10 ** 4
        w = np.ones((n, 1))
        x0 = np.full((n, 1, 2), 0.5)
        two = step_batch(T2, w, step_batch(T2, w, x0, 0.004, rng), 0.006,
                         rng)
        one = step_batch(T2, w, x0, 0.010, rng)
        for j in range(2):
            ks = stats.ks_2samp(two[:, 0, j], one[:, 0, j]).statistic
            assert ks < 1.9 / math.sqrt(n / 2)


class TestSimulate:
    def test_path_structure(self):
        rng = np.random.default_rng(67)
        grid = np.linspace(0.0, 0.1, 6)
        paths = simulate(T2, "stationary", grid, 3, rng, n_atoms=12)
        assert len(paths) == 3
        for p in paths:
            assert p.locations.shape == (6, 12, 2)
            # weights frozen bitwise along the path (one array per path)
            assert p.state(0).weights.s is p.state(5).weights.s

    def test_fixed_initial_condition(self):
        rng = np.random.default_rng(68)
        eta = sample_dirichlet_ferguson(T2, 8, "renormalize", rng)
        paths = simulate(T2, eta, np.array([0.0, 0.05]), 2, rng)
        for p in paths:
            assert np.array_equal(p.locations[0], eta.locations)
            assert np.array_equal(p.weights, eta.weights.s)

    def test_csv_dump(self):
        rng = np.random.default_rng(69)
        paths = simulate(T2, "stationary", np.array([0.0, 0.01]), 2, rng,
                         n_atoms=4)
        text = paths_to_csv(paths)
        lines = text.splitlines()
        assert lines[0] == "path_id,t,atom_id,weight,coord_1,coord_2"
        assert len(lines) == 1 + 2 * 2 * 4

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            simulate(T2, "stationary", np.array([0.1, 0.2]), 1,
                     np.random.default_rng(0))


class TestMartingale:
    def test_constant_function_trivial(self):
        rng = np.random.default_rng(70)
        out = verify_martingale(CylinderFunction.constant(1.0), T2,
                                np.linspace(0, 0.05, 6), 50, rng)
        assert out.report.passed
        assert np.abs(out.mean_M).max() == 0.0
        assert out.realized_qv[-1] == 0.0 and out.predicted_qv[-1] == 0.0

    def test_weight_only_function_trivial(self):
        # masses are frozen, so weight-only observables never move
        rng = np.random.default_rng(71)
        out = verify_martingale(u_weight_only(), T2,
                                np.linspace(0, 0.05, 6), 50, rng)
        assert out.report.passed
        assert np.abs(out.mean_M).max() < 1e-14
        assert out.realized_qv[-1] < 1e-28

    def test_cosine_observable_martingale(self):
        rng = np.random.default_rng(72)
        grid = np.arange(0, 51) * 2e-3
        out = verify_martingale(u_cos(), T2, grid, 800, rng,
                                qv_rel_tol=0.05)
        assert out.report.passed, [c.to_dict() for c in out.report.checks
                                   if c.status == "fail"]
        # QV grows roughly linearly under stationarity
        mid = len(grid) // 2
        assert out.predicted_qv[-1] > out.predicted_qv[mid] > 0

    def test_requires_positive_threshold(self):
        f = TrigFunction.from_terms([(1.0, (1, 0), "cos")], 2)
        flat = CylinderFunction.single(TestFunction(f, WeightProfile()))
        with pytest.raises(ValueError):
            verify_martingale(flat, T2, np.array([0.0, 0.01]), 10,
                              np.random.default_rng(0))


class TestInvarianceAndErgodic:
    def test_stationary_moments_flat(self):
        rng = np.random.default_rng(73)
        rep = verify_invariance(T2, None, [0.0, 0.1, 0.5, 1.0], 2 * 10 ** 4,
                                rng)
        assert rep.passed, [c.to_dict() for c in rep.checks
                            if c.status == "fail"]

    def test_ergodic_component_marginals(self):
        rng = np.random.default_rng(74)
        s = np.array([0.4, 0.3, 0.2, 0.1])
        rep = verify_ergodic_component(T2, s, [0.05, 0.2], 2 * 10 ** 4, rng)
        assert rep.passed, [c.to_dict() for c in rep.checks
                            if c.status == "fail"]


class TestEnergy:
    def test_energy_matches_generator_pairing(self):
        # E[Gamma(u, u)] = -E[u L u] (symmetry of the form)
        rng = np.random.default_rng(75)
        F = Polynomial.from_terms([(1.0, (1, 1))], 2)
        rho = WeightProfile((1.0,), eps=0.05, delta=0.05)
        u = CylinderFunction(
            F, (TestFunction(TrigFunction.from_terms(
                [(1.0, (1, 0), "cos")], 2), rho),
                TestFunction(TrigFunction.from_terms(
                    [(1.0, (0, 1), "sin")], 2), rho)))
        rep = dirichlet_energy(u, T2, 5 * 10 ** 4, rng)
        assert rep.passed, [c.to_dict() for c in rep.checks
                            if c.status == "fail"]
