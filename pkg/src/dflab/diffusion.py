"""Pathwise simulator of the measure-valued diffusion and its statistical
verifiers.

The process moves the atoms of eta = sum_i s_i delta_{x_i} as independent
Brownian motions time-changed by the inverse masses: atom i run for
elapsed time dt advances by a Brownian increment at time dt / s_i.  Masses
never move.  On the flat torus each transition is exact, so the time grid
only controls the accuracy of observables integrated along paths.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .cylinder import (CylinderFunction, carre_du_champ_batch,
                       generator_batch, qv_density_batch)
from .geometry import Manifold, TrigFunction, sample_uniform
from .measures import (AtomicMeasure, MeasureBatch, WeightVector,
                       sample_df_batch)
from .reports import Report, abs_check, bound_check, info_check, sigma_check

__all__ = [
    "SimulationPath",
    "MartingaleReport",
    "step",
    "step_batch",
    "simulate",
    "paths_to_csv",
    "verify_martingale",
    "verify_invariance",
    "verify_ergodic_component",
    "dirichlet_energy",
]


@dataclass
class SimulationPath:
    """One trajectory: weights are frozen, locations evolve.

    initial_weights is a pre-simulation snapshot kept so that the frozen-
    masses invariant can be asserted bitwise after the fact.
    """

    t_grid: np.ndarray            # (T,)
    weights: np.ndarray           # (n,)
    locations: np.ndarray         # (T, n, d)
    manifold: Manifold
    initial_weights: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.initial_weights is None:
            self.initial_weights = np.array(self.weights, copy=True)

    def state(self, k: int) -> AtomicMeasure:
        return AtomicMeasure(WeightVector(self.weights, ordered=False),
                             self.locations[k], self.manifold)

    @property
    def states(self) -> list:
        return [self.state(k) for k in range(len(self.t_grid))]


@dataclass
class MartingaleReport:
    """Per-time martingale statistics plus the derived checks."""

    t_grid: np.ndarray
    mean_M: np.ndarray
    se_M: np.ndarray
    realized_qv: np.ndarray       # E[sum (Delta M)^2] up to each time
    predicted_qv: np.ndarray      # E[int <grad u, grad u> ds] up to each time
    se_realized_qv: np.ndarray = None
    report: Report = None


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------

def step_batch(manifold: Manifold, weights: np.ndarray, locations: np.ndarray,
               dt: float, rng: np.random.Generator) -> np.ndarray:
    """Advance every atom of every path by elapsed time dt (exact on the
    torus).  Atoms of zero weight stay frozen."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    alive = weights > 0.0
    safe_w = np.where(alive, weights, 1.0)
    std = np.sqrt(dt / (safe_w * manifold.metric_scale))
    noise = rng.normal(size=locations.shape) * std[..., None]
    noise = np.where(alive[..., None], noise, 0.0)
    return manifold.wrap(locations + noise)


def step(state: AtomicMeasure, dt: float, rng: np.random.Generator
         ) -> AtomicMeasure:
    """One exact transition of a single atomic measure."""
    new_locs = step_batch(state.manifold, state.weights.s, state.locations,
                          dt, rng)
    return AtomicMeasure(state.weights, new_locs, state.manifold)


def _initial_batch(manifold: Manifold, initial, n_paths: int,
                   n_atoms: int | None, rng: np.random.Generator
                   ) -> tuple[np.ndarray, np.ndarray]:
    """(weights, locations) arrays for n_paths starting points."""
    if isinstance(initial, str) and initial == "stationary":
        b = sample_df_batch(manifold, n_paths, n_atoms, rng)
        return b.weights, b.locations
    if isinstance(initial, AtomicMeasure):
        w = np.broadcast_to(initial.weights.s,
                            (n_paths,) + initial.weights.s.shape).copy()
        x = np.broadcast_to(initial.locations,
                            (n_paths,) + initial.locations.shape).copy()
        return w, x
    raise ValueError("initial must be 'stationary' or an AtomicMeasure")


def simulate(manifold: Manifold, initial, t_grid: np.ndarray, n_paths: int,
             rng: np.random.Generator, n_atoms: int | None = None
             ) -> list:
    """Simulate n_paths trajectories observed on t_grid, storing states.

    When initial == "stationary" each path draws its own starting measure
    from the Dirichlet-Ferguson law.  Intended for modest path counts; the
    verifiers below stream instead of storing.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and increase")
    weights, locs = _initial_batch(manifold, initial, n_paths, n_atoms, rng)
    snapshot = weights.copy()
    frames = [locs.copy()]
    for k in range(1, len(t_grid)):
        locs = step_batch(manifold, weights, locs, t_grid[k] - t_grid[k - 1],
                          rng)
        frames.append(locs.copy())
    stacked = np.stack(frames, axis=1)  # (P, T, n, d)
    return [SimulationPath(t_grid, weights[p], stacked[p], manifold,
                           initial_weights=snapshot[p])
            for p in range(n_paths)]


def paths_to_csv(paths: list) -> str:
    """Dump trajectories: one row per (path, time, atom)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    d = paths[0].locations.shape[-1]
    writer.writerow(["path_id", "t", "atom_id", "weight"] +
                    [f"coord_{j + 1}" for j in range(d)])
    for pid, path in enumerate(paths):
        for k, t in enumerate(path.t_grid):
            for a in range(path.locations.shape[1]):
                writer.writerow(
                    [pid, repr(float(t)), a, repr(float(path.weights[a]))] +
                    [repr(float(c)) for c in path.locations[k, a]])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Martingale problem
# ---------------------------------------------------------------------------

def verify_martingale(u: CylinderFunction, manifold: Manifold,
                      t_grid: np.ndarray, n_paths: int,
                      rng: np.random.Generator,
                      n_atoms: int | None = None,
                      ortho_basket: list | None = None,
                      qv_rel_tol: float = 0.05,
                      check_stride: int = 1) -> MartingaleReport:
    """Check that M_t = u(eta_t) - u(eta_0) - int_0^t L u(eta_s) ds is a
    centered martingale with quadratic variation int <grad u, grad u> ds.

    Streams over the grid: the time integrals use the trapezoid rule, the
    realized quadratic variation accumulates squared martingale increments.
    The stationary start (eta_0 ~ DF) satisfies the absolute-continuity
    requirement on the initial law.
    """
    if u.threshold <= 0:
        raise ValueError("u needs a positive vanishing threshold")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and increase")
    T = len(t_grid)
    weights, locs = _initial_batch(manifold, "stationary", n_paths, n_atoms,
                                   rng)
    u_prev = u.value_batch(weights, locs)
    L_prev = generator_batch(u, weights, locs)
    q_prev = qv_density_batch(u, weights, locs)
    u0 = u_prev.copy()
    M = np.zeros(n_paths)
    rqv = np.zeros(n_paths)
    pqv = np.zeros(n_paths)
    mean_M = np.zeros(T)
    se_M = np.zeros(T)
    mean_rqv = np.zeros(T)
    mean_pqv = np.zeros(T)
    se_rqv = np.zeros(T)
    mid = T // 2
    g_mid = None
    M_mid = None
    for k in range(1, T):
        dt = t_grid[k] - t_grid[k - 1]
        locs = step_batch(manifold, weights, locs, dt, rng)
        u_new = u.value_batch(weights, locs)
        L_new = generator_batch(u, weights, locs)
        q_new = qv_density_batch(u, weights, locs)
        dM = u_new - u_prev - 0.5 * (L_prev + L_new) * dt
        M += dM
        rqv += dM * dM
        pqv += 0.5 * (q_prev + q_new) * dt
        u_prev, L_prev, q_prev = u_new, L_new, q_new
        mean_M[k] = M.mean()
        se_M[k] = M.std(ddof=1) / math.sqrt(n_paths)
        mean_rqv[k] = rqv.mean()
        mean_pqv[k] = pqv.mean()
        se_rqv[k] = rqv.std(ddof=1) / math.sqrt(n_paths)
        if k == mid:
            M_mid = M.copy()
            if ortho_basket is None:
                ortho_basket = [u]
            g_mid = [g.value_batch(weights, locs) for g in ortho_basket]
    report = Report("verify-martingale",
                    meta={"n_paths": n_paths, "horizon": float(t_grid[-1]),
                          "beta": manifold.beta, "threshold": u.threshold})
    for k in range(1, T, check_stride):
        report.add(sigma_check(f"martingale E[M_t] t={t_grid[k]:.6g}",
                               mean_M[k], 0.0, max(se_M[k], 1e-300)))
    # orthogonality of increments against adapted observables
    if M_mid is not None:
        for j, g_vals in enumerate(g_mid):
            prod = (M - M_mid) * g_vals
            se = prod.std(ddof=1) / math.sqrt(n_paths)
            report.add(sigma_check(f"martingale E[(M_T-M_s) g{j}(eta_s)]",
                                   prod.mean(), 0.0, max(se, 1e-300)))
    # realized vs predicted quadratic variation at the horizon
    diff = rqv - pqv
    se_diff = diff.std(ddof=1) / math.sqrt(n_paths)
    denom = mean_pqv[-1]
    rel_err = abs(mean_rqv[-1] - mean_pqv[-1]) / denom if denom > 0 else 0.0
    report.add(abs_check("martingale QV relative error", rel_err, 0.0,
                         qv_rel_tol))
    report.add(info_check("martingale realized QV", mean_rqv[-1],
                          rqv.std(ddof=1) / math.sqrt(n_paths)))
    report.add(info_check("martingale predicted QV", mean_pqv[-1],
                          pqv.std(ddof=1) / math.sqrt(n_paths)))
    report.add(info_check("martingale QV diff stderr", se_diff))
    return MartingaleReport(t_grid, mean_M, se_M, mean_rqv, mean_pqv,
                            se_rqv, report)


# ---------------------------------------------------------------------------
# Invariance and ergodic components
# ---------------------------------------------------------------------------

def default_invariance_probes(manifold: Manifold) -> list:
    d, L = manifold.dim, manifold.side
    k1 = (1,) + (0,) * (d - 1)
    k2 = (0, 1) + (0,) * (d - 2) if d >= 2 else (2,)
    return [
        ("cos1", TrigFunction.from_terms([(1.0, k1, "cos")], d, L)),
        ("sin2", TrigFunction.from_terms([(1.0, k2, "sin")], d, L)),
        ("cos1cos2", TrigFunction.from_terms(
            [(0.5, k1, "cos"), (0.5, k2, "cos")], d, L)),
    ]


def verify_invariance(manifold: Manifold, probes: list | None,
                      t_list: list, N: int, rng: np.random.Generator,
                      n_atoms: int | None = None) -> Report:
    """Stationarity of the Dirichlet-Ferguson law under the diffusion:
    starting from eta_0 ~ DF, the first two moments of probe integrals stay
    flat in t (differences vs t = 0 paired along paths).  Weight vectors are
    also asserted frozen, bitwise."""
    if probes is None:
        probes = default_invariance_probes(manifold)
    t_list = sorted(float(t) for t in t_list)
    if t_list[0] != 0.0:
        t_list = [0.0] + t_list
    b = sample_df_batch(manifold, N, n_atoms, rng)
    weights0 = b.weights.copy()
    locs = b.locations
    report = Report("verify-invariance",
                    meta={"N": N, "t_list": t_list, "beta": manifold.beta})
    base = {name: (b.weights * f(locs)).sum(axis=-1) for name, f in probes}
    weights_frozen = True
    prev_t = 0.0
    for t in t_list[1:]:
        locs = step_batch(manifold, b.weights, locs, t - prev_t, rng)
        prev_t = t
        weights_frozen = weights_frozen and bool(
            np.array_equal(b.weights, weights0))
        for name, f in probes:
            vals = (b.weights * f(locs)).sum(axis=-1)
            for mom in (1, 2):
                d = vals ** mom - base[name] ** mom
                se = d.std(ddof=1) / math.sqrt(N)
                report.add(sigma_check(
                    f"invariance[{name}] m{mom} t={t:g} vs t=0",
                    d.mean(), 0.0, max(se, 1e-300)))
    report.add(abs_check("invariance weights frozen bitwise",
                         1.0 if weights_frozen else 0.0, 1.0, 0.0))
    return report


def verify_ergodic_component(manifold: Manifold, s: np.ndarray,
                             t_list: list, N: int,
                             rng: np.random.Generator,
                             windows: list | None = None) -> Report:
    """Start from the ergodic component with frozen weights s and i.i.d.
    uniform locations; E[eta_t A] must equal the normalized volume of A for
    window sets A at every t, and the weight statistics are conserved
    exactly."""
    s = np.asarray(s, dtype=float)
    if windows is None:
        windows = [((0.0, 0.5),) * manifold.dim,
                   ((0.25, 0.75),) * manifold.dim]
    weights = np.broadcast_to(s, (N,) + s.shape).copy()
    locs = sample_uniform(manifold, (N, len(s)), rng)
    report = Report("verify-ergodic",
                    meta={"N": N, "weights": [float(v) for v in s]})

    def window_mass(locs: np.ndarray, win) -> np.ndarray:
        inside = np.ones(locs.shape[:-1], dtype=bool)
        for j, (a, bnd) in enumerate(win):
            inside &= (locs[..., j] >= a) & (locs[..., j] < bnd)
        return (weights * inside).sum(axis=-1)

    prev_t = 0.0
    for t in sorted(float(v) for v in t_list):
        if t > prev_t:
            locs = step_batch(manifold, weights, locs, t - prev_t, rng)
            prev_t = t
        for wi, win in enumerate(windows):
            vol = np.prod([(bnd - a) / manifold.side for a, bnd in win])
            mass = window_mass(locs, win)
            se = mass.std(ddof=1) / math.sqrt(N)
            report.add(sigma_check(f"ergodic window{wi} t={t:g}",
                                   mass.mean(), float(vol),
                                   max(se, 1e-300)))
    report.add(abs_check("ergodic weights conserved",
                         float(np.max(np.abs(weights - s))), 0.0, 0.0))
    return report


def dirichlet_energy(u: CylinderFunction, manifold: Manifold, N: int,
                     rng: np.random.Generator, n_atoms: int | None = None,
                     chunk: int = 20000) -> Report:
    """Monte-Carlo Dirichlet energy E[Gamma(u, u)] under the DF law,
    cross-checked against -E[u L u] on the same samples."""
    acc = np.zeros(6)  # gamma, gamma^2, ulu, ulu^2, diff, diff^2
    done = 0
    while done < N:
        m = min(chunk, N - done)
        b = sample_df_batch(manifold, m, n_atoms, rng)
        g = carre_du_champ_batch(u, u, b.weights, b.locations)
        ulu = u.value_batch(b.weights, b.locations) * generator_batch(
            u, b.weights, b.locations)
        d = g + ulu
        acc += [g.sum(), (g * g).sum(), ulu.sum(), (ulu * ulu).sum(),
                d.sum(), (d * d).sum()]
        done += m
    report = Report("energy", meta={"N": N, "beta": manifold.beta})

    def _mean_se(i: int) -> tuple[float, float]:
        mean = acc[i] / N
        var = max(acc[i + 1] / N - mean * mean, 0.0)
        return mean, math.sqrt(var / N)

    mean_g, se_g = _mean_se(0)
    mean_d, se_d = _mean_se(4)
    report.add(info_check("energy E[Gamma(u,u)]", mean_g, se_g))
    report.add(sigma_check("energy E[Gamma(u,u)] + E[u L u]", mean_d, 0.0,
                           max(se_d, 1e-300)))
    return report
