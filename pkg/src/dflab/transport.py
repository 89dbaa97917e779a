"""Exact quadratic optimal transport between atomic measures, the Varadhan
short-time probe and the Rademacher (Lipschitz difference-quotient) probe.

The ground distance is the torus distance (coordinatewise shortest wrapped
representative).  Plans are computed exactly with the dual-simplex
transportation LP; the basic solution's support is a forest, on which the
flows are re-solved by leaf elimination so that marginal feasibility holds
to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._mincostflow import ssp_transport
from .cylinder import FlowDiffeo
from .diffusion import step_batch
from .geometry import Manifold
from .measures import AtomicMeasure, sample_df_batch
from .reports import Check, Report, info_check

__all__ = [
    "TransportPlan",
    "ground_cost",
    "w2",
    "w2_arrays",
    "wasserstein_lower_bound",
    "varadhan_probe",
    "rademacher_probe",
]

_MASS_TOL = 1e-8
_DESK_SCALE = 10 ** 6
_SSP_CUTOFF = 4096  # above this the LP route wins


@dataclass
class TransportPlan:
    """An optimal coupling between two atomic measures."""

    entries: list                 # (i, j, mass) with mass > 0
    cost: float                   # total squared-distance transport cost
    w2: float                     # sqrt(cost)
    shape: tuple = (0, 0)
    meta: dict = field(default_factory=dict)

    def matrix(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for i, j, m in self.entries:
            out[i, j] = m
        return out

    def to_csv(self) -> str:
        import csv
        import io
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["i", "j", "mass", "cost_contrib"])
        cost_m = self.meta.get("cost_matrix")
        for i, j, m in self.entries:
            contrib = m * cost_m[i, j] if cost_m is not None else ""
            wr.writerow([i, j, repr(float(m)),
                         repr(float(contrib)) if contrib != "" else ""])
        return buf.getvalue()


def ground_cost(manifold: Manifold, x: np.ndarray, y: np.ndarray
                ) -> np.ndarray:
    """Pairwise squared torus distances, shape (m, n)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.abs(x[:, None, :] - y[None, :, :]) % manifold.side
    d = np.minimum(d, manifold.side - d)
    return manifold.metric_scale * (d ** 2).sum(axis=-1)


def _polish_forest(plan: np.ndarray, a: np.ndarray, b: np.ndarray
                   ) -> np.ndarray | None:
    """Re-solve the flows on the support of a basic solution by leaf
    elimination; returns None if the support is not a forest."""
    m, n = plan.shape
    support = plan > 1e-12 * max(a.max(), b.max())
    # make sure every row/col keeps at least one edge
    for i in range(m):
        if not support[i].any():
            support[i, np.argmax(plan[i])] = True
    for j in range(n):
        if not support[:, j].any():
            support[np.argmax(plan[:, j]), j] = True
    if support.sum() > m + n - 1:
        return None
    flows = np.zeros_like(plan)
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    sup = support.copy()
    for _ in range(m + n):
        row_deg = sup.sum(axis=1)
        col_deg = sup.sum(axis=0)
        done = True
        for i in np.where(row_deg == 1)[0]:
            j = int(np.argmax(sup[i]))
            flows[i, j] = ra[i]
            rb[j] -= ra[i]
            ra[i] = 0.0
            sup[i, j] = False
            done = False
        sup_t = sup
        col_deg = sup_t.sum(axis=0)
        for j in np.where(col_deg == 1)[0]:
            i = int(np.argmax(sup_t[:, j]))
            flows[i, j] = rb[j]
            ra[i] -= rb[j]
            rb[j] = 0.0
            sup[i, j] = False
            done = False
        if done:
            break
    if sup.any() or np.abs(ra).max(initial=0.0) > 1e-9 \
            or np.abs(rb).max(initial=0.0) > 1e-9:
        return None
    return np.maximum(flows, 0.0)


_ATOM_FLOOR = 1e-12


def w2_arrays(manifold: Manifold, a: np.ndarray, xa: np.ndarray,
              b: np.ndarray, xb: np.ndarray) -> TransportPlan:
    """Exact optimal plan between sum a_i delta_{xa_i} and
    sum b_j delta_{xb_j}.

    Atoms below 1e-12 mass (truncation dust) are excluded from the LP,
    whose presolve cannot tolerate them, and re-attached to their cheapest
    partner afterwards; this moves cost and marginals by at most the dust
    mass itself.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(a.sum() - b.sum()) > _MASS_TOL:
        raise ValueError("weight sums differ by more than 1e-8; "
                         "renormalize sub-probability inputs first")
    if len(a) * len(b) > _DESK_SCALE:
        raise ValueError("instance exceeds the desk-scale cap m*n <= 1e6")
    keep_a = a > _ATOM_FLOOR
    keep_b = b > _ATOM_FLOOR
    if not (keep_a.all() and keep_b.all()):
        full_cost = ground_cost(manifold, xa, xb)
        ia = np.where(keep_a)[0]
        ib = np.where(keep_b)[0]
        sub = w2_arrays(manifold, a[ia], xa[ia], b[ib], xb[ib])
        plan = np.zeros((len(a), len(b)))
        for i, j, mass in sub.entries:
            plan[ia[i], ib[j]] = mass
        for i in np.where(~keep_a)[0]:
            plan[i, np.argmin(full_cost[i])] += a[i]
        for j in np.where(~keep_b)[0]:
            plan[np.argmin(full_cost[:, j]), j] += b[j]
        total = float((plan * full_cost).sum())
        entries = [(int(i), int(j), float(plan[i, j]))
                   for i, j in zip(*np.nonzero(plan > 0))]
        return TransportPlan(entries, total, math.sqrt(max(total, 0.0)),
                             shape=plan.shape,
                             meta={"cost_matrix": full_cost})
    m, n = len(a), len(b)
    cost = ground_cost(manifold, xa, xb)
    if m == 1:
        plan = b[None, :].copy()
    elif n == 1:
        plan = a[:, None].copy()
    elif m * n <= _SSP_CUTOFF:
        plan, status = ssp_transport(a, b, cost)
        if status != 0:
            plan = _linprog_plan(a, b, cost)
    else:
        plan = _linprog_plan(a, b, cost)
    total = float((plan * cost).sum())
    entries = [(int(i), int(j), float(plan[i, j]))
               for i, j in zip(*np.nonzero(plan > 0))]
    return TransportPlan(entries, total, math.sqrt(max(total, 0.0)),
                         shape=(m, n), meta={"cost_matrix": cost})


def _linprog_plan(a: np.ndarray, b: np.ndarray, cost: np.ndarray
                  ) -> np.ndarray:
    """Dual-simplex transportation LP; the fallback/large-instance route.
    One redundant column constraint is dropped to keep full row rank."""
    m, n = cost.shape
    idx = np.arange(m * n)
    rows = np.concatenate([idx // n, m + idx % n])
    cols = np.concatenate([idx, idx])
    vals = np.ones(2 * m * n)
    keep = rows < m + n - 1
    A = sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(m + n - 1, m * n))
    rhs = np.concatenate([a, b[:-1]])
    # presolve misclassifies near-degenerate marginals as infeasible
    res = linprog(cost.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None),
                  method="highs-ds", options={"presolve": False})
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(m, n)
    polished = _polish_forest(plan, a, b)
    if polished is not None:
        plan = polished
    return plan


def w2(mu: AtomicMeasure, nu: AtomicMeasure) -> TransportPlan:
    """Exact W2 plan between two atomic measures on the same manifold."""
    return w2_arrays(mu.manifold, mu.weights.s, mu.locations,
                     nu.weights.s, nu.locations)


# ---------------------------------------------------------------------------
# Cheap Wasserstein lower bounds (used to prune ball-membership tests)
# ---------------------------------------------------------------------------

def _lip_witnesses(manifold: Manifold) -> list:
    """1-Lipschitz functions on the torus: rescaled first-harmonic waves."""
    L = manifold.side
    scale = L / (2.0 * np.pi * math.sqrt(manifold.metric_scale))

    def make(j, kind):
        if kind == "cos":
            return lambda x: scale * np.cos(2.0 * np.pi * x[..., j] / L)
        return lambda x: scale * np.sin(2.0 * np.pi * x[..., j] / L)

    out = []
    for j in range(manifold.dim):
        out.append(make(j, "cos"))
        out.append(make(j, "sin"))
    return out


def wasserstein_lower_bound(manifold: Manifold, a, xa, b, xb,
                            witnesses=None) -> float:
    """max over 1-Lipschitz witnesses g of |mu g - nu g| <= W1 <= W2."""
    if witnesses is None:
        witnesses = _lip_witnesses(manifold)
    best = 0.0
    for g in witnesses:
        gap = abs(float((a * g(xa)).sum() - (b * g(xb)).sum()))
        best = max(best, gap)
    return best


def _batch_witness_values(manifold: Manifold, weights: np.ndarray,
                          locations: np.ndarray) -> np.ndarray:
    """Witness integrals for a batch, shape (N, n_witness)."""
    vals = []
    for g in _lip_witnesses(manifold):
        vals.append((weights * g(locations)).sum(axis=-1))
    return np.stack(vals, axis=-1)


# ---------------------------------------------------------------------------
# Varadhan short-time probe
# ---------------------------------------------------------------------------

def _membership(manifold: Manifold, weights, locations, ref: AtomicMeasure,
                radius: float, ref_witness: np.ndarray,
                witness_vals: np.ndarray) -> np.ndarray:
    """Boolean: which batch measures lie in the W2-ball around ref.

    The Lipschitz lower bound prunes most candidates; survivors get the
    exact LP distance.
    """
    lb = np.abs(witness_vals - ref_witness[None, :]).max(axis=-1)
    out = np.zeros(weights.shape[0], dtype=bool)
    for i in np.where(lb <= radius)[0]:
        plan = w2_arrays(manifold, weights[i], locations[i],
                         ref.weights.s, ref.locations)
        out[i] = plan.w2 <= radius
    return out


def varadhan_probe(manifold: Manifold, ref1: AtomicMeasure, r1: float,
                   ref2: AtomicMeasure, r2: float, t_list: list, N: int,
                   rng: np.random.Generator, slack: float = 0.5,
                   n_atoms: int | None = None, pilot: int = 2000,
                   chunk: int = 10000, max_pairs: int = 50) -> Report:
    """One-sided short-time bound for the joint law of (eta_0, eta_t) under
    the stationary start: t log p_t(A1, A2) <= -0.5 * (1 - slack) * d^2 with
    A_i W2-balls and d estimated as the minimum sampled-pair distance.

    Zero hits at the largest t yield an inconclusive report, not a failure.
    """
    t_list = sorted(float(t) for t in t_list)
    report = Report("varadhan", meta={
        "N": N, "t_list": t_list, "r1": r1, "r2": r2, "slack": slack,
        "beta": manifold.beta})
    wit1 = _batch_witness_values(
        manifold, ref1.weights.s[None], ref1.locations[None])[0]
    wit2 = _batch_witness_values(
        manifold, ref2.weights.s[None], ref2.locations[None])[0]

    # pilot: both balls need positive sampled mass
    bp = sample_df_batch(manifold, pilot, n_atoms, rng)
    wv = _batch_witness_values(manifold, bp.weights, bp.locations)
    in1 = _membership(manifold, bp.weights, bp.locations, ref1, r1, wit1, wv)
    in2 = _membership(manifold, bp.weights, bp.locations, ref2, r2, wit2, wv)
    report.meta["pilot_mass1"] = float(in1.mean())
    report.meta["pilot_mass2"] = float(in2.mean())
    if not in1.any() or not in2.any():
        report.add(Check("varadhan pilot mass", 0.0, 0.0, 0.0, 0.0, "none",
                         "inconclusive"))
        return report

    # estimate the inter-ball distance from sampled pairs
    m1 = [(bp.weights[i], bp.locations[i])
          for i in np.where(in1)[0][:max_pairs]]
    m2 = [(bp.weights[i], bp.locations[i])
          for i in np.where(in2)[0][:max_pairs]]
    d_hat = np.inf
    for wa, xa in m1:
        for wb, xb in m2:
            lb = wasserstein_lower_bound(manifold, wa, xa, wb, xb)
            if lb >= d_hat:
                continue
            d_hat = min(d_hat,
                        w2_arrays(manifold, wa, xa, wb, xb).w2)
    report.meta["d_hat"] = float(d_hat)
    bound = -0.5 * (1.0 - slack) * d_hat ** 2

    hits = np.zeros(len(t_list), dtype=int)
    n_start = 0
    done = 0
    while done < N:
        m = min(chunk, N - done)
        b = sample_df_batch(manifold, m, n_atoms, rng)
        wv = _batch_witness_values(manifold, b.weights, b.locations)
        in1 = _membership(manifold, b.weights, b.locations, ref1, r1, wit1,
                          wv)
        n_start += int(in1.sum())
        w_sel = b.weights[in1]
        x_sel = b.locations[in1]
        prev_t = 0.0
        for ti, t in enumerate(t_list):
            if len(w_sel) == 0:
                break
            x_sel = step_batch(manifold, w_sel, x_sel, t - prev_t, rng)
            prev_t = t
            wv_t = _batch_witness_values(manifold, w_sel, x_sel)
            in2 = _membership(manifold, w_sel, x_sel, ref2, r2, wit2, wv_t)
            hits[ti] += int(in2.sum())
        done += m

    rows = []
    for ti, t in enumerate(t_list):
        p_hat = float(hits[ti]) / N
        se = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / N)
        if hits[ti] == 0:
            rows.append({"t": t, "p_hat": 0.0, "stderr": se,
                         "t_log_p": None, "bound": bound})
            status = "inconclusive"
            report.add(Check(f"varadhan t={t:g} (no hits)", 0.0, se, bound,
                             3.0, "bound-sigma", status))
            continue
        t_log_p = t * math.log(p_hat)
        band = 3.0 * t * se / p_hat
        rows.append({"t": t, "p_hat": p_hat, "stderr": se,
                     "t_log_p": t_log_p, "bound": bound})
        ok = t_log_p <= bound + band
        report.add(Check(f"varadhan t={t:g} t*log(p) <= bound", t_log_p,
                         t * se / p_hat, bound, 3.0, "bound-sigma",
                         "pass" if ok else "fail"))
    report.meta["rows"] = rows
    report.meta["n_start_hits"] = n_start
    return report


# ---------------------------------------------------------------------------
# Rademacher probe
# ---------------------------------------------------------------------------

def rademacher_probe(manifold: Manifold, mu_ref: AtomicMeasure,
                     w_basket: list, N: int, rng: np.random.Generator,
                     h: float = 1e-3, tol_factor: float = 10.0,
                     n_atoms: int | None = None) -> Report:
    """Difference quotients of the 1-Lipschitz map u = W2(., mu_ref) along
    flow directions stay below the field's L^2(eta) norm:
    |u(flow_h eta) - u(eta)| / h <= ||w||_{L^2(eta)} (1 + tol_factor * h).
    """
    report = Report("rademacher", meta={"N": N, "h": h,
                                        "tol_factor": tol_factor,
                                        "beta": manifold.beta})
    b = sample_df_batch(manifold, N, n_atoms, rng)
    for wi, w in enumerate(w_basket):
        psi = FlowDiffeo(w, h, step=min(1e-3, h))
        worst = -np.inf
        quotients = np.zeros(N)
        norms = np.zeros(N)
        for i in range(N):
            wts, locs = b.weights[i], b.locations[i]
            u0 = w2_arrays(manifold, wts, locs,
                           mu_ref.weights.s, mu_ref.locations).w2
            moved = psi.apply(locs)
            u1 = w2_arrays(manifold, wts, moved,
                           mu_ref.weights.s, mu_ref.locations).w2
            q = abs(u1 - u0) / h
            wnorm = math.sqrt(float(
                (wts * (w(locs) ** 2).sum(axis=-1)).sum()))
            quotients[i] = q
            norms[i] = wnorm
            if wnorm > 0:
                worst = max(worst, q / wnorm)
        bound = 1.0 + tol_factor * h
        report.add(Check(f"rademacher field{wi} max quotient/norm", worst,
                         0.0, bound, 0.0, "abs",
                         "pass" if worst <= bound else "fail"))
        report.add(info_check(f"rademacher field{wi} mean quotient",
                              float(quotients.mean())))
        report.add(info_check(f"rademacher field{wi} mean field norm",
                              float(norms.mean())))
    return report
