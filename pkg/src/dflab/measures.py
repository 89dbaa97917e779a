"""Poisson-Dirichlet weights, Dirichlet-Ferguson sampling and the
Monte-Carlo verifiers of its characterizing identities.

Weights are produced by stick breaking from i.i.d. Beta(1, beta) sticks and
reordered non-increasingly; locations are i.i.d. uniform.  The infinite
sequence is truncated at a configurable number of atoms; the leftover stick
mass is controlled in closed form, E[tail] = (beta / (1 + beta))^n, and
handled by one of three tail policies.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .geometry import Manifold, TrigFunction, sample_uniform
from .reports import Check, Report, abs_check, info_check, sigma_check

__all__ = [
    "WeightVector",
    "AtomicMeasure",
    "MeasureBatch",
    "sample_sticks",
    "stick_break",
    "reorder",
    "default_n_atoms",
    "sample_dirichlet_ferguson",
    "sample_df_batch",
    "MeckeProbe",
    "verify_mecke",
    "verify_sethuraman",
]

_SUM_TOL = 1e-12


@dataclass
class WeightVector:
    """Finite list of positive weights plus the truncated tail mass."""

    s: np.ndarray
    tail_mass: float = 0.0
    ordered: bool = False

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        total = float(self.s.sum()) + self.tail_mass
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"weights + tail sum to {total}, not 1")
        if np.any(self.s < 0) or self.tail_mass < -_SUM_TOL:
            raise ValueError("weights must be nonnegative")
        if self.ordered and np.any(np.diff(self.s) > 0):
            raise ValueError("ordered=True but weights increase")

    def __len__(self) -> int:
        return len(self.s)


@dataclass
class AtomicMeasure:
    """eta = sum_i s_i delta_{x_i} with ordered weights and distinct atoms."""

    weights: WeightVector
    locations: np.ndarray
    manifold: Manifold

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float)
        if self.locations.ndim != 2:
            raise ValueError("locations must be (n_atoms, dim)")
        if len(self.weights) != self.locations.shape[0]:
            raise ValueError("weights/locations length mismatch")
        # collisions have probability zero; finding one means a bug upstream
        uniq = np.unique(self.locations, axis=0)
        if uniq.shape[0] != self.locations.shape[0]:
            raise ValueError("duplicate atom locations detected; "
                             "refusing to merge coinciding atoms")

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    def to_json_dict(self) -> dict:
        return {
            "weights": [float(v) for v in self.weights.s],
            "tail": float(self.weights.tail_mass),
            "locations": [[float(c) for c in row] for row in self.locations],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json_dict(d: dict, manifold: Manifold) -> "AtomicMeasure":
        wv = WeightVector(np.array(d["weights"], dtype=float),
                          tail_mass=float(d.get("tail", 0.0)), ordered=False)
        return AtomicMeasure(wv, np.array(d["locations"], dtype=float),
                             manifold)

    def to_csv(self) -> str:
        """Flat variant: one row per atom (index, weight, coord_1..coord_d)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        d = self.locations.shape[1]
        writer.writerow(["index", "weight"] +
                        [f"coord_{j + 1}" for j in range(d)])
        for i, (wgt, loc) in enumerate(zip(self.weights.s, self.locations)):
            writer.writerow([i, repr(float(wgt))] +
                            [repr(float(c)) for c in loc])
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str, manifold: Manifold,
                 tail: float = 0.0) -> "AtomicMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        d = len(header) - 2
        w = np.array([float(r[1]) for r in body])
        locs = np.array([[float(c) for c in r[2:2 + d]] for r in body])
        return AtomicMeasure(WeightVector(w, tail_mass=tail), locs, manifold)


@dataclass
class MeasureBatch:
    """A vectorized batch of atomic measures sharing one truncation level.

    weights: (N, n) nonnegative, rows sorted non-increasingly;
    locations: (N, n, dim); tails: (N,).
    """

    weights: np.ndarray
    locations: np.ndarray
    tails: np.ndarray
    manifold: Manifold

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def measure(self, i: int) -> AtomicMeasure:
        wv = WeightVector(self.weights[i], tail_mass=float(self.tails[i]),
                          ordered=True)
        return AtomicMeasure(wv, self.locations[i], self.manifold)


# ---------------------------------------------------------------------------
# Stick breaking
# ---------------------------------------------------------------------------

def sample_sticks(beta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. Beta(1, beta) sticks via r = 1 - U^(1/beta)."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if n < 0:
        raise ValueError("n must be nonnegative")
    u = rng.random(n)
    return 1.0 - u ** (1.0 / beta)


def stick_break(r: np.ndarray) -> WeightVector:
    """Map sticks r to weights via the telescoping products
    s_k = r_k * prod_{i<k} (1 - r_i); the leftover mass prod_i (1 - r_i)
    becomes the tail."""
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) | (r > 1)):
        raise ValueError("sticks must lie in (0, 1]")
    rem = np.concatenate([[1.0], np.cumprod(1.0 - r)])
    return WeightVector(r * rem[:-1], tail_mass=float(rem[-1]), ordered=False)


def reorder(wv: WeightVector) -> WeightVector:
    """Sort weights non-increasingly; idempotent, multiset preserved."""
    s = np.sort(wv.s)[::-1]
    return WeightVector(s, tail_mass=wv.tail_mass, ordered=True)


def default_n_atoms(beta: float, tail_target: float = 1e-10) -> int:
    """Truncation level guaranteeing E[tail] <= tail_target."""
    return int(math.ceil(math.log(tail_target) / math.log(beta / (1.0 + beta))))


# ---------------------------------------------------------------------------
# Dirichlet-Ferguson sampling
# ---------------------------------------------------------------------------

def _stick_break_batch(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized stick breaking over leading axes; returns (weights, tail)."""
    one_minus = 1.0 - r
    rem = np.cumprod(one_minus, axis=-1)
    prev = np.concatenate(
        [np.ones(r.shape[:-1] + (1,)), rem[..., :-1]], axis=-1)
    return r * prev, rem[..., -1]


def _apply_tail_policy(weights: np.ndarray, tails: np.ndarray,
                       locations: np.ndarray, tail_policy: str,
                       manifold: Manifold, rng: np.random.Generator):
    """(weights, tails, locations) after the configured tail handling.

    renormalize: rescale weights to unit sum; lump: append one atom of mass
    tail at a fresh uniform location; keep: report sub-probability weights.
    """
    if tail_policy == "renormalize":
        weights = weights / weights.sum(axis=-1, keepdims=True)
        return weights, np.zeros_like(tails), locations
    if tail_policy == "lump":
        extra = sample_uniform(manifold, tails.shape, rng)
        weights = np.concatenate([weights, tails[..., None]], axis=-1)
        locations = np.concatenate([locations, extra[..., None, :]], axis=-2)
        order = np.argsort(-weights, axis=-1, kind="stable")
        weights = np.take_along_axis(weights, order, axis=-1)
        locations = np.take_along_axis(locations, order[..., None], axis=-2)
        return weights, np.zeros_like(tails), locations
    if tail_policy == "keep":
        return weights, tails, locations
    raise ValueError(f"unknown tail_policy {tail_policy!r}")


def sample_df_batch(manifold: Manifold, size: int, n_atoms: int | None,
                    rng: np.random.Generator,
                    tail_policy: str = "renormalize") -> MeasureBatch:
    """Vectorized sampler: `size` independent truncated DF draws."""
    if n_atoms is None:
        n_atoms = default_n_atoms(manifold.beta)
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    u = rng.random((size, n_atoms))
    sticks = 1.0 - u ** (1.0 / manifold.beta)
    weights, tails = _stick_break_batch(sticks)
    order = np.argsort(-weights, axis=-1, kind="stable")
    weights = np.take_along_axis(weights, order, axis=-1)
    locations = sample_uniform(manifold, (size, n_atoms), rng)
    weights, tails, locations = _apply_tail_policy(
        weights, tails, locations, tail_policy, manifold, rng)
    return MeasureBatch(weights, locations, tails, manifold)


def sample_dirichlet_ferguson(manifold: Manifold, n_atoms: int | None,
                              tail_policy: str,
                              rng: np.random.Generator) -> AtomicMeasure:
    """One truncated Dirichlet-Ferguson draw: PD(beta) weights at i.i.d.
    uniform locations."""
    batch = sample_df_batch(manifold, 1, n_atoms, rng, tail_policy)
    return batch.measure(0)


# ---------------------------------------------------------------------------
# Star-type evaluation helpers shared by the verifiers
# ---------------------------------------------------------------------------

def poly_eval(coeffs, x: np.ndarray) -> np.ndarray:
    """Evaluate a polynomial given lowest-degree-first coefficients."""
    out = np.zeros_like(np.asarray(x, dtype=float))
    for c in reversed(list(coeffs)):
        out = out * x + c
    return out


def star_poly(f: TrigFunction | None, rho_coeffs, weights: np.ndarray,
              locations: np.ndarray) -> np.ndarray:
    """sum_i s_i f(x_i) rho(s_i) over a batch: weights (N, n),
    locations (N, n, d)."""
    vals = np.ones_like(weights) if f is None else f(locations)
    if rho_coeffs is not None:
        vals = vals * poly_eval(rho_coeffs, weights)
    return (weights * vals).sum(axis=-1)


# ---------------------------------------------------------------------------
# Mecke identity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeckeProbe:
    """Product-form probe u(eta, x, r) = f(x) * rho(r) * (g-star eta).

    Any factor may be omitted (None means identically 1).  g carries its own
    weight profile g_rho so that the relocated measure (1-r) eta + r delta_x
    is probed through rescaled masses.
    """

    name: str
    f: TrigFunction | None = None
    rho_coeffs: tuple | None = None
    g: TrigFunction | None = None
    g_rho_coeffs: tuple | None = None

    def _g_star(self, weights, locations) -> np.ndarray:
        if self.g is None and self.g_rho_coeffs is None:
            return np.ones(weights.shape[:-1])
        return star_poly(self.g, self.g_rho_coeffs, weights, locations)

    def lhs(self, weights, locations) -> np.ndarray:
        """integral of u(eta, x, eta_x) d eta(x), one value per sample."""
        base = star_poly(self.f, self.rho_coeffs, weights, locations)
        return base * self._g_star(weights, locations)

    def rhs(self, weights, locations, x, r) -> np.ndarray:
        """u(eta^x_r, x, r) with fresh x ~ uniform and r ~ Beta(1, beta)."""
        out = np.ones_like(r)
        if self.f is not None:
            out = out * self.f(x)
        if self.rho_coeffs is not None:
            out = out * poly_eval(self.rho_coeffs, r)
        if self.g is not None or self.g_rho_coeffs is not None:
            w_scaled = weights * (1.0 - r)[:, None]
            gstar = star_poly(self.g, self.g_rho_coeffs, w_scaled, locations)
            atom = np.ones_like(r) if self.g is None else self.g(x)
            if self.g_rho_coeffs is not None:
                atom = atom * poly_eval(self.g_rho_coeffs, r)
            gstar = gstar + r * atom
            out = out * gstar
        return out


def default_mecke_basket(manifold: Manifold) -> list:
    """Five probes: two closed-form anchors and three generic products."""
    d, L = manifold.dim, manifold.side
    k1 = (1,) + (0,) * (d - 1)
    k2 = (0, 1) + (0,) * (d - 2) if d >= 2 else (2,)
    cos1 = TrigFunction.from_terms([(1.0, k1, "cos")], d, L)
    sin1 = TrigFunction.from_terms([(1.0, k1, "sin")], d, L)
    cos2 = TrigFunction.from_terms([(1.0, k2, "cos")], d, L)
    mixed = TrigFunction.from_terms([(0.7, k1, "sin"), (0.5, k2, "cos")], d, L)
    return [
        MeckeProbe("u=1"),
        MeckeProbe("u=f(x)", f=cos1),
        MeckeProbe("u=r", rho_coeffs=(0.0, 1.0)),
        MeckeProbe("u=f(x)r^2(g*eta)", f=cos1, rho_coeffs=(0.0, 0.0, 1.0),
                   g=cos2, g_rho_coeffs=(0.5, 0.5)),
        MeckeProbe("u=f(x)(1-r)(g*eta)", f=mixed, rho_coeffs=(1.0, -1.0),
                   g=sin1),
    ]


def verify_mecke(manifold: Manifold, u_basket: list | None, N: int,
                 rng: np.random.Generator, n_atoms: int | None = None,
                 chunk: int = 20000) -> Report:
    """Monte-Carlo check of the relocation identity characterizing the
    Dirichlet-Ferguson law: E int u(eta, x, eta_x) d eta(x) against
    E int int u((1-r) eta + r delta_x, x, r) dB_beta(r) dunif(x), with
    paired standard errors per probe."""
    if u_basket is None:
        u_basket = default_mecke_basket(manifold)
    if not u_basket:
        raise ValueError("empty probe basket")
    report = Report("verify-mecke", meta={"N": N, "beta": manifold.beta})
    # running sums: diff, diff^2, lhs, lhs^2, rhs, rhs^2
    sums = np.zeros((len(u_basket), 6))
    done = 0
    while done < N:
        m = min(chunk, N - done)
        batch = sample_df_batch(manifold, m, n_atoms, rng)
        x = sample_uniform(manifold, (m,), rng)
        r = sample_sticks(manifold.beta, m, rng)
        for j, probe in enumerate(u_basket):
            lhs = probe.lhs(batch.weights, batch.locations)
            rhs = probe.rhs(batch.weights, batch.locations, x, r)
            diff = lhs - rhs
            sums[j] += [diff.sum(), (diff * diff).sum(),
                        lhs.sum(), (lhs * lhs).sum(),
                        rhs.sum(), (rhs * rhs).sum()]
        done += m

    def _mean_se(total: float, total_sq: float) -> tuple[float, float]:
        mean = total / N
        var = max(total_sq / N - mean * mean, 0.0)
        return mean, math.sqrt(var / N)

    for j, probe in enumerate(u_basket):
        mean_diff, se_diff = _mean_se(sums[j, 0], sums[j, 1])
        mean_lhs, se_lhs = _mean_se(sums[j, 2], sums[j, 3])
        mean_rhs, se_rhs = _mean_se(sums[j, 4], sums[j, 5])
        if se_diff < 1e-13:
            report.add(abs_check(f"mecke[{probe.name}] lhs-rhs", mean_diff,
                                 0.0, 1e-12))
        else:
            report.add(sigma_check(f"mecke[{probe.name}] lhs-rhs", mean_diff,
                                   0.0, se_diff))
        report.add(info_check(f"mecke[{probe.name}] lhs", mean_lhs, se_lhs))
        report.add(info_check(f"mecke[{probe.name}] rhs", mean_rhs, se_rhs))
        if probe.name == "u=r":
            # closed form: E sum_i s_i^2 = E[r] = 1 / (1 + beta)
            target = 1.0 / (1.0 + manifold.beta)
            report.add(sigma_check("mecke[u=r] lhs vs 1/(1+beta)",
                                   mean_lhs, target, se_lhs))
            report.add(sigma_check("mecke[u=r] rhs vs 1/(1+beta)",
                                   mean_rhs, target, se_rhs))
    return report


# ---------------------------------------------------------------------------
# Sethuraman fixed point
# ---------------------------------------------------------------------------

def default_sethuraman_probes(manifold: Manifold) -> list:
    d, L = manifold.dim, manifold.side
    k1 = (1,) + (0,) * (d - 1)
    k2 = (0, 1) + (0,) * (d - 2) if d >= 2 else (2,)
    return [
        ("f=1", TrigFunction.constant(1.0, d, L)),
        ("f=cos1", TrigFunction.from_terms([(1.0, k1, "cos")], d, L)),
        ("f=sin1", TrigFunction.from_terms([(1.0, k1, "sin")], d, L)),
        ("f=cos2", TrigFunction.from_terms([(1.0, k2, "cos")], d, L)),
        ("f=cos1+sin2", TrigFunction.from_terms(
            [(1.0, k1, "cos"), (1.0, k2, "sin")], d, L)),
    ]


def verify_sethuraman(manifold: Manifold, probe_functions: list | None,
                      N: int, rng: np.random.Generator,
                      r_beta: float | None = None,
                      n_atoms: int | None = None, chunk: int = 20000,
                      sigmas: float = 3.0) -> Report:
    """Two-sample comparison of the laws of f*eta and f*eta^x_r.

    eta ~ DF, x ~ uniform, r ~ Beta(1, r_beta) with r_beta defaulting to the
    manifold's beta; passing a different r_beta turns the run into a
    negative control that must be detected.  Reports per-probe KS statistics
    and first-two-moment gaps with Monte-Carlo standard errors.
    """
    if probe_functions is None:
        probe_functions = default_sethuraman_probes(manifold)
    if not probe_functions:
        raise ValueError("empty probe basket")
    if r_beta is None:
        r_beta = manifold.beta
    report = Report("verify-sethuraman",
                    meta={"N": N, "beta": manifold.beta, "r_beta": r_beta})
    y_base = [[] for _ in probe_functions]
    y_reloc = [[] for _ in probe_functions]
    done = 0
    while done < N:
        m = min(chunk, N - done)
        b1 = sample_df_batch(manifold, m, n_atoms, rng)
        b2 = sample_df_batch(manifold, m, n_atoms, rng)
        x = sample_uniform(manifold, (m,), rng)
        r = sample_sticks(r_beta, m, rng)
        for j, (_, f) in enumerate(probe_functions):
            y_base[j].append((b1.weights * f(b1.locations)).sum(axis=-1))
            reloc = (1.0 - r) * (b2.weights * f(b2.locations)).sum(axis=-1)
            y_reloc[j].append(reloc + r * f(x))
        done += m
    negative_control = r_beta != manifold.beta
    max_z = 0.0
    for j, (name, _) in enumerate(probe_functions):
        a = np.concatenate(y_base[j])
        b = np.concatenate(y_reloc[j])
        for mom in (1, 2):
            ma, mb = (a ** mom).mean(), (b ** mom).mean()
            se = math.sqrt((a ** mom).var() / N + (b ** mom).var() / N)
            label = f"sethuraman[{name}] m{mom} gap"
            if se < 1e-13:
                # degenerate probe (f constant): both laws collapse
                report.add(abs_check(label, ma - mb, 0.0, 1e-12))
                continue
            max_z = max(max_z, abs(ma - mb) / se)
            if negative_control:
                report.add(info_check(label, ma - mb, se))
            else:
                report.add(sigma_check(label, ma - mb, 0.0, se,
                                       sigmas=sigmas))
        if a.std() > 0 and b.std() > 0:
            ks = stats.ks_2samp(a, b)
            report.add(info_check(f"sethuraman[{name}] ks-stat",
                                  float(ks.statistic)))
    report.meta["max_moment_z"] = max_z
    if negative_control:
        detected = max_z > 5.0
        report.add(Check("sethuraman negative control detected (>5 sigma)",
                         max_z, 0.0, 5.0, 5.0, "bound-sigma",
                         "pass" if detected else "fail"))
    return report
