"""Cylinder functions u = F(f1-star, ..., fk-star) on the space of
probability measures, and the associated exact differential calculus:
star-evaluation, per-atom gradients, carre du champ, generator, drift
functional and Radon-Nikodym derivatives along flows.

Every object here is symbolic: F is a multivariate polynomial, the spatial
parts are trigonometric, and the weight profiles are polynomials with a C^1
smoothstep cutoff, so all derivatives used by the formulas are exact.  Only
the values of the weight profiles ever enter; no profile derivative appears
in any formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Manifold, TrigFunction, VectorField, flow
from .measures import AtomicMeasure, MeasureBatch, sample_df_batch
from .reports import Report, abs_check, info_check, sigma_check

__all__ = [
    "WeightProfile",
    "TestFunction",
    "Polynomial",
    "CylinderFunction",
    "FlowDiffeo",
    "star",
    "grad",
    "directional_derivative",
    "carre_du_champ",
    "qv_density",
    "generator",
    "drift_B",
    "rn_derivative",
    "verify_ibp",
    "verify_ibp_basket",
    "verify_pqi",
    "verify_B_martingale",
]


# ---------------------------------------------------------------------------
# Weight profiles and test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightProfile:
    """rho(s) = poly(s) * smoothstep((s - eps)/delta).

    rho vanishes identically on [0, eps] and equals the bare polynomial for
    s >= eps + delta; the cubic smoothstep ramp in between keeps rho C^1.
    eps == delta == 0 yields the bare polynomial (the profile of potential
    energies, rho == poly).
    """

    poly: tuple = (1.0,)
    eps: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.eps < 0 or self.delta < 0:
            raise ValueError("eps and delta must be nonnegative")
        if self.eps > 0 and self.delta == 0:
            raise ValueError("a positive cutoff needs a positive ramp width")

    def __call__(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for c in reversed(self.poly):
            out = out * s + c
        if self.delta > 0:
            t = np.clip((s - self.eps) / self.delta, 0.0, 1.0)
            out = out * (t * t * (3.0 - 2.0 * t))
        return out

    @property
    def threshold(self) -> float:
        """Vanishing threshold: rho == 0 on [0, threshold]."""
        return self.eps

    @property
    def is_one(self) -> bool:
        return self.eps == 0 and self.delta == 0 and tuple(self.poly) == (1.0,)

    def value_at_zero_plus(self) -> float:
        if self.delta > 0:
            return 0.0
        return float(self.poly[0]) if self.eps == 0 else 0.0

    def to_config(self) -> dict:
        return {"poly": list(self.poly), "eps": self.eps, "delta": self.delta}

    @staticmethod
    def from_config(d: dict) -> "WeightProfile":
        return WeightProfile(tuple(float(c) for c in d.get("poly", [1.0])),
                             float(d.get("eps", 0.0)),
                             float(d.get("delta", 0.0)))


@dataclass(frozen=True)
class TestFunction:
    """fhat = f (x) rho: a spatial trig function times a weight profile."""

    __test__ = False  # not a pytest case despite the name

    f: TrigFunction
    rho: WeightProfile = WeightProfile()

    @property
    def threshold(self) -> float:
        return self.rho.threshold

    @property
    def spatially_constant(self) -> bool:
        """True for the weight-only class (f constant, so grad f = lap f = 0)."""
        return bool((self.f.kvecs == 0).all())

    def star_batch(self, weights: np.ndarray, locations: np.ndarray
                   ) -> np.ndarray:
        """sum_i s_i f(x_i) rho(s_i); weights (..., n), locations (..., n, d)."""
        return (weights * self.f(locations) * self.rho(weights)).sum(axis=-1)

    @staticmethod
    def from_config(d: dict, manifold: Manifold) -> "TestFunction":
        f = TrigFunction.from_terms(
            [(t[0], t[1], t[2]) for t in d["f"]], manifold.dim, manifold.side)
        return TestFunction(f, WeightProfile.from_config(d.get("rho", {})))


def star(fhat: TestFunction, eta: AtomicMeasure) -> float:
    """Star-evaluation of a test function against an atomic measure."""
    return float(fhat.star_batch(eta.weights.s, eta.locations))


# ---------------------------------------------------------------------------
# Multivariate polynomials F and cylinder functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Polynomial:
    """F(v) = sum_t c_t * prod_j v_j^{e_tj} in k variables."""

    terms: tuple
    k: int

    @staticmethod
    def from_terms(terms, k: int) -> "Polynomial":
        canon = []
        for c, exps in terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != k:
                raise ValueError("exponent tuple length mismatch")
            if any(e < 0 for e in exps):
                raise ValueError("exponents must be nonnegative")
            canon.append((float(c), exps))
        return Polynomial(tuple(canon), k)

    @staticmethod
    def identity() -> "Polynomial":
        return Polynomial(((1.0, (1,)),), 1)

    @staticmethod
    def constant(value: float, k: int = 1) -> "Polynomial":
        return Polynomial(((float(value), (0,) * k),), k)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape[:-1])
        for c, exps in self.terms:
            term = np.full(v.shape[:-1], c)
            for j, e in enumerate(exps):
                if e:
                    term = term * v[..., j] ** e
            out = out + term
        return out

    def partial(self, i: int) -> "Polynomial":
        terms = []
        for c, exps in self.terms:
            if exps[i] > 0:
                new = list(exps)
                new[i] -= 1
                terms.append((c * exps[i], tuple(new)))
        if not terms:
            terms = [(0.0, (0,) * self.k)]
        return Polynomial(tuple(terms), self.k)


@dataclass(frozen=True)
class CylinderFunction:
    """u(eta) = F(f1-star(eta), ..., fk-star(eta)) with exact partials."""

    F: Polynomial
    fhats: tuple

    def __post_init__(self):
        if len(self.fhats) != self.F.k or self.F.k < 1:
            raise ValueError("F arity must match the number of test functions")

    @staticmethod
    def single(fhat: TestFunction) -> "CylinderFunction":
        return CylinderFunction(Polynomial.identity(), (fhat,))

    @staticmethod
    def constant(value: float, dim: int = 2) -> "CylinderFunction":
        # the profile is never evaluated through F, but its cutoff gives the
        # constant a positive vanishing threshold (it lies in every class)
        one = TestFunction(TrigFunction.constant(1.0, dim),
                           WeightProfile((1.0,), eps=0.5, delta=0.25))
        return CylinderFunction(Polynomial.constant(value), (one,))

    @property
    def k(self) -> int:
        return self.F.k

    @property
    def threshold(self) -> float:
        """Vanishing threshold eps_u (0 for weight-only components)."""
        return min(fh.threshold for fh in self.fhats)

    def star_values(self, weights: np.ndarray, locations: np.ndarray
                    ) -> np.ndarray:
        return np.stack([fh.star_batch(weights, locations)
                         for fh in self.fhats], axis=-1)

    def value_batch(self, weights: np.ndarray, locations: np.ndarray
                    ) -> np.ndarray:
        return self.F(self.star_values(weights, locations))

    def __call__(self, eta: AtomicMeasure) -> float:
        return float(self.value_batch(eta.weights.s, eta.locations))

    def grad_atoms(self, weights: np.ndarray, locations: np.ndarray
                   ) -> np.ndarray:
        """Per-atom tangent vectors of the gradient, shape (..., n, d):
        grad u(eta)(x_i) = sum_j dF_j(fstar eta) rho_j(s_i) grad f_j(x_i)."""
        v = self.star_values(weights, locations)
        out = np.zeros(locations.shape)
        for j, fh in enumerate(self.fhats):
            dF = self.F.partial(j)(v)
            out = out + (dF[..., None] * fh.rho(weights))[..., None] \
                * fh.f.gradient(locations)
        return out

    @staticmethod
    def from_config(d: dict, manifold: Manifold) -> "CylinderFunction":
        fhats = tuple(TestFunction.from_config(fd, manifold)
                      for fd in d["fhats"])
        F = Polynomial.from_terms([(t[0], t[1]) for t in d["F"]], len(fhats))
        return CylinderFunction(F, fhats)


def grad(u: CylinderFunction, eta: AtomicMeasure) -> np.ndarray:
    """Gradient of u at eta as per-atom tangent vectors, shape (n, d)."""
    return u.grad_atoms(eta.weights.s, eta.locations)


# ---------------------------------------------------------------------------
# Derivatives, carre du champ, generator, drift
# ---------------------------------------------------------------------------

def directional_derivative_batch(u: CylinderFunction, w: VectorField,
                                 weights: np.ndarray, locations: np.ndarray
                                 ) -> np.ndarray:
    """sum_j dF_j(fstar eta) int <grad fhat_j(x, eta_x), w(x)> d eta(x)."""
    v = u.star_values(weights, locations)
    wvals = w(locations)
    out = np.zeros(weights.shape[:-1])
    for j, fh in enumerate(u.fhats):
        dF = u.F.partial(j)(v)
        inner = (fh.f.gradient(locations) * wvals).sum(axis=-1)
        out = out + dF * (weights * fh.rho(weights) * inner).sum(axis=-1)
    return out


def directional_derivative(u: CylinderFunction, w: VectorField,
                           eta: AtomicMeasure) -> float:
    return float(directional_derivative_batch(
        u, w, eta.weights.s, eta.locations))


def carre_du_champ_batch(u: CylinderFunction, v: CylinderFunction,
                         weights: np.ndarray, locations: np.ndarray
                         ) -> np.ndarray:
    """Gamma(u, v)(eta) = 1/2 sum_i s_i <grad u(x_i), grad v(x_i)>."""
    gu = u.grad_atoms(weights, locations)
    gv = v.grad_atoms(weights, locations)
    return 0.5 * (weights * (gu * gv).sum(axis=-1)).sum(axis=-1)


def carre_du_champ(u: CylinderFunction, v: CylinderFunction,
                   eta: AtomicMeasure) -> float:
    return float(carre_du_champ_batch(u, v, eta.weights.s, eta.locations))


def qv_density_batch(u: CylinderFunction, weights: np.ndarray,
                     locations: np.ndarray) -> np.ndarray:
    """Quadratic-variation density <grad u, grad u>_{L^2(eta)} = 2 Gamma(u)."""
    return 2.0 * carre_du_champ_batch(u, u, weights, locations)


def qv_density(u: CylinderFunction, eta: AtomicMeasure) -> float:
    return float(qv_density_batch(u, eta.weights.s, eta.locations))


def generator_batch(u: CylinderFunction, weights: np.ndarray,
                    locations: np.ndarray) -> np.ndarray:
    """L u = L1 u + L2 u.

    L1 u = 1/2 sum_{jp} d2F_{jp} int rho_j(eta_x) rho_p(eta_x)
           <grad f_j, grad f_p> d eta(x)   (diffusion part),
    L2 u = 1/2 sum_j dF_j sum_{x: eta_x > 0} rho_j(eta_x) lap f_j(x)
           (drift part; the atom sum is finite thanks to the cutoff).

    Rejects profiles with rho(0+) != 0 attached to non-constant spatial
    parts: for those the atom sum would diverge in the un-truncated limit.
    """
    for fh in u.fhats:
        if not fh.spatially_constant and fh.rho.value_at_zero_plus() != 0.0:
            raise ValueError(
                "generator undefined: weight profile does not vanish at 0+ "
                "(potential-energy functions have no finite drift part)")
    v = u.star_values(weights, locations)
    grads = [fh.f.gradient(locations) for fh in u.fhats]
    rhos = [fh.rho(weights) for fh in u.fhats]
    k = u.k
    out = np.zeros(weights.shape[:-1])
    for j in range(k):
        dFj = u.F.partial(j)
        for p in range(k):
            d2F = dFj.partial(p)(v)
            if np.all(d2F == 0.0):
                continue
            inner = (grads[j] * grads[p]).sum(axis=-1)
            out = out + 0.5 * d2F * (
                weights * rhos[j] * rhos[p] * inner).sum(axis=-1)
        lap = u.fhats[j].f.laplacian(locations)
        active = weights > 0.0
        out = out + 0.5 * dFj(v) * np.where(active, rhos[j] * lap, 0.0
                                            ).sum(axis=-1)
    return out


def generator(u: CylinderFunction, eta: AtomicMeasure) -> float:
    return float(generator_batch(u, eta.weights.s, eta.locations))


def drift_B_batch(w: VectorField, eps: float, weights: np.ndarray,
                  locations: np.ndarray) -> np.ndarray:
    """B_eps[w](eta) = sum over atoms heavier than eps of div w."""
    divw = w.divergence()
    vals = np.where(weights > eps, divw(locations), 0.0)
    return vals.sum(axis=-1)


def drift_B(w: VectorField, eps: float, eta: AtomicMeasure) -> float:
    return float(drift_B_batch(w, eps, eta.weights.s, eta.locations))


# ---------------------------------------------------------------------------
# Flow diffeomorphisms and Radon-Nikodym derivatives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowDiffeo:
    """psi = psi^{w,t}: the time-t flow of a smooth vector field."""

    w: VectorField
    t: float = 1.0
    step: float = 1e-2

    def apply(self, x: np.ndarray) -> np.ndarray:
        return flow(self.w, self.t, x, step=self.step)[0]

    def inverse_apply(self, x: np.ndarray) -> np.ndarray:
        return flow(self.w, -self.t, x, step=self.step)[0]

    @property
    def volume_preserving(self) -> bool:
        return self.w.is_constant or self.w.divergence_free

    def pushforward_density(self, x: np.ndarray) -> np.ndarray:
        """d(psi_push m)/dm at x, i.e. exp(-logdet Dpsi(psi^{-1} x)).

        Computed in one backward integration: by the chain rule on
        psi^t o psi^{-t} = id, -logdet Dpsi^t(psi^{-t} x) equals
        logdet Dpsi^{-t}(x).
        """
        if self.volume_preserving:
            return np.ones(np.asarray(x).shape[:-1])
        _, logdet_back = flow(self.w, -self.t, x, step=self.step)
        return np.exp(logdet_back)

    def pushforward_measure(self, eta: AtomicMeasure) -> AtomicMeasure:
        return AtomicMeasure(eta.weights, self.apply(eta.locations),
                             eta.manifold)


def rn_derivative_batch(psi: FlowDiffeo, eps: float, weights: np.ndarray,
                        locations: np.ndarray) -> np.ndarray:
    """R_eps[psi](eta): product of pushforward densities over atoms
    heavier than eps (empty product = 1)."""
    if psi.volume_preserving:
        return np.ones(weights.shape[:-1])
    dens = psi.pushforward_density(locations)
    return np.where(weights > eps, dens, 1.0).prod(axis=-1)


def rn_derivative(psi: FlowDiffeo, eps: float, eta: AtomicMeasure) -> float:
    return float(rn_derivative_batch(psi, eps, eta.weights.s, eta.locations))


# ---------------------------------------------------------------------------
# Monte-Carlo verifiers
# ---------------------------------------------------------------------------

def verify_ibp(u: CylinderFunction, v: CylinderFunction, w: VectorField,
               N: int, rng: np.random.Generator, manifold: Manifold,
               n_atoms: int | None = None, chunk: int = 20000,
               label: str = "") -> Report:
    """Integration by parts under the Dirichlet-Ferguson law:
    E[grad_w u * v] + E[u * grad_w v] + E[u v B_eps[w]] = 0 with
    eps = min(eps_u, eps_v) > 0; the three terms are evaluated on the same
    samples and the residual is reported with its paired standard error."""
    eps = min(u.threshold, v.threshold)
    if eps <= 0:
        raise ValueError("u and v need positive vanishing thresholds")
    report = Report(f"verify-ibp{label}",
                    meta={"N": N, "eps": eps, "beta": manifold.beta})
    acc = np.zeros(5)  # res, res^2, t1, t2, t3
    done = 0
    while done < N:
        m = min(chunk, N - done)
        b = sample_df_batch(manifold, m, n_atoms, rng)
        t1 = directional_derivative_batch(u, w, b.weights, b.locations) \
            * v.value_batch(b.weights, b.locations)
        t2 = u.value_batch(b.weights, b.locations) \
            * directional_derivative_batch(v, w, b.weights, b.locations)
        t3 = u.value_batch(b.weights, b.locations) \
            * v.value_batch(b.weights, b.locations) \
            * drift_B_batch(w, eps, b.weights, b.locations)
        res = t1 + t2 + t3
        acc += [res.sum(), (res * res).sum(), t1.sum(), t2.sum(), t3.sum()]
        done += m
    mean = acc[0] / N
    var = max(acc[1] / N - mean * mean, 0.0)
    se = math.sqrt(var / N)
    if se < 1e-13:
        report.add(abs_check(f"ibp{label} residual", mean, 0.0, 1e-12))
    else:
        report.add(sigma_check(f"ibp{label} residual", mean, 0.0, se))
    report.add(info_check(f"ibp{label} E[grad_w u * v]", acc[2] / N))
    report.add(info_check(f"ibp{label} E[u * grad_w v]", acc[3] / N))
    report.add(info_check(f"ibp{label} E[u v B_eps]", acc[4] / N))
    return report


def verify_ibp_basket(us: list, vs: list, ws: list, N: int,
                      rng: np.random.Generator, manifold: Manifold,
                      n_atoms: int | None = None,
                      chunk: int = 20000) -> Report:
    """Integration by parts over a whole (u, v, w) basket, evaluating every
    combination on one shared sample stream."""
    combos = [(i, j, k) for i in range(len(us)) for j in range(len(vs))
              for k in range(len(ws))]
    eps = {}
    for i, j, _ in combos:
        e = min(us[i].threshold, vs[j].threshold)
        if e <= 0:
            raise ValueError("u and v need positive vanishing thresholds")
        eps[(i, j)] = e
    report = Report("verify-ibp",
                    meta={"N": N, "beta": manifold.beta,
                          "shape": [len(us), len(vs), len(ws)]})
    acc = np.zeros((len(combos), 2))
    done = 0
    while done < N:
        m = min(chunk, N - done)
        b = sample_df_batch(manifold, m, n_atoms, rng)
        u_vals = [u.value_batch(b.weights, b.locations) for u in us]
        v_vals = [v.value_batch(b.weights, b.locations) for v in vs]
        du = [[directional_derivative_batch(u, w, b.weights, b.locations)
               for w in ws] for u in us]
        dv = [[directional_derivative_batch(v, w, b.weights, b.locations)
               for w in ws] for v in vs]
        drift = {}
        for (i, j), e in eps.items():
            for k in range(len(ws)):
                if (e, k) not in drift:
                    drift[(e, k)] = drift_B_batch(ws[k], e, b.weights,
                                                  b.locations)
        for c, (i, j, k) in enumerate(combos):
            res = du[i][k] * v_vals[j] + u_vals[i] * dv[j][k] \
                + u_vals[i] * v_vals[j] * drift[(eps[(i, j)], k)]
            acc[c] += [res.sum(), (res * res).sum()]
        done += m
    for c, (i, j, k) in enumerate(combos):
        mean = acc[c, 0] / N
        se = math.sqrt(max(acc[c, 1] / N - mean * mean, 0.0) / N)
        name = f"ibp[u{i} v{j} w{k}] residual"
        if se < 1e-13:
            report.add(abs_check(name, mean, 0.0, 1e-12))
        else:
            report.add(sigma_check(name, mean, 0.0, se))
    return report


def verify_pqi(psi: FlowDiffeo, u: CylinderFunction, n: int, N: int,
               rng: np.random.Generator, manifold: Manifold,
               n_atoms: int | None = None, chunk: int = 20000,
               label: str = "") -> Report:
    """Partial quasi-invariance: E[u(psi_push eta)] = E[R_{1/n}[psi] u(eta)]
    for u measurable at threshold 1/n.  Also reports E[R] (must be 1) and,
    for volume-preserving psi, asserts R == 1 exactly."""
    if u.threshold < 1.0 / n - 1e-12:
        raise ValueError("u must have vanishing threshold >= 1/n")
    eps = 1.0 / n
    report = Report(f"verify-pqi{label}",
                    meta={"N": N, "eps": eps, "beta": manifold.beta,
                          "volume_preserving": psi.volume_preserving})
    acc = np.zeros(4)  # diff, diff^2, R, R^2
    r_exactly_one = True
    done = 0
    while done < N:
        m = min(chunk, N - done)
        b = sample_df_batch(manifold, m, n_atoms, rng)
        pushed = psi.apply(b.locations)
        lhs = u.value_batch(b.weights, pushed)
        r = rn_derivative_batch(psi, eps, b.weights, b.locations)
        rhs = r * u.value_batch(b.weights, b.locations)
        diff = lhs - rhs
        acc += [diff.sum(), (diff * diff).sum(), r.sum(), (r * r).sum()]
        r_exactly_one = r_exactly_one and bool(np.all(r == 1.0))
        done += m
    mean = acc[0] / N
    se = math.sqrt(max(acc[1] / N - mean * mean, 0.0) / N)
    if se < 1e-13:
        report.add(abs_check(f"pqi{label} lhs-rhs", mean, 0.0, 1e-12))
    else:
        report.add(sigma_check(f"pqi{label} lhs-rhs", mean, 0.0, se))
    mean_r = acc[2] / N
    se_r = math.sqrt(max(acc[3] / N - mean_r ** 2, 0.0) / N)
    if se_r < 1e-13:
        report.add(abs_check(f"pqi{label} E[R]", mean_r, 1.0, 1e-12))
    else:
        report.add(sigma_check(f"pqi{label} E[R]", mean_r, 1.0, se_r))
    if psi.volume_preserving:
        report.add(abs_check(f"pqi{label} R==1 bitwise",
                             1.0 if r_exactly_one else 0.0, 1.0, 0.0))
    return report


def verify_B_martingale(w: VectorField, eps: float, delta: float,
                        u_basket: list, N: int, rng: np.random.Generator,
                        manifold: Manifold, n_atoms: int | None = None,
                        chunk: int = 20000) -> Report:
    """Martingale property of the drift in the weight-threshold filtration.

    For eps < delta and u measurable at the coarser threshold delta,
    E[B_eps[w] u] = E[B_delta[w] u]; additionally E[B_eps[w]] = 0 and
    E[B_delta[w]] = 0.
    """
    if not eps < delta:
        raise ValueError("need eps < delta")
    for u in u_basket:
        if u.threshold < delta - 1e-12:
            raise ValueError("basket functions must be measurable at the "
                             "coarser threshold delta")
    report = Report("verify-bmart",
                    meta={"N": N, "eps": eps, "delta": delta,
                          "beta": manifold.beta})
    n_u = len(u_basket)
    acc_u = np.zeros((n_u, 2))   # (B_eps - B_delta) u, squared
    acc_b = np.zeros(4)          # B_eps, B_eps^2, B_delta, B_delta^2
    done = 0
    while done < N:
        m = min(chunk, N - done)
        b = sample_df_batch(manifold, m, n_atoms, rng)
        b_eps = drift_B_batch(w, eps, b.weights, b.locations)
        b_del = drift_B_batch(w, delta, b.weights, b.locations)
        acc_b += [b_eps.sum(), (b_eps ** 2).sum(),
                  b_del.sum(), (b_del ** 2).sum()]
        for j, u in enumerate(u_basket):
            d = (b_eps - b_del) * u.value_batch(b.weights, b.locations)
            acc_u[j] += [d.sum(), (d * d).sum()]
        done += m
    for j in range(n_u):
        mean = acc_u[j, 0] / N
        se = math.sqrt(max(acc_u[j, 1] / N - mean ** 2, 0.0) / N)
        report.add(sigma_check(f"bmart tower u[{j}]", mean, 0.0,
                               max(se, 1e-15)))
    for name, k in (("E[B_eps]", 0), ("E[B_delta]", 2)):
        mean = acc_b[k] / N
        se = math.sqrt(max(acc_b[k + 1] / N - mean ** 2, 0.0) / N)
        report.add(sigma_check(f"bmart {name}", mean, 0.0, max(se, 1e-15)))
    return report
