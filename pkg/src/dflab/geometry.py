"""Geometry backends: flat torus (exact) and 2-sphere (approximate).

The flat torus T^d = [0, side)^d carries the Euclidean metric scaled by an
optional conformal factor ``metric_scale``.  Brownian motion is generated by
half the Laplace-Beltrami operator and its reference measure is the
*normalized* volume, so increments at elapsed time tau are per-coordinate
Gaussians of variance tau/metric_scale wrapped modulo the side length; both
sampling and the transition density are exact.

Test functions and vector fields are restricted to a closed trigonometric
family so that gradients, Laplacians and divergences are available in closed
form with no numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Manifold",
    "TrigFunction",
    "VectorField",
    "brownian_increment",
    "heat_kernel_density",
    "distance",
    "sample_uniform",
    "flow",
]

# Series terms below this threshold are dropped from the theta summation.
_THETA_TERM_CUTOFF = 1e-16


@dataclass(frozen=True)
class Manifold:
    """A geometry backend.

    kind: "flat_torus" (any dim >= 1) or "sphere2" (dim fixed to 2).
    side: side length of the torus fundamental domain.
    beta: total intensity mass of the reference measure; a free parameter
        of the random-measure layer, carried here for convenience.
    metric_scale: conformal factor a > 0 multiplying the metric.  Scaling
        the metric by a is equivalent to running time t/a on the unscaled
        manifold.
    sphere_substeps: geodesic random-walk substeps per Brownian increment
        on the sphere.
    """

    kind: str = "flat_torus"
    dim: int = 2
    side: float = 1.0
    beta: float = 1.0
    metric_scale: float = 1.0
    sphere_substeps: int = 64

    def __post_init__(self):
        if self.kind not in ("flat_torus", "sphere2"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.kind == "sphere2" and self.dim != 2:
            raise ValueError("sphere2 has dim == 2")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.side <= 0 or self.beta <= 0 or self.metric_scale <= 0:
            raise ValueError("side, beta and metric_scale must be positive")

    @property
    def is_torus(self) -> bool:
        return self.kind == "flat_torus"

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Map coordinates to the fundamental domain [0, side)."""
        return np.mod(x, self.side)


# ---------------------------------------------------------------------------
# Brownian increments and heat kernels
# ---------------------------------------------------------------------------

def brownian_increment(manifold: Manifold, x: np.ndarray, tau: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Advance Brownian motion (generator: half Laplacian) from x by time tau.

    On the torus the transition is exact: independent N(0, tau/scale)
    coordinates wrapped modulo the side.  On the sphere a geodesic random
    walk with ``sphere_substeps`` substeps is used.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    x = np.asarray(x, dtype=float)
    t_eff = tau / manifold.metric_scale
    if manifold.is_torus:
        noise = rng.normal(0.0, np.sqrt(t_eff), size=x.shape)
        return manifold.wrap(x + noise)
    return _sphere_walk(x, t_eff, manifold.sphere_substeps, rng)


def _sphere_walk(x: np.ndarray, t: float, n_sub: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Geodesic random walk on S^2 with n_sub tangent Gaussian substeps."""
    y = np.asarray(x, dtype=float)
    y = y / np.linalg.norm(y, axis=-1, keepdims=True)
    dt = t / n_sub
    for _ in range(n_sub):
        xi = rng.normal(0.0, np.sqrt(dt), size=y.shape)
        # project onto the tangent plane at y
        xi = xi - np.sum(xi * y, axis=-1, keepdims=True) * y
        norm = np.linalg.norm(xi, axis=-1, keepdims=True)
        norm = np.where(norm == 0.0, 1e-300, norm)
        y = np.cos(norm) * y + np.sin(norm) * (xi / norm)
        y = y / np.linalg.norm(y, axis=-1, keepdims=True)
    return y


def _theta_density(u: np.ndarray, sigma2: float, side: float) -> np.ndarray:
    """Density at offset u of the wrapped Gaussian w.r.t. the normalized
    (uniform) measure on a circle of circumference ``side``.

    Uses the Gaussian-image sum for small variance and the dual Fourier
    series for large variance; terms below 1e-16 are dropped.
    """
    u = np.mod(np.asarray(u, dtype=float), side)
    L = side
    if sigma2 <= (L / (2.0 * np.pi)) ** 2 * 2.0 * np.pi:
        # real-space sum: L * sum_k phi_sigma(u + k L)
        sigma = np.sqrt(sigma2)
        kmax = int(np.ceil(sigma / L * 8.6)) + 1
        k = np.arange(-kmax, kmax + 1)
        z = (u[..., None] + k * L) / sigma
        terms = np.exp(-0.5 * z * z)
        terms[terms < _THETA_TERM_CUTOFF] = 0.0
        return (L / (sigma * np.sqrt(2.0 * np.pi))) * terms.sum(axis=-1)
    # Fourier dual: 1 + 2 sum_n exp(-2 pi^2 n^2 sigma2 / L^2) cos(2 pi n u / L)
    decay = 2.0 * np.pi ** 2 * sigma2 / L ** 2
    nmax = max(1, int(np.ceil(np.sqrt(-np.log(_THETA_TERM_CUTOFF / 2.0) / decay))))
    n = np.arange(1, nmax + 1)
    amps = 2.0 * np.exp(-decay * n * n)
    amps[amps < _THETA_TERM_CUTOFF] = 0.0
    return 1.0 + (amps * np.cos(2.0 * np.pi * np.outer(np.ravel(u), n) / L)
                  ).sum(axis=-1).reshape(np.shape(u))


def heat_kernel_density(manifold: Manifold, x: np.ndarray, y: np.ndarray,
                        t: float) -> np.ndarray:
    """Transition density h_t(x, y) w.r.t. the normalized volume measure.

    Torus: product over coordinates of wrapped-Gaussian theta series.
    Sphere: spherical-harmonic (Legendre) series.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t_eff = t / manifold.metric_scale
    if manifold.is_torus:
        u = x - y
        out = np.ones(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))
        for j in range(manifold.dim):
            out = out * _theta_density(np.broadcast_to(
                u[..., j], out.shape), t_eff, manifold.side)
        return out
    return _sphere_heat_density(x, y, t_eff)


def _sphere_heat_density(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    """Legendre series heat kernel on S^2 w.r.t. the uniform measure."""
    c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
    out = np.zeros_like(c)
    p_prev = np.ones_like(c)     # P_0
    p_curr = c.copy()            # P_1
    ell = 0
    while True:
        if ell == 0:
            p = p_prev
        elif ell == 1:
            p = p_curr
        else:
            p = ((2 * ell - 1) * c * p_curr - (ell - 1) * p_prev) / ell
            p_prev, p_curr = p_curr, p
        amp = (2 * ell + 1) * np.exp(-0.5 * ell * (ell + 1) * t)
        out = out + amp * p
        if amp < _THETA_TERM_CUTOFF and ell > 2:
            break
        ell += 1
        if ell > 100000:
            break
    return out


def distance(manifold: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Geodesic distance; on the torus the coordinatewise shortest
    representative, scaled by sqrt(metric_scale)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if manifold.is_torus:
        d = np.abs(x - y) % manifold.side
        d = np.minimum(d, manifold.side - d)
        return np.sqrt(manifold.metric_scale) * np.linalg.norm(d, axis=-1)
    c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
    return np.sqrt(manifold.metric_scale) * np.arccos(c)


def sample_uniform(manifold: Manifold, shape: tuple, rng: np.random.Generator
                   ) -> np.ndarray:
    """Draw points from the normalized volume measure, exactly."""
    if manifold.is_torus:
        return rng.uniform(0.0, manifold.side, size=shape + (manifold.dim,))
    g = rng.normal(size=shape + (3,))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Symbolic trigonometric calculus (flat torus only)
# ---------------------------------------------------------------------------

_COS, _SIN = 0, 1


@dataclass(frozen=True)
class TrigFunction:
    """f(x) = sum_j c_j * trig(2 pi k_j . x / side), with integer wave
    vectors k_j; gradients and Laplacians are exact."""

    coefs: np.ndarray          # (m,)
    kvecs: np.ndarray          # (m, d) integer
    phases: np.ndarray         # (m,) 0 = cos, 1 = sin
    side: float = 1.0

    @staticmethod
    def from_terms(terms: Iterable[tuple], dim: int, side: float = 1.0
                   ) -> "TrigFunction":
        """Build from (coefficient, k-vector, "cos"|"sin") triples."""
        terms = list(terms)
        if not terms:
            terms = [(0.0, (0,) * dim, "cos")]
        coefs = np.array([float(t[0]) for t in terms])
        kvecs = np.array([[int(v) for v in t[1]] for t in terms], dtype=int)
        if kvecs.shape[1] != dim:
            raise ValueError("wave vector length does not match dim")
        phases = np.array([_COS if t[2] == "cos" else _SIN for t in terms])
        return TrigFunction(coefs, kvecs, phases, side)

    @staticmethod
    def constant(value: float, dim: int, side: float = 1.0) -> "TrigFunction":
        return TrigFunction.from_terms([(value, (0,) * dim, "cos")], dim, side)

    @property
    def dim(self) -> int:
        return self.kvecs.shape[1]

    def _angles(self, x: np.ndarray) -> np.ndarray:
        return (2.0 * np.pi / self.side) * np.tensordot(
            np.asarray(x, dtype=float), self.kvecs, axes=([-1], [-1]))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        a = self._angles(x)
        vals = np.where(self.phases == _SIN, np.sin(a), np.cos(a))
        return vals @ self.coefs

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Exact gradient, shape x.shape."""
        a = self._angles(x)
        # d/dx of cos is -sin * a_vec ; of sin is cos * a_vec
        deriv = np.where(self.phases == _SIN, np.cos(a), -np.sin(a))
        avecs = (2.0 * np.pi / self.side) * self.kvecs.astype(float)
        return np.tensordot(deriv * self.coefs, avecs, axes=([-1], [0]))

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        """Exact Laplacian: each term picks up -(2 pi |k| / side)^2."""
        a = self._angles(x)
        vals = np.where(self.phases == _SIN, np.sin(a), np.cos(a))
        lam = -((2.0 * np.pi / self.side) ** 2) * (
            self.kvecs.astype(float) ** 2).sum(axis=1)
        return vals @ (self.coefs * lam)

    def partial(self, j: int) -> "TrigFunction":
        """Exact partial derivative along coordinate j, as a TrigFunction."""
        aj = (2.0 * np.pi / self.side) * self.kvecs[:, j].astype(float)
        # cos -> -a_j sin ; sin -> a_j cos
        new_coefs = np.where(self.phases == _SIN, self.coefs * aj,
                             -self.coefs * aj)
        new_phases = np.where(self.phases == _SIN, _COS, _SIN)
        return TrigFunction(new_coefs, self.kvecs.copy(), new_phases, self.side)

    def canonical_terms(self) -> dict:
        """Combine terms into a canonical dict for exact zero-testing.

        cos is even and sin odd in k, so each term is keyed by the sign-
        normalized wave vector.
        """
        out: dict = {}
        for c, k, p in zip(self.coefs, self.kvecs, self.phases):
            k = tuple(int(v) for v in k)
            sign = 1.0
            nz = next((v for v in k if v != 0), 0)
            if nz < 0:
                k = tuple(-v for v in k)
                if p == _SIN:
                    sign = -1.0
            if p == _SIN and all(v == 0 for v in k):
                continue  # sin(0) contributes nothing
            key = (k, int(p))
            out[key] = out.get(key, 0.0) + sign * float(c)
        return {k: v for k, v in out.items() if v != 0.0}

    def is_zero(self, tol: float = 1e-14) -> bool:
        terms = self.canonical_terms()
        if not terms:
            return True
        scale = max(1.0, float(np.max(np.abs(self.coefs))))
        return all(abs(v) <= tol * scale for v in terms.values())

    def mean(self) -> float:
        """Integral against the normalized volume (only k = 0 cos terms)."""
        total = 0.0
        for (k, p), v in self.canonical_terms().items():
            if all(x == 0 for x in k) and p == _COS:
                total += v
        return total


@dataclass(frozen=True)
class VectorField:
    """A smooth vector field with one TrigFunction per coordinate."""

    components: tuple

    @staticmethod
    def from_terms(component_terms: Sequence[Iterable[tuple]], dim: int,
                   side: float = 1.0) -> "VectorField":
        comps = tuple(TrigFunction.from_terms(t, dim, side)
                      for t in component_terms)
        return VectorField(comps)

    @staticmethod
    def constant(vec: Sequence[float], side: float = 1.0) -> "VectorField":
        d = len(vec)
        return VectorField(tuple(TrigFunction.constant(v, d, side)
                                 for v in vec))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def side(self) -> float:
        return self.components[0].side

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.stack([f(x) for f in self.components], axis=-1)

    def divergence(self) -> TrigFunction:
        """div w = sum_j d_j w_j, computed symbolically."""
        parts = [f.partial(j) for j, f in enumerate(self.components)]
        coefs = np.concatenate([p.coefs for p in parts])
        kvecs = np.concatenate([p.kvecs for p in parts])
        phases = np.concatenate([p.phases for p in parts])
        return TrigFunction(coefs, kvecs, phases, self.side)

    @property
    def divergence_free(self) -> bool:
        return self.divergence().is_zero()

    @property
    def is_constant(self) -> bool:
        return all((f.kvecs == 0).all() for f in self.components)

    def constant_value(self) -> np.ndarray:
        return np.array([float(f(np.zeros(self.dim))) for f in self.components])


# ---------------------------------------------------------------------------
# Flows of vector fields
# ---------------------------------------------------------------------------

class _StackedField:
    """All trig terms of (w_1, ..., w_d, div w) fused into one evaluation:
    a single angle tensordot and one scatter matmul per stage."""

    def __init__(self, w: VectorField):
        parts = list(w.components) + [w.divergence()]
        coefs, kvecs, phases, owner = [], [], [], []
        for c, part in enumerate(parts):
            coefs.append(part.coefs)
            kvecs.append(part.kvecs)
            phases.append(part.phases)
            owner.append(np.full(len(part.coefs), c))
        coefs = np.concatenate(coefs)
        self.kvecs = np.concatenate(kvecs).astype(float)
        phases = np.concatenate(phases)
        owner = np.concatenate(owner)
        self.freq = (2.0 * np.pi / w.side) * self.kvecs
        self.is_sin = phases == _SIN
        # scatter matrix: term values -> (d components, divergence)
        self.scatter = np.zeros((len(coefs), len(parts)))
        self.scatter[np.arange(len(coefs)), owner] = coefs
        self.d = w.dim

    def __call__(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = np.tensordot(x, self.freq, axes=([-1], [-1]))
        vals = np.where(self.is_sin, np.sin(a), np.cos(a))
        out = vals @ self.scatter
        return out[..., :self.d], out[..., self.d]


def flow(w: VectorField, t: float, x: np.ndarray, step: float = 1e-2,
         side: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the flow of w for time t from x by RK4.

    Returns (psi^{w,t}(x) wrapped to the fundamental domain, log det of the
    flow Jacobian at x).  The log-determinant solves d/dt log det =
    (div w)(psi^{w,t}(x)) along the same trajectory.  Constant fields take
    the exact closed form: translation by t*w with log det 0.
    """
    if side is None:
        side = w.side
    x = np.asarray(x, dtype=float)
    if w.is_constant:
        return np.mod(x + t * w.constant_value(), side), np.zeros(x.shape[:-1])
    field = _StackedField(w)
    n_steps = max(1, int(np.ceil(abs(t) / step)))
    h = t / n_steps
    y = x.copy()
    logdet = np.zeros(x.shape[:-1])
    for _ in range(n_steps):
        k1, l1 = field(y)
        k2, l2 = field(y + 0.5 * h * k1)
        k3, l3 = field(y + 0.5 * h * k2)
        k4, l4 = field(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        logdet = logdet + (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
    return np.mod(y, side), logdet
