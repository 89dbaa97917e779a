"""dflab: sampling, diffusion and identity verification for random atomic
measures on the flat torus.

Layers, bottom up: `geometry` (exact Brownian increments, heat kernels and
symbolic trig calculus), `measures` (stick breaking, the random-measure
sampler and its characterizing identities), `cylinder` (test-function
calculus: gradients, carre du champ, generator, drift, Radon-Nikodym
derivatives), `diffusion` (the frozen-mass particle system and its
martingale/stationarity checks), `transport` (exact quadratic optimal
transport and the short-time/Lipschitz probes) and `harness` (config,
seeding, reports, CLI).
"""

from .geometry import Manifold, TrigFunction, VectorField
from .measures import AtomicMeasure, WeightVector

__version__ = "0.1.0"

__all__ = ["Manifold", "TrigFunction", "VectorField", "AtomicMeasure",
           "WeightVector", "__version__"]
