"""Exact quadratic optimal transport and the short-time decay probe.

The one-sided bound says the chance of crossing between two W2-balls in
time t decays at least like exp(-d^2 / 2t); operationally, t log p_t must
stay below -d^2/4 (slack one half) within the Monte-Carlo band.
"""

import numpy as np

from dflab.geometry import Manifold
from dflab.harness import _fixture
from dflab.measures import AtomicMeasure
from dflab.transport import varadhan_probe, w2, w2_arrays

man = Manifold(dim=2, beta=1.0)

fix = _fixture("w2_fixture.json")
mu = AtomicMeasure.from_json_dict(fix["mu"], man)
nu = AtomicMeasure.from_json_dict(fix["nu"], man)
plan = w2(mu, nu)
print(f"bundled 3-atom instance: cost {plan.cost:.6f} "
      f"(enumeration oracle {fix['expected_cost']:.6f}), W2 {plan.w2:.4f}")
print("optimal plan edges (i -> j: mass):")
for i, j, m in plan.entries:
    print(f"  {i} -> {j}: {m:.3f}")

vfix = _fixture("varadhan_fixture.json")
ref1 = AtomicMeasure.from_json_dict(vfix["ref1"], man)
ref2 = AtomicMeasure.from_json_dict(vfix["ref2"], man)
print(f"\ntwo-ball probe: centers are W2-distance "
      f"{w2(ref1, ref2).w2:.3f} apart, radii {vfix['r1']}")
rep = varadhan_probe(man, ref1, vfix["r1"], ref2, vfix["r2"],
                     vfix["t_list"], 8000, np.random.default_rng(8),
                     slack=vfix["slack"], pilot=1000)
print(f"sampled inter-ball distance d_hat = {rep.meta['d_hat']:.3f}, "
      f"bound = {-0.25 * rep.meta['d_hat'] ** 2:.4f}")
for row in rep.meta["rows"]:
    tl = "no hits" if row["t_log_p"] is None else f"{row['t_log_p']:+.4f}"
    print(f"  t={row['t']}: p_hat={row['p_hat']:.5f}, t log p = {tl}")
