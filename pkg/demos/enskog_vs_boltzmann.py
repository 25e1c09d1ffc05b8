"""Shrink the sphere diameter at fixed n a^2: the Enskog integral approaches Boltzmann linearly in a."""
import numpy as np

from enskoglab import QuadratureRule, modulated_maxwellian
from enskoglab.collision import collision_integrals

f = modulated_maxwellian(0.5)
quad = QuadratureRule.default()
rng = np.random.default_rng(0)
probes = [(rng.uniform(0, 1, 3), rng.normal(size=3)) for _ in range(10)]
prev = None
for a in (0.1, 0.05, 0.025):
    gap = np.mean([abs(ci.enskog - ci.boltzmann)
                   for ci in (collision_integrals(f, r, v, a, 1.0 / a**2, quad) for r, v in probes)])
    note = "" if prev is None else f"  ratio {prev / gap:.2f}"
    print(f"a = {a:<6} mean |St_E - St_B| = {gap:.3e}{note}")
    prev = gap
