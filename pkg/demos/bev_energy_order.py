"""Hard spheres plus a smooth bump potential: energy drift shrinks fourfold per halved step."""
import numpy as np

from enskoglab import evolve_bev, quartic_bump, sample_admissible_config

cfg = sample_admissible_config(4, 0.1, 1.0, seed=22)
pot = quartic_bump()
prev = None
for dt in (2e-3, 1e-3, 5e-4):
    out, E, log = evolve_bev(cfg, pot, 2.0, dt, record_energy=True, return_log=True)
    drift = np.max(np.abs(E[:, 3] - E[0, 3]))
    note = "" if prev is None else f"  ratio {prev / drift:.2f}"
    print(f"dt = {dt:<7} collisions {len(log)}  max energy drift {drift:.3e}{note}")
    prev = drift
