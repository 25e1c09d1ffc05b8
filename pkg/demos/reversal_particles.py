"""Run eight hard spheres forward, flip every velocity, run back.

Extended precision keeps the round trip at rounding level; ordinary doubles
amplify the first-collision error at every later collision.
"""
import numpy as np

from enskoglab import run_particle_reversal, sample_admissible_config

for seed in range(5):
    cfg = sample_admissible_config(8, 0.1, 1.0, seed=seed)
    ext = run_particle_reversal(cfg, 4.0)
    dbl = run_particle_reversal(cfg, 4.0, dtype=np.float64)
    print(f"seed {seed}: {ext.forward['collisions_forward']:3d} collisions, "
          f"error longdouble {ext.reversal_error:.1e}, float64 {dbl.reversal_error:.1e}")
