"""Hard-sphere kinetics on the flat torus: particle flows, collision integrals,
homogeneous relaxation and reversal experiments."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DynamicsError,
    EnskogError,
    OverlapError,
    PackingError,
    ProbeAtContactError,
    ResolutionError,
    StabilityError,
)
from .torus import distance, min_image, wrap  # noqa: F401
from .hardspheres import (  # noqa: F401
    ParticleConfig,
    collide,
    evolve,
    min_pair_distance,
    predict_collision,
    reverse,
    sample_admissible_config,
    state_distance,
)
from .bev import PairPotential, bump_potential, evolve_bev, quartic_bump, total_force  # noqa: F401
from .fields import PhaseField, bimodal, maxwellian, modulated_maxwellian, blob_field  # noqa: F401
from .collision import (  # noqa: F401
    QuadratureRule,
    check_condition_11,
    st_boltzmann,
    st_enskog,
    vlasov_term,
)
from .homogeneous import VelocityField, h_functional, integrate, reverse_field, step  # noqa: F401
from .blobs import Mollifier, coherence_time, draw_ensemble, factorization_gap  # noqa: F401
from .reversibility import (  # noqa: F401
    ReversalReport,
    run_blob_reversal,
    run_particle_reversal,
    run_smooth_irreversibility,
)
