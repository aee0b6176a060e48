"""Pseudospectral laboratory for the phase-field crystal equation and its
inertial (relaxation-time) modification on periodic unit boxes."""

from .decomposition import (
    SplitRun,
    fit_decay_diagnostics,
    fit_decay_rate,
    run_split,
    step_c,
    step_d,
)
from .errors import ConfigurationError, InvalidFieldError
from .experiments import (
    BetaSweep,
    BoundaryLayerReport,
    DissipativityReport,
    DistanceRecord,
    band_limited_field,
    beta_distance_scan,
    boundary_layer_metric,
    boundary_layer_scan,
    default_sweep,
    dissipativity_scan,
    rescale,
    rescale_inverse,
)
from .integrators import (
    LinearModeOracle,
    StepKind,
    StepScheme,
    energy_identity_residual,
    oracle_solve,
    step,
    step_mpfc,
    step_pfc,
    trajectory,
)
from .io import RunLog, Snapshot, load_snapshot, save_snapshot, write_timeseries
from .model import (
    ConservedCharge,
    ModelParams,
    State,
    default_k_split,
    energy,
    f_eval,
    fk_eval,
    free_energy_density,
    full_energy,
    mean_mode_exact,
    rhs_pfc,
)
from .config import RunConfig, load_config, parse_config
from .spectral import (
    Field,
    Grid,
    SOBOLEV_LEVELS,
    hm_norm,
    inv_laplacian_pow,
    mean,
    x_norm,
    zero_mean,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
