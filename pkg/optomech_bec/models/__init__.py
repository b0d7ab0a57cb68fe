from .system_params import (
    TOLERANCES,
    DConvention,
    DerivedParams,
    Linearization,
    MeanFieldState,
    SystemParams,
    Tolerances,
    ValidityReport,
)
from .cavity_model import (
    derive_params,
    diffusion_matrix,
    drift_matrix,
    effective_detuning,
    lattice_depth_per_photon,
    linearize,
    thermal_occupation,
    validity_check,
)
from .run_manifest import RunManifest
