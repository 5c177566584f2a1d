"""vesim: pseudo-spectral incompressible viscoelastic fluid simulator.

Structural identities of the model (volume preservation of the deformation,
solenoidality of the transposed strain, the curl consistency relation, and
the energy balance) are exposed as runtime-checkable diagnostics.
"""

from .spectral import (
    Grid,
    Field,
    PHYSICAL,
    SPECTRAL,
    to_spectral,
    to_physical,
    gradient,
    divergence,
    laplacian,
    curl_tensor,
    leray_project,
    dealias,
    sobolev_norm,
)
from .errors import (
    VesimError,
    ContractError,
    RankError,
    SymmetryError,
    ConfigError,
    ManufactureError,
    ConstructionError,
    DivergenceError,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "Field",
    "PHYSICAL",
    "SPECTRAL",
    "to_spectral",
    "to_physical",
    "gradient",
    "divergence",
    "laplacian",
    "curl_tensor",
    "leray_project",
    "dealias",
    "sobolev_norm",
    "VesimError",
    "ContractError",
    "RankError",
    "SymmetryError",
    "ConfigError",
    "ManufactureError",
    "ConstructionError",
    "DivergenceError",
    "__version__",
]
