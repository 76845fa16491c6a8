"""facedyn: landmark-trajectory intensity estimation.

Turns per-frame 2D landmark sequences into trajectories on the manifold
of fixed-rank PSD matrices, compares them with a global alignment kernel,
and trains kernel support-vector regressors (with region fusion) to
predict a per-sequence intensity score.
"""

from .config import ExperimentConfig, load_config
from .trajectory import RawSequence, RegionMap, Trajectory, default_region_map

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "load_config",
    "RawSequence",
    "RegionMap",
    "Trajectory",
    "default_region_map",
    "__version__",
]
