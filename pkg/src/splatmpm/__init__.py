"""Elastoplastic MPM on Gaussian-splat particle clouds.

The package covers the NACC constitutive model with a continuous return map,
an explicit MPM stepper, covariance/SH evolution, interior filling of splat
surfaces, point-light shading and scene I/O.
"""

import os

# numba's TBB layer is rarely installed at a compatible version; the OpenMP or
# workqueue layers are always available and keep prange results identical.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .boundary import BoundaryCondition, BoundaryMode, ScriptedObstacle  # noqa: E402
from .constitutive import (  # noqa: E402
    ReturnCase, ReturnMapResult, fluid_params, kirchhoff_stress, p0_of, plastic_projection,
    pq_of, reconstruct_def_grad, return_map, update_alpha, yield_function,
)
from .engine import (  # noqa: E402
    Engine, StepStats, bspline_weights, g2p, grid_forces, grid_update, p2g,
)
from .errors import *  # noqa: E402,F401,F403
from .evolution import evolve, extract_rotation, rotate_sh, update_covariance  # noqa: E402
from .fill import classify, density_field, seed_interior, sh0_init  # noqa: E402
from .model import (  # noqa: E402
    Camera, ElasticModel, GaussianParticle, Light, MpmGrid, NaccMaterial, ParticleSet,
    SceneConfig, YieldPoint, validate,
)
from .ply import FrameSnapshot, export_frame, read_particles, write_particles  # noqa: E402
from .scene import load_config, load_splats, rasterize_preview, simulate  # noqa: E402
from .shading import blinn_phong, pca_normals, shade_frame  # noqa: E402

__version__ = "0.1.0"
