"""As-rigid-as-possible deformation engine for 3D Gaussian Splat objects.

Pipeline: load a splat PLY, sample sparse control nodes into a
topology-aware graph, minimize the local rigidity energy under hard
handle constraints, skin the solved nodes back onto the dense Gaussians,
then preview-render and composite the edit. Driven by the ``gsdeform``
CLI or the interactive WebSocket edit service.
"""

__version__ = "0.1.0"

from .arap import (
    DeformResult,
    FactorizedSystem,
    HandleSet,
    arap_energy,
    assemble_system,
    build_laplacian,
    build_rhs,
    deform,
    fit_rotations,
    solve_positions,
)
from .compositor import alpha_composite, boundary_mask
from .errors import (
    DisconnectedGraphError,
    EmptyCloudError,
    GsdeformError,
    SplatFormatError,
    ValidationError,
)
from .graph import (
    ControlGraph,
    build_control_graph,
    build_initial_graph,
    farthest_point_sample,
    geodesic_knn,
)
from .render import Camera, project_gaussian, project_gaussians, render
from .service import EditSession, pack_update_frame, unpack_update_frame
from .skinning import SkinBinding, apply_lbs, bind
from .splat_io import GaussianCloud, load_ply, read_ply, save_ply, write_ply

__all__ = [
    "__version__",
    "GaussianCloud", "load_ply", "save_ply", "read_ply", "write_ply",
    "ControlGraph", "farthest_point_sample", "build_initial_graph",
    "geodesic_knn", "build_control_graph",
    "HandleSet", "DeformResult", "FactorizedSystem",
    "arap_energy", "fit_rotations", "assemble_system", "solve_positions",
    "deform", "build_laplacian", "build_rhs",
    "SkinBinding", "bind", "apply_lbs",
    "Camera", "project_gaussian", "project_gaussians", "render",
    "alpha_composite", "boundary_mask",
    "EditSession", "pack_update_frame", "unpack_update_frame",
    "GsdeformError", "SplatFormatError", "EmptyCloudError",
    "ValidationError", "DisconnectedGraphError",
]
