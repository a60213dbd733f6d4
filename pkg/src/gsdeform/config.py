"""Pipeline defaults.

The four deformation constants follow the reference configuration of the
method (512 control points, 8-neighbor graph, 3 skinning supports, 3
solver iterations); the remaining values are engineering choices of this
implementation.
"""

# Deformation defaults.
DEFAULT_CONTROL_COUNT = 512
DEFAULT_GRAPH_DEGREE = 8          # K, geodesic neighbors per control node
DEFAULT_SKIN_NEIGHBORS = 3        # K~, control supports per Gaussian
DEFAULT_SOLVE_ITERS = 3           # local-global alternations per drag

# Rasterizer constants.
SH_C0 = 0.28209479177387814       # zeroth-order SH basis factor
COV2D_REGULARIZATION = 0.3        # pixels^2, added to every projected covariance
ALPHA_CLAMP = 0.99                # per-splat alpha saturation limit
MIN_SPLAT_ALPHA = 1.0 / 255.0     # below this a pixel contribution is dropped
NEAR_PLANE = 1e-4                 # camera-space culling depth

# Compositor defaults.
DEFAULT_MASK_THRESHOLD = 0.5
DEFAULT_DILATION_RADIUS = 8       # pixels

# Numeric guards.
LOG_SCALE_FLOOR = -20.0           # stored log-scales are clamped here on load
OPACITY_EPS = 1e-7                # keeps activated opacities inside (0, 1)

# Wire protocol.
PROTOCOL_VERSION = 1
FRAME_MAGIC = b"GSUP"
