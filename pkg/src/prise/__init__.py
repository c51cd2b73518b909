"""Lucas-Kanade homography estimation over learned feature maps.

The feature network is trained so that the alignment loss is strongly
star-convex around the true corner displacement, which widens the basin
the inverse-compositional solver converges in.
"""

from .errors import PriseError
from .evaluation import bound_report, evaluate, probe_landscape, sr_table
from .featnet import NetConfig, forward, init_network, load_weights, save_weights
from .homography import Frame, corners_to_homography, pe_metric
from .imaging import PairSpec, generate_pair
from .kernels import available_backends, use_backend
from .lk import LkOptions, ic_lk_solve, pyramid_solve
from .starconvex import StarConvexConfig, certify_star_convexity, near_optimality_bound
from .training import LossKind, TrainConfig, train_all, train_stage

__version__ = "0.1.0"

__all__ = [
    "Frame", "LkOptions", "LossKind", "NetConfig", "PairSpec", "PriseError", "StarConvexConfig",
    "TrainConfig", "available_backends", "bound_report", "certify_star_convexity",
    "corners_to_homography", "evaluate", "forward", "generate_pair", "ic_lk_solve",
    "init_network", "load_weights", "near_optimality_bound", "pe_metric", "probe_landscape",
    "pyramid_solve", "save_weights", "sr_table", "train_all", "train_stage", "use_backend",
]
