"""Smooth optimal transport maps and squared Wasserstein distances from
samples, via a strongly convex kernel sum-of-squares dual."""

from .baselines import (
    AffineMap,
    GaussianMeasure,
    gaussian_ot_map,
    gaussian_w2,
    map_mse,
    plugin_w2,
    wishart_covariance,
)
from .dualsolve import (
    DualProblemData,
    DualSolution,
    Hyperparameters,
    assemble,
    convexity_constants,
    dual_gradient,
    dual_objective,
    duality_gap,
    primal_value,
    solve,
)
from .kernels import (
    FillingPairs,
    KernelSpec,
    SampleSet,
    constraint_features,
    embedding_sq_norms,
    gram_matrix,
    kernel_eval,
    kernel_grad,
    mean_embedding_eval,
    mean_embedding_grad,
    paired_fill,
)
from .nystrom import NystromFeatures, nystrom_features
from .selection import (
    GridSpec,
    SelectionReport,
    grid_search,
    mmd_sq,
    selection_criterion,
    theoretical_lambda,
)
from .transport import (
    TransportModel,
    map_backward,
    map_forward,
    model_from_solution,
    ot_value,
    potential_f,
    potential_g,
    w2_value,
)

__version__ = "0.1.0"
