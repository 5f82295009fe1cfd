"""Sparse random-walk node features and scalable GP inference on graphs."""

from .backends import available_backends, default_backend
from .graphs import (
    Graph,
    Objective,
    WalkMatrix,
    generate,
    laplacian,
    load_edge_list,
    normalized_adjacency,
    normalized_laplacian,
    save_edge_list,
)
from .features import (
    FeatureBasis,
    FeatureMatrix,
    ModulationSpec,
    WalkConfig,
    bound_constant_c,
    concentration_bound,
    dense_kernel,
    kernel_entry,
    kernel_matvec,
    sample_feature_basis,
    sample_features,
    sample_features_adhoc,
    sparsity_bound,
)

__version__ = "0.1.0"
