"""Varifold shape learning: measures from meshes, trainable affine functionals."""

from .mesh import (
    GrayImage,
    PolylineGraph,
    TriMesh,
    decimate_cluster,
    heightmap_to_closed_mesh,
    permute_mesh,
    remove_faces,
    rotate_mesh,
    scale_mesh,
    segment_geometry,
    subdivide_midpoint,
    triangle_geometry,
)
from .meshio import load_mesh, save_mesh
from .generate import blob, bumped_box, ellipsoid, generate_synthetic_shape, torus
from .rotation import (
    axis_rotation,
    geodesic_distance_so3,
    is_rotation_matrix,
    project_to_so3,
    random_rotation,
)
from .varifold import (
    DirectionalMeasure,
    DiscreteVarifold,
    SpatialMeasure,
    concat,
    directional_marginal,
    from_graph,
    from_mesh,
    normalize_mass,
    pair,
    spatial_marginal,
    total_mass,
    tv_difference_submeasure,
    w1_small,
)
from .model import (
    AffineFunctional,
    Gradients,
    Mlp,
    backward,
    forward,
    forward_batch,
    init,
    lipschitz_upper_bound,
    load_checkpoint,
    model_output,
    mse_loss,
    new_model,
    param_count,
    param_count_with_bias,
    save_checkpoint,
    softmax_cross_entropy,
)
from .train import (
    AdamState,
    LabeledDataset,
    Metrics,
    TrainConfig,
    ablate_representation,
    adam_step,
    evaluate_classification,
    evaluate_regression,
    grad_check,
    robustness_sweep,
    split,
    train_classification,
    train_regression,
)

__version__ = "0.1.0"
