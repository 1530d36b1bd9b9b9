"""Skull-to-face reconstruction and editing toolkit."""

__version__ = "0.1.0"

from .adaptation import (
    AdaptationConfig,
    AdaptationResult,
    adapt_face,
    edit_shape,
    fit_midplane,
    gradient,
    loss_landmark,
    loss_projection,
    loss_symmetry,
    total_loss,
)
from .dataset import (
    DatasetSplit,
    DepthSpec,
    SkullFacePair,
    generate_pairs,
    kfold_split,
    normalize_pair,
)
from .facemodel import (
    FaceLatent,
    MorphableFaceModel,
    build_synthetic_model,
    decode,
    extract_landmarks,
    load_model,
    sample_prior,
    save_model,
)
from .landmarks import (
    FacialLandmarkSet,
    SkullLandmarkSet,
    SymmetryPairing,
    default_pairing,
    default_partition,
    default_schema,
    extend_landmarks,
    implied_depths,
)
from .mesh import (
    Plane,
    TriMesh,
    nearest_vertex,
    read_obj,
    reflect_point,
    vertex_normals,
    write_obj,
)
from .metrics import EvalReport, evaluate_set, nme
from .registration import SimilarityTransform, apply_transform, estimate_similarity
from .tdd import (
    RegionalTddModel,
    TddModel,
    TissueDepthVector,
    fit_tdd_global,
    fit_tdd_regional,
    project_c,
    representative_depths,
    sample_global,
    sample_regional,
)
