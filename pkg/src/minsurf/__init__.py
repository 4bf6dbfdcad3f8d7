"""Skeleton descriptions, structural scoring and a skeleton-to-surface decoder.

Modules:

- ``skeleton``: nodes, solid and virtual edges, validation, random generation
- ``codec``: text/JSON descriptions, coordinate systems, dataset records
- ``matching`` and ``metrics``: node matching, the five accuracy components,
  the aggregate score and the loss multiplier
- ``decoder`` and ``mesh``: implicit tube field, isosurface, curvature
  relaxation, mesh checks and OBJ/PLY files
"""
from .codec import (
    PROMPTS,
    ParseError,
    PromptVariant,
    anchor_index,
    convert_coords,
    format_real,
    from_json,
    make_dataset_record,
    parse_text,
    serialize_text,
    to_json,
)
from .decoder import DecodeParams, assemble_field, decode, extract_surface, relax_curvature
from .matching import Matching, assign_lexicographic, hungarian, match_nodes
from .mesh import (
    MeshError,
    MeshIOError,
    MeshReport,
    TriMesh,
    check_mesh,
    export_obj,
    export_ply,
    import_obj,
    import_ply,
    mean_curvature_stats,
)
from .metrics import (
    BatchError,
    BatchSummary,
    MetricReport,
    aggregate_accuracy,
    beta_for_stage,
    evaluate_batch,
    evaluate_pair,
    s2ms_loss,
    s2ms_multiplier,
    score_skeletons,
    topology_similarity,
)
from .skeleton import (
    CoordSystem,
    EdgeKind,
    GeneratorConfig,
    Operator,
    Skeleton,
    SkeletonError,
    SkeletonNode,
    ValidationReport,
    VirtualEdge,
    from_adjacency,
    random_skeleton,
    to_adjacency,
    validate,
)

__version__ = "0.1.0"
