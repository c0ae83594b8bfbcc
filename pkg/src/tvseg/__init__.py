"""Temporally coherent subspace segmentation of frame sequences.

Builds an adjacency structure over consecutive frames from a same-motion
oracle (a vision-language endpoint, a replayed file, or a seeded synthetic
oracle), then jointly optimizes a self-expressive coefficient matrix and a
cluster assignment with an alternating splitting scheme, feeding the
clustering back into the embedding each iteration.
"""

from .core import (
    ClusterAssignment,
    FeatureSequence,
    ObjectiveBreakdown,
    SolverConfig,
    SubspaceEmbedding,
    l21_norm,
    objective,
    theta_from_assignment,
)
from .datagen import PRESETS, GeneratedSequence, SyntheticSpec, generate, separation
from .metrics import EvaluationResult, accuracy, ari, evaluate, nmi, pair_precision
from .solver import SegmentationReport, run
from .tvs import (
    AdjacencySequence,
    GroundTruthOracle,
    ReplayOracle,
    TvsStructure,
    Verdict,
    boundary_error_count,
    build_adjacency,
    build_structure,
    flip_adjacency,
    neighborhoods_from_eq,
    tvs_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencySequence",
    "ClusterAssignment",
    "EvaluationResult",
    "FeatureSequence",
    "GeneratedSequence",
    "GroundTruthOracle",
    "ObjectiveBreakdown",
    "PRESETS",
    "ReplayOracle",
    "SegmentationReport",
    "SolverConfig",
    "SubspaceEmbedding",
    "SyntheticSpec",
    "TvsStructure",
    "Verdict",
    "accuracy",
    "ari",
    "boundary_error_count",
    "build_adjacency",
    "build_structure",
    "evaluate",
    "flip_adjacency",
    "generate",
    "l21_norm",
    "neighborhoods_from_eq",
    "nmi",
    "objective",
    "pair_precision",
    "run",
    "separation",
    "theta_from_assignment",
    "tvs_matrix",
]
