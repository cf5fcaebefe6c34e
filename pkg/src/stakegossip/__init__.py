"""Stake-backed peer discovery: protocol library, seeded network simulator,
and analysis toolkit."""

__version__ = "0.1.0"

from .analysis import (AnalysisParams, MeanFieldResult, balanced_theta,
                       default_parameters, detection_error_probs,
                       mean_field_summary, mf_quality_fixed_points,
                       mf_visibility_fixed_point, r0)
from .chain import ContractState, ProtocolParams
from .crypto import FieldElement, KeyMaterial, derive_identity, prng_score
from .node import NodeConfig, NodeState, make_node
from .simnet import Metrics, MicroNet, SimConfig, World, run

__all__ = [
    "AnalysisParams", "MeanFieldResult", "balanced_theta",
    "default_parameters", "detection_error_probs", "mean_field_summary",
    "mf_quality_fixed_points", "mf_visibility_fixed_point", "r0",
    "ContractState", "ProtocolParams", "FieldElement", "KeyMaterial",
    "derive_identity", "prng_score", "NodeConfig", "NodeState", "make_node",
    "Metrics", "MicroNet", "SimConfig", "World", "run", "__version__",
]
