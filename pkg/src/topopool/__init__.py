"""Topology-preserving graph pooling with persistent homology.

The main entry points are re-exported here; submodules hold the full API.
"""

from .errors import InternalError, NumericError, ParameterError, ParseError, ProtocolError, TrainingError
from .graph import Graph, generate, load_graphs, save_graphs
from .metrics import TransformConfig, topo_loss, wasserstein1
from .persistence import PersistenceDiagram, compute_persistence, constant_filtration, edge_filtration
from .pooling import PoolingConfig, init_params, tip_forward
from .training import evaluate_topology_preservation, train_topo_similarity
from .wl import ph_distinguish, wl_refine

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "generate",
    "load_graphs",
    "save_graphs",
    "PersistenceDiagram",
    "compute_persistence",
    "constant_filtration",
    "edge_filtration",
    "TransformConfig",
    "topo_loss",
    "wasserstein1",
    "PoolingConfig",
    "init_params",
    "tip_forward",
    "train_topo_similarity",
    "evaluate_topology_preservation",
    "wl_refine",
    "ph_distinguish",
    "ParameterError",
    "ParseError",
    "ProtocolError",
    "TrainingError",
    "NumericError",
    "InternalError",
]
