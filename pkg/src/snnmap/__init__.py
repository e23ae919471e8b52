"""Map spiking neural networks onto 2D-mesh NoC neuromorphic hardware."""

from .fileio import load_graph, load_trace, save_graph, save_trace
from .hops import average_hop, hop_distance
from .mapper import SearchConfig, random_mapping, search, swap_neighbor
from .model import (
    CommMatrix,
    Mapping,
    MeshTopology,
    ModelError,
    Partitioning,
    SnnGraph,
    SpikeEvent,
    SpikeTrace,
    comm_matrix,
    cut_weight,
)
from .noc import EnergyParams, MetricsReport, SimOptions, route_xy, simulate
from .partition import coarsen, initial_partition, partition, uncoarsen_refine
from .pipeline import PipelineConfig, report_compare, run_baseline, run_pipeline
from .synth import gen_feedforward, gen_random

__version__ = "0.1.0"
