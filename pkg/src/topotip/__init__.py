"""Multi-scale topological tipping detection for time-evolving point clouds.

Builds measure topological networks (kernel + persistence cycles + incidence
hypergraph) per frame, couples them with an entropic alternating-Sinkhorn
transport solve, reconstructs intermediate states along transport geodesics,
and tracks distortion and entropy early-warning indicators.
"""

from .entropy import (
    EntropyField,
    HypergraphEntropySummary,
    align_cycles,
    he_edge,
    he_sym,
    he_vertex,
    hypergraph_entropies,
    point_level_field,
    spectral_entropy,
)
from .geodesic import (
    IndicatorRow,
    IndicatorTable,
    MatchingError,
    baseline_curves,
    classical_mds,
    dynamic_curves,
    extract_matching,
    interpolate_sq_dist,
    procrustes_align,
    reconstruct_frame,
)
from .mtn import MeasureTopologicalNetwork, MtnConfig, build_mtn
from .persistence import (
    Filtration,
    PersistenceDiagram,
    PersistencePair,
    build_vr_filtration,
    compute_persistence,
    persistence_entropy,
    top_k_pairs,
)
from .point_data import (
    PointCloud,
    SequenceDataset,
    SequenceParseError,
    SequenceSchemaError,
    load_sequence,
    pairwise_sq_dist,
    resample,
    save_sequence,
    save_table,
    standardize,
)
from .synth import (
    DorsognaParams,
    IntegrationError,
    PotentialSpec,
    make_sequence,
    sample_mh,
    simulate_dorsogna,
)
from .tpot import (
    CouplingPair,
    DistortionBreakdown,
    TpotConfig,
    TpotNumericalError,
    evaluate_distortions,
    sinkhorn_log,
    solve_tpot,
)

__version__ = "0.1.0"
