"""Pivotal-node discovery in longitudinal brain region-volume cohorts.

The pipeline turns two-timepoint region-volume tables into per-patient
differential graphs (pairwise products of relative volume changes), scores
nodes by iteratively reweighted spectral feature selection over a group-weighted
Laplacian, extracts consensus pivotal nodes across a regularization grid, and
evaluates their discriminative power with a deterministic multinomial
logistic-regression baseline (one-vs-rest ROC, micro/macro AUC, Youden cutoffs).

Stages are exposed both as library functions and as CLI subcommands
(``synth | select | union | classify | viz``).
"""

__version__ = "0.1.0"

from .cohort import (
    CohortDataset,
    CohortError,
    Patient,
    ValidNodeSet,
    compute_valid_nodes,
    parse_volume_table,
    summarize_cohort,
    write_volume_table,
)
from .diffgraph import (
    DifferentialGraph,
    RatioVector,
    build_differential_graph,
    cohort_graphs,
    patient_ratios,
    ratio_change,
    restrict_graph,
)
from .spectral import EigenDecomposition, laplacian, smallest_k_eigenvectors, sym_eig
from .selection import (
    ConsensusConfig,
    MfsConfig,
    PivotalNodeSet,
    SelectionResult,
    SolverError,
    SolverState,
    ViewWeighting,
    aggregate_laplacian,
    consensus_pivotal,
    make_view_weights,
    mfs_solve,
    run_grid,
    select_pivotal,
    union_pivotal,
)
from .subgraph import EdgeList, apply_cutoff, export_dot, group_mean_graph
from .classify import (
    EvalReport,
    FeatureMatrix,
    LinearModel,
    RocCurve,
    auc,
    ovr_report,
    predict_proba,
    roc_curve,
    stratified_split,
    train,
    vectorize,
    youden_cutoff,
)
from .synth import SynthConfig, generate_cohort
