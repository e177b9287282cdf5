"""Per-patient differential graphs from longitudinal volume changes.

For patient v and region j the relative change is
``r_vj = (volume_T1 - volume_T0) / volume_T0`` (negative means shrinkage).
The differential graph is the pairwise-product matrix ``S_jk = r_j * r_k``:
symmetric, rank one, with non-negative diagonal ``r_j**2``. Signs are kept
throughout so concordant (same-direction) and discordant pairs stay
distinguishable. Regions without a usable measurement pair contribute zero
rows and columns, keeping one shared index space across patients until
`restrict_graph` is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohort import CohortDataset, Patient, ValidNodeSet


@dataclass(frozen=True)
class RatioVector:
    """Per-region relative changes for one patient; masked-out entries are 0."""

    values: np.ndarray
    mask: np.ndarray
    patient_id: str
    group: str


@dataclass(frozen=True)
class DifferentialGraph:
    """Symmetric d x d pairwise-product matrix for one patient.

    ``index_map`` carries original region indices after `restrict_graph`; it is
    None for graphs in the full region space.
    """

    matrix: np.ndarray
    patient_id: str
    group: str
    index_map: tuple[int, ...] | None = None

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


def ratio_change(vol_t0: float, vol_t1: float) -> float:
    """Relative volume change (vol_t1 - vol_t0) / vol_t0; requires vol_t0 > 0."""
    if vol_t0 <= 0.0:
        raise ValueError(f"baseline volume must be positive, got {vol_t0}")
    return (vol_t1 - vol_t0) / vol_t0


def patient_ratios(patient: Patient, regions: Sequence[str]) -> RatioVector:
    """Ratio vector over the fixed region order; unusable pairs are masked out."""
    d = len(regions)
    values = np.zeros(d)
    mask = np.zeros(d, dtype=bool)
    for i, region in enumerate(regions):
        if patient.usable(region):
            values[i] = ratio_change(patient.t0[region], patient.t1[region])
            mask[i] = True
    return RatioVector(values, mask, patient.patient_id, patient.group)


def build_differential_graph(ratios: RatioVector) -> DifferentialGraph:
    """Outer product of the masked ratio vector with itself."""
    v = np.where(ratios.mask, ratios.values, 0.0)
    if not np.all(np.isfinite(v)):
        raise ValueError("ratio vector contains non-finite masked-in entries")
    return DifferentialGraph(np.outer(v, v), ratios.patient_id, ratios.group)


def cohort_graphs(dataset: CohortDataset) -> list[DifferentialGraph]:
    """One differential graph per patient, in dataset patient order."""
    return [
        build_differential_graph(patient_ratios(p, dataset.regions))
        for p in dataset.patients
    ]


def restrict_graph(
    graph: DifferentialGraph, nodes: ValidNodeSet | Sequence[int]
) -> DifferentialGraph:
    """Principal submatrix on the given node indices, relabeled consecutively.

    Indices must be sorted, distinct, and in range; the original indices are
    retained in ``index_map`` so region names can still be reported.
    """
    indices = tuple(nodes.indices if isinstance(nodes, ValidNodeSet) else nodes)
    if any(not 0 <= i < graph.d for i in indices):
        raise ValueError("node index out of range")
    if list(indices) != sorted(set(indices)):
        raise ValueError("node indices must be sorted and distinct")
    idx = np.asarray(indices, dtype=int)
    sub = graph.matrix[np.ix_(idx, idx)]
    if graph.index_map is not None:
        indices = tuple(graph.index_map[i] for i in indices)
    return DifferentialGraph(sub, graph.patient_id, graph.group, indices)


def matrix_csv(graph: DifferentialGraph) -> str:
    """Matrix as d rows x d comma-separated columns, full float precision."""
    return "\n".join(
        ",".join(repr(float(x)) for x in row) for row in graph.matrix
    ) + "\n"
