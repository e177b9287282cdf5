"""Row-sparse spectral node scoring with grid consensus.

One patient's differential graph is one view of the shared node set. Views are
aggregated as ``M = sum_v alpha_v * L(S_v)`` where the weights encode the
question being asked: a subtraction weighting between groups A and B assigns
``|B|/|A|`` to A's patients and ``-1`` to B's (total positive weight equals
total negative weight), a single-group weighting takes one group with weight 1,
and the whole-cohort weighting takes everyone with weight 1. M is indefinite in
the subtraction case and everything here tolerates that.

The solver minimizes ``Tr(W' M W) + lambda * sum_i sqrt(||W^i||^2 + eps)``
over orthonormal W by alternating two steps from ``D = I``:

1. W <- eigenvectors of the k smallest eigenvalues of ``M + lambda * diag(D)``
2. ``D_ii <- 1 / (2 * sqrt(||W^i||^2 + eps))``

The eigen step is the global minimizer for fixed D and the D update is a
majorize-minimize step, so the smoothed objective is non-increasing, also for
indefinite M. Node scores are the row norms ``||W^i||``; rankings sort scores
descending with ties broken by ascending node index.

Consensus: over a (lambda, k) grid, a node passes one grid point when it ranks
in the top ``top_K`` there; nodes passing at least ``min_pass_count`` of the
grid points are pivotal. Pivotal sets from several weightings can be unioned,
merging pass counts by maximum.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohort import CohortDataset, ValidNodeSet, compute_valid_nodes
from .diffgraph import DifferentialGraph, cohort_graphs, restrict_graph
from .spectral import laplacian, sym_eig

SCHEMA_VERSION = 1


class SolverError(RuntimeError):
    """Numerical failure inside the eigen iteration."""


class DegeneracyWarning(RuntimeWarning):
    """Eigenvalue gap at index k fell below 1e-10: scores near the selection
    boundary depend on the eigenvector basis and may not be stable."""


@dataclass(frozen=True)
class ViewWeighting:
    """Per-patient view weights alpha_v plus a human-readable description.

    Construct directly to override the named schemes with arbitrary
    per-patient (or per-group, expanded by the caller) weights.
    """

    weights: dict[str, float]
    description: str


def make_view_weights(
    dataset: CohortDataset,
    scheme: str,
    groups: Sequence[str] | str | None = None,
) -> ViewWeighting:
    """Build the weighting for one of the three schemes.

    scheme "subtraction" needs groups (A, B) and assigns |B|/|A| to A's
    patients and -1 to B's; "group" needs one group, weight 1; "cohort" weights
    every patient 1.
    """

    def require(group: str) -> None:
        if dataset.group_sizes.get(group, 0) == 0:
            raise ValueError(f"empty group {group!r}")

    if scheme == "subtraction":
        if groups is None or isinstance(groups, str) or len(groups) != 2:
            raise ValueError("subtraction weighting needs exactly two groups")
        a, b = groups
        if a == b:
            raise ValueError("subtraction groups must differ")
        require(a)
        require(b)
        alpha = dataset.group_sizes[b] / dataset.group_sizes[a]
        weights = {}
        for p in dataset.patients:
            if p.group == a:
                weights[p.patient_id] = alpha
            elif p.group == b:
                weights[p.patient_id] = -1.0
        return ViewWeighting(weights, f"{a.lower()}-{b.lower()} subtraction")
    if scheme == "group":
        if isinstance(groups, str):
            g = groups
        elif groups is not None and len(groups) == 1:
            g = groups[0]
        else:
            raise ValueError("group weighting needs exactly one group")
        require(g)
        weights = {p.patient_id: 1.0 for p in dataset.patients if p.group == g}
        return ViewWeighting(weights, f"single-group:{g}")
    if scheme == "cohort":
        if groups:
            raise ValueError("cohort weighting takes no groups")
        return ViewWeighting({p.patient_id: 1.0 for p in dataset.patients}, "whole-cohort")
    raise ValueError(f"unknown weighting scheme {scheme!r}")


def aggregate_laplacian(
    graphs: Sequence[DifferentialGraph], weights: ViewWeighting
) -> np.ndarray:
    """M = sum over weighted patients of alpha_v * laplacian(S_v)."""
    present = {g.patient_id for g in graphs}
    missing = [pid for pid, w in weights.weights.items() if w != 0.0 and pid not in present]
    if missing:
        raise ValueError(f"weighted patients missing from graphs: {missing[:3]}")
    d = graphs[0].d if graphs else 0
    M = np.zeros((d, d))
    for g in graphs:
        w = weights.weights.get(g.patient_id, 0.0)
        if w == 0.0:
            continue
        if g.d != d:
            raise ValueError(f"dimension mismatch: {g.d} != {d}")
        M += w * laplacian(g.matrix)
    return M


@dataclass(frozen=True)
class MfsConfig:
    """One grid point of the solver: tradeoff lam, projection dimension k."""

    lam: float
    k: int
    epsilon: float = 1e-10
    tol: float = 1e-6
    max_iter: int = 100

    def __post_init__(self) -> None:
        if self.lam < 0.0:
            raise ValueError("lam must be non-negative")
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.tol <= 0.0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")


@dataclass
class SolverState:
    """Final iterate plus per-iteration diagnostics."""

    W: np.ndarray
    D_diag: np.ndarray
    iteration: int
    objective_trace: list[float]
    ortho_defects: list[float]
    min_eigengap: float


@dataclass
class SelectionResult:
    """Scores and ranking for one (lam, k) setting."""

    config: MfsConfig
    scores: np.ndarray
    ranking: np.ndarray
    converged: bool
    iterations_used: int


def rank_nodes(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; ties resolve to the lower node index."""
    s = np.asarray(scores)
    return np.lexsort((np.arange(len(s)), -s))


def mfs_solve(M: np.ndarray, config: MfsConfig) -> tuple[SelectionResult, SolverState]:
    """Run the alternating eigen / reweighting iteration on one matrix."""
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    if config.k > d:
        raise ValueError(f"k exceeds node count ({config.k} > {d})")
    if not np.all(np.isfinite(M)):
        raise SolverError("aggregate matrix contains non-finite entries")

    k = config.k
    D = np.ones(d)
    scores_prev: np.ndarray | None = None
    objective_trace: list[float] = []
    ortho_defects: list[float] = []
    min_gap = math.inf
    converged = False
    iteration = 0
    W = np.empty((d, k))

    while iteration < config.max_iter:
        iteration += 1
        A = M.copy()
        A[np.diag_indices(d)] += config.lam * D
        try:
            eigenvalues, V = sym_eig(A)
        except np.linalg.LinAlgError as e:
            raise SolverError(f"eigendecomposition failed: {e}") from e
        W = V[:, :k]
        if k < d:
            min_gap = min(min_gap, float(eigenvalues[k] - eigenvalues[k - 1]))
        scores = np.linalg.norm(W, axis=1)
        if not np.all(np.isfinite(scores)):
            raise SolverError("scores became non-finite")
        smoothed = np.sqrt(scores**2 + config.epsilon)
        objective_trace.append(float(np.sum(W * (M @ W)) + config.lam * np.sum(smoothed)))
        ortho_defects.append(float(np.linalg.norm(W.T @ W - np.eye(k))))
        D = 1.0 / (2.0 * smoothed)
        if scores_prev is not None:
            if np.max(np.abs(scores - scores_prev)) <= config.tol * np.max(scores):
                converged = True
                scores_prev = scores
                break
        scores_prev = scores

    if min_gap < 1e-10:
        warnings.warn(
            f"eigenvalue gap {min_gap:.2e} at k={k}: ranking near the boundary "
            "is basis-dependent",
            DegeneracyWarning,
            stacklevel=2,
        )
    assert scores_prev is not None
    result = SelectionResult(
        config=config,
        scores=scores_prev,
        ranking=rank_nodes(scores_prev),
        converged=converged,
        iterations_used=iteration,
    )
    state = SolverState(W, D, iteration, objective_trace, ortho_defects, min_gap)
    return result, state


@dataclass(frozen=True)
class ConsensusConfig:
    """Hyperparameter grid plus the pass thresholds for pivotal extraction.

    The pass threshold may be given as a count (``min_pass_count``) or as a
    fraction of the grid (``min_pass_ratio``, resolved as the smallest count
    reaching that fraction); with neither, the default count is 41.
    """

    top_K: int = 30
    min_pass_count: int | None = None
    min_pass_ratio: float | None = None
    lambda_grid: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    k_grid: tuple[int, ...] = (15, 20, 25, 30, 35, 40, 45, 50, 55)
    epsilon: float = 1e-10
    tol: float = 1e-6
    max_iter: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))
        object.__setattr__(self, "k_grid", tuple(int(x) for x in self.k_grid))
        if self.top_K < 1:
            raise ValueError("top_K must be positive")
        if not self.lambda_grid or not self.k_grid:
            raise ValueError("grids must be non-empty")
        if any(x < 0 for x in self.lambda_grid) or any(x < 1 for x in self.k_grid):
            raise ValueError("lambda values must be >= 0 and k values >= 1")
        if self.min_pass_count is not None and self.min_pass_ratio is not None:
            raise ValueError("give min_pass_count or min_pass_ratio, not both")
        if not 1 <= self.resolved_min_pass() <= self.grid_size():
            raise ValueError(
                f"min pass {self.resolved_min_pass()} outside [1, {self.grid_size()}]"
            )

    def grid_size(self) -> int:
        return len(self.lambda_grid) * len(self.k_grid)

    def resolved_min_pass(self) -> int:
        if self.min_pass_count is not None:
            return int(self.min_pass_count)
        if self.min_pass_ratio is not None:
            if not 0.0 < self.min_pass_ratio <= 1.0:
                raise ValueError("min_pass_ratio must be in (0, 1]")
            return max(1, math.ceil(self.min_pass_ratio * self.grid_size() - 1e-9))
        return 41

    def grid_configs(self) -> list[MfsConfig]:
        return [
            MfsConfig(lam, k, self.epsilon, self.tol, self.max_iter)
            for lam in self.lambda_grid
            for k in self.k_grid
        ]


@dataclass(frozen=True)
class PivotalNodeSet:
    """Consensus nodes with their pass counts and full provenance."""

    indices: tuple[int, ...]
    pass_counts: dict[int, int]
    node_count: int
    provenance: dict


def run_grid(
    graphs: Sequence[DifferentialGraph],
    weights: ViewWeighting,
    consensus: ConsensusConfig,
    jobs: int | None = None,
) -> list[SelectionResult]:
    """One SelectionResult per (lam, k), in grid order, independent of jobs."""
    M = aggregate_laplacian(graphs, weights)
    return run_grid_matrix(M, consensus, jobs)


def run_grid_matrix(
    M: np.ndarray, consensus: ConsensusConfig, jobs: int | None = None
) -> list[SelectionResult]:
    """Grid run on a prebuilt aggregate matrix."""
    d = M.shape[0]
    worst = max(consensus.k_grid)
    if worst > d:
        raise ValueError(f"k exceeds node count ({worst} > {d})")
    if consensus.top_K > d:
        raise ValueError(f"top_K exceeds node count ({consensus.top_K} > {d})")

    def solve(config: MfsConfig) -> SelectionResult:
        try:
            return mfs_solve(M, config)[0]
        except SolverError as e:
            raise SolverError(f"(lambda={config.lam:g}, k={config.k}): {e}") from e

    configs = consensus.grid_configs()
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1:
        return [solve(c) for c in configs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(solve, configs))


def count_top_k(results: Sequence[SelectionResult], top_K: int) -> np.ndarray:
    """Per-node count of grid points where the node ranked in the top top_K."""
    if not results:
        raise ValueError("no results to count")
    d = len(results[0].scores)
    counts = np.zeros(d, dtype=int)
    for r in results:
        if len(r.scores) != d:
            raise ValueError("results disagree on node count")
        counts[r.ranking[:top_K]] += 1
    return counts


def consensus_pivotal(
    results: Sequence[SelectionResult],
    consensus: ConsensusConfig,
    weighting: str | None = None,
) -> PivotalNodeSet:
    """Nodes whose top-K pass count reaches the configured threshold."""
    counts = count_top_k(results, consensus.top_K)
    min_pass = consensus.resolved_min_pass()
    indices = tuple(int(i) for i in np.flatnonzero(counts >= min_pass))
    provenance = {
        "weighting": weighting,
        "top_K": consensus.top_K,
        "min_pass_count": min_pass,
        "grid_size": consensus.grid_size(),
        "lambda_grid": list(consensus.lambda_grid),
        "k_grid": list(consensus.k_grid),
        "epsilon": consensus.epsilon,
        "tol": consensus.tol,
        "max_iter": consensus.max_iter,
    }
    return PivotalNodeSet(
        indices=indices,
        pass_counts={i: int(counts[i]) for i in indices},
        node_count=len(counts),
        provenance=provenance,
    )


def union_pivotal(sets: Sequence[PivotalNodeSet]) -> PivotalNodeSet:
    """Union of indices; pass counts merge by maximum."""
    if not sets:
        raise ValueError("no pivotal sets to union")
    node_count = sets[0].node_count
    if any(s.node_count != node_count for s in sets):
        raise ValueError("mismatched node spaces")
    merged: dict[int, int] = {}
    for s in sets:
        for i in s.indices:
            merged[i] = max(merged.get(i, 0), s.pass_counts.get(i, 0))
    return PivotalNodeSet(
        indices=tuple(sorted(merged)),
        pass_counts=merged,
        node_count=node_count,
        provenance={"union_of": [s.provenance for s in sets]},
    )


@dataclass
class SelectionOutcome:
    """Everything the select stage produces, in both index spaces.

    ``results`` live in the valid-node-restricted space; ``pivotal`` and
    ``pass_counts_full`` are mapped back to the original region space.
    """

    results: list[SelectionResult]
    pivotal: PivotalNodeSet
    valid_nodes: ValidNodeSet
    weighting: ViewWeighting
    pass_counts_full: dict[int, int]


def select_pivotal(
    dataset: CohortDataset,
    scheme: str,
    groups: Sequence[str] | str | None = None,
    consensus: ConsensusConfig | None = None,
    jobs: int | None = None,
) -> SelectionOutcome:
    """Full select stage: graphs, valid-node restriction, grid, consensus."""
    consensus = consensus or ConsensusConfig()
    weighting = make_view_weights(dataset, scheme, groups)
    valid = compute_valid_nodes(dataset)
    if not valid.indices:
        raise ValueError("no valid nodes shared by all groups")
    graphs = [restrict_graph(g, valid) for g in cohort_graphs(dataset)]
    results = run_grid(graphs, weighting, consensus, jobs)
    restricted = consensus_pivotal(results, consensus, weighting.description)
    counts = count_top_k(results, consensus.top_K)

    to_full = valid.indices
    provenance = dict(restricted.provenance)
    provenance["valid_node_count"] = len(valid)
    pivotal = PivotalNodeSet(
        indices=tuple(to_full[i] for i in restricted.indices),
        pass_counts={to_full[i]: c for i, c in restricted.pass_counts.items()},
        node_count=dataset.d,
        provenance=provenance,
    )
    pass_counts_full = {to_full[i]: int(c) for i, c in enumerate(counts)}
    return SelectionOutcome(results, pivotal, valid, weighting, pass_counts_full)


def pivotal_to_json(pset: PivotalNodeSet, node_names: Sequence[str]) -> dict:
    """JSON-ready dict with region names resolved per node."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "pivotal_node_set",
        "node_count": pset.node_count,
        "nodes": [
            {
                "node_index": i,
                "region_name": node_names[i],
                "pass_count": pset.pass_counts.get(i, 0),
            }
            for i in pset.indices
        ],
        "provenance": pset.provenance,
    }


def pivotal_from_json(doc: dict) -> tuple[PivotalNodeSet, dict[int, str]]:
    """Inverse of `pivotal_to_json`; also returns the index -> name map."""
    if doc.get("kind") != "pivotal_node_set":
        raise ValueError("not a pivotal node set document")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    nodes = doc["nodes"]
    indices = tuple(int(n["node_index"]) for n in nodes)
    if list(indices) != sorted(set(indices)):
        raise ValueError("node indices must be sorted and distinct")
    pset = PivotalNodeSet(
        indices=indices,
        pass_counts={int(n["node_index"]): int(n["pass_count"]) for n in nodes},
        node_count=int(doc["node_count"]),
        provenance=doc.get("provenance", {}),
    )
    names = {int(n["node_index"]): str(n["region_name"]) for n in nodes}
    return pset, names


def results_to_json(
    results: Sequence[SelectionResult],
    node_names: Sequence[str],
    index_map: Sequence[int] | None = None,
    weighting: str | None = None,
) -> dict:
    """Full rankings for every grid point, with original-space node indices.

    ``index_map`` maps active (restricted) indices to original ones; identity
    when omitted. ``node_names`` is indexed by original index.
    """
    if index_map is None:
        index_map = range(len(results[0].scores)) if results else range(0)
    out = []
    for r in results:
        out.append(
            {
                "lambda": r.config.lam,
                "k": r.config.k,
                "epsilon": r.config.epsilon,
                "tol": r.config.tol,
                "max_iter": r.config.max_iter,
                "converged": r.converged,
                "iterations_used": r.iterations_used,
                "ranking": [
                    {
                        "node_index": int(index_map[n]),
                        "region_name": node_names[index_map[n]],
                        "score": float(r.scores[n]),
                    }
                    for n in r.ranking
                ],
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "selection_results",
        "weighting": weighting,
        "active_node_count": len(results[0].scores) if results else 0,
        "results": out,
    }
