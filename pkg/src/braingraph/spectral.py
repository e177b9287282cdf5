"""Graph Laplacians and the dense symmetric eigendecomposition contract.

The Laplacian is ``L = diag(row sums of S) - S`` with the degree sum taken
over the whole row including the diagonal; ``L @ 1 == 0`` either way, and the
diagonal of S cancels. Inputs may carry negative weights, so L and weighted
sums of Laplacians are in general indefinite; everything here supports that.

`sym_eig` wraps the dense LAPACK solver and enforces a deterministic contract:
eigenvalues ascending, and in each eigenvector column the entry of largest
absolute value is non-negative (ties broken by lowest index). Residual,
orthonormality, and trace identities are part of the contract and are enforced
by the test suite rather than re-checked on every call.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class EigenDecomposition(NamedTuple):
    """Ascending eigenvalues with sign-normalized eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _check_symmetric(A: np.ndarray, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 0.0)
    if float(np.max(np.abs(A - A.T), initial=0.0)) > 1e-12 * scale:
        raise ValueError(f"{name} is not symmetric within 1e-12 relative")
    return A


def laplacian(S: np.ndarray) -> np.ndarray:
    """L = diag(row sums of S) - S for a symmetric, possibly signed S."""
    S = _check_symmetric(S, "S")
    return np.diag(S.sum(axis=1)) - S


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximizer, which realizes the lowest-index
    # tie-break of the sign convention.
    lead = np.argmax(np.abs(V), axis=0)
    signs = np.where(V[lead, np.arange(V.shape[1])] < 0.0, -1.0, 1.0)
    return V * signs


def sym_eig(A: np.ndarray) -> EigenDecomposition:
    """Full decomposition of a symmetric matrix, deterministic across runs."""
    A = _check_symmetric(A, "A")
    if A.size and not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    w, V = np.linalg.eigh(A)
    return EigenDecomposition(w, _fix_signs(V))


def smallest_k_eigenvectors(A: np.ndarray, k: int) -> np.ndarray:
    """Columns are the eigenvectors of the k smallest eigenvalues, ascending."""
    A = np.asarray(A, dtype=float)
    if not 1 <= k <= A.shape[0]:
        raise ValueError(f"k must be in [1, {A.shape[0]}], got {k}")
    return sym_eig(A).eigenvectors[:, :k]
