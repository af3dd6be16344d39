"""
Sparse and small dense linear algebra.

Sparse matrices are SciPy CSR matrices in canonical form. LU factors come from
SuperLU with a COLAMD fill-reducing column ordering and partial pivoting, after
a row/column equilibration: the pressure, flux and multiplier unknowns of the
flow block differ by many orders of magnitude.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from config.settings import settings
from utils.exceptions import NoConvergence, SingularMatrix

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

SparseMatrix = sp.csr_matrix


def finalize(A) -> sp.csr_matrix:
    """Return ``A`` as CSR with summed duplicates, sorted indices and no explicit zeros."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


@dataclass
class LUFactors:
    """SuperLU factors of the equilibrated matrix diag(r) A diag(c)."""
    lu: spla.SuperLU
    row_scale: np.ndarray
    col_scale: np.ndarray
    shape: Tuple[int, int]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b for a vector or a block of column vectors."""
        b = np.asarray(b)
        if np.iscomplexobj(b):
            return self.solve(b.real) + 1j * self.solve(b.imag)
        if b.ndim == 1:
            return self.col_scale * self.lu.solve(self.row_scale * b)
        return self.col_scale[:, None] * self.lu.solve(self.row_scale[:, None] * b)


def _equilibrate(A: sp.csr_matrix) -> Tuple[np.ndarray, np.ndarray]:
    absA = abs(A)
    row_max = np.asarray(absA.max(axis=1).todense()).ravel()
    if np.any(row_max == 0):
        raise SingularMatrix(f"Matrix has {int(np.sum(row_max == 0))} empty rows")
    r = 1.0 / row_max
    col_max = np.asarray((sp.diags(r) @ absA).max(axis=0).todense()).ravel()
    if np.any(col_max == 0):
        raise SingularMatrix(f"Matrix has {int(np.sum(col_max == 0))} empty columns")
    return r, 1.0 / col_max


def lu_factor(A, pivot_threshold: Optional[float] = None) -> LUFactors:
    """
    Factor a square sparse matrix.

    Args:
        A: square sparse matrix
        pivot_threshold: relative zero-pivot threshold (default from settings)

    Returns:
        LUFactors usable through ``LUFactors.solve``

    Raises:
        SingularMatrix: if a pivot is below threshold * max|U_ii|
    """
    A = finalize(A)
    if A.shape[0] != A.shape[1]:
        raise SingularMatrix(f"Cannot factor a non-square matrix of shape {A.shape}")
    threshold = settings.PIVOT_THRESHOLD if pivot_threshold is None else pivot_threshold
    r, c = _equilibrate(A)
    scaled = (sp.diags(r) @ A @ sp.diags(c)).tocsc()
    try:
        lu = spla.splu(scaled, permc_spec="COLAMD")
    except RuntimeError as e:
        logger.error(f"Sparse LU failed: {e}")
        raise SingularMatrix(f"Failed to factor matrix of shape {A.shape}: {e}")
    pivots = np.abs(lu.U.diagonal())
    if pivots.size and pivots.min() <= threshold * pivots.max():
        raise SingularMatrix(
            f"Zero pivot: min |U_ii| = {pivots.min():.3e}, max |U_ii| = {pivots.max():.3e}"
        )
    return LUFactors(lu=lu, row_scale=r, col_scale=c, shape=A.shape)


def solve(factors: LUFactors, b: np.ndarray) -> np.ndarray:
    """Solve with precomputed factors."""
    return factors.solve(b)


@dataclass
class SchurForm:
    """Real Schur decomposition H = Z T Z^T with eigenvalues sorted by real part."""
    T: np.ndarray
    Z: np.ndarray
    eigenvalues: np.ndarray
    num_selected: int = 0


def _block_eigenvalues(T: np.ndarray) -> np.ndarray:
    """Eigenvalues of a quasi-triangular matrix in diagonal order."""
    m = T.shape[0]
    values = np.empty(m, dtype=complex)
    i = 0
    while i < m:
        if i + 1 < m and T[i + 1, i] != 0.0:
            values[i:i + 2] = la.eigvals(T[i:i + 2, i:i + 2])
            if values[i].imag < values[i + 1].imag:
                values[i], values[i + 1] = values[i + 1], values[i]
            i += 2
        else:
            values[i] = T[i, i]
            i += 1
    return values


def dense_eig_small(H: np.ndarray, select: Optional[Callable[[float, float], bool]] = None) -> SchurForm:
    """
    Real Schur form of a small dense matrix.

    Args:
        H: square matrix of dimension <= 500
        select: optional predicate on (real, imag) moving selected eigenvalues
            to the leading block

    Returns:
        SchurForm; ``eigenvalues`` are sorted by descending real part, conjugate
        pairs adjacent with positive imaginary part first

    Raises:
        NoConvergence: if the QR iteration fails
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {H.shape}")
    if H.shape[0] > 500:
        raise ValueError(f"Dense kernel limited to dimension 500, got {H.shape[0]}")
    try:
        if select is None:
            T, Z = la.schur(H, output="real")
            sdim = 0
        else:
            T, Z, sdim = la.schur(H, output="real", sort=select)
    except (la.LinAlgError, ValueError) as e:
        logger.error(f"Schur decomposition failed: {e}")
        raise NoConvergence(f"Failed to compute the Schur form: {e}")
    values = _block_eigenvalues(T)
    order = np.lexsort((-values.imag, -values.real))
    return SchurForm(T=T, Z=Z, eigenvalues=values[order], num_selected=int(sdim))
