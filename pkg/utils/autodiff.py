"""
Forward-mode automatic differentiation with sparse Jacobians.

An ``AdArray`` carries a value vector and the sparse Jacobian of that value
with respect to the full unknown vector. Variables are seeded with rows of the
identity, so the Jacobian of any expression built from the primitives below is
assembled exactly and with the sparsity of the underlying stencils.
"""

from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from utils.sparse import finalize

Number = Union[float, int, np.ndarray]


def _diag(values: np.ndarray) -> sp.csr_matrix:
    values = np.array(values, dtype=float)
    n = values.shape[0]
    idx = np.arange(n)
    return sp.csr_matrix((values, (idx, idx)), shape=(n, n))


class AdArray:
    """Value vector with its sparse Jacobian."""

    # numpy operands defer to the reflected methods below
    __array_ufunc__ = None

    def __init__(self, val: np.ndarray, jac):
        self.val = np.asarray(val, dtype=float)
        self.jac = sp.csr_matrix(jac)
        if self.jac.shape[0] != self.val.shape[0]:
            raise ValueError(
                f"Jacobian rows {self.jac.shape[0]} do not match value size {self.val.shape[0]}"
            )

    @property
    def num_dofs(self) -> int:
        return self.jac.shape[1]

    def __len__(self) -> int:
        return self.val.shape[0]

    def __repr__(self) -> str:
        return f"AdArray(size={self.val.shape[0]}, dofs={self.num_dofs}, nnz={self.jac.nnz})"

    def _lift(self, other) -> "AdArray":
        if isinstance(other, AdArray):
            return other
        val = np.broadcast_to(np.asarray(other, dtype=float), self.val.shape)
        return AdArray(val.copy(), sp.csr_matrix(self.jac.shape))

    def __neg__(self) -> "AdArray":
        return AdArray(-self.val, -self.jac)

    def __add__(self, other) -> "AdArray":
        other = self._lift(other)
        return AdArray(self.val + other.val, self.jac + other.jac)

    __radd__ = __add__

    def __sub__(self, other) -> "AdArray":
        other = self._lift(other)
        return AdArray(self.val - other.val, self.jac - other.jac)

    def __rsub__(self, other) -> "AdArray":
        return self._lift(other) - self

    def __mul__(self, other) -> "AdArray":
        if not isinstance(other, AdArray):
            factor = np.broadcast_to(np.asarray(other, dtype=float), self.val.shape)
            return AdArray(self.val * factor, _diag(factor) @ self.jac)
        return AdArray(
            self.val * other.val,
            _diag(other.val) @ self.jac + _diag(self.val) @ other.jac,
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "AdArray":
        if not isinstance(other, AdArray):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other ** -1

    def __rtruediv__(self, other) -> "AdArray":
        return self ** -1 * other

    def __pow__(self, exponent: float) -> "AdArray":
        if isinstance(exponent, AdArray):
            raise TypeError("Only scalar exponents are supported")
        exponent = float(exponent)
        return AdArray(
            self.val ** exponent,
            _diag(exponent * self.val ** (exponent - 1.0)) @ self.jac,
        )

    def __getitem__(self, index) -> "AdArray":
        idx = np.arange(self.val.shape[0])[index]
        return AdArray(self.val[idx], self.jac[idx])


class SparseOperator:
    """Linear map given by a sparse matrix: gathers, scatters, divergences."""

    def __init__(self, matrix, name: str = ""):
        self.matrix = finalize(matrix)
        self.name = name

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def __matmul__(self, other):
        if isinstance(other, AdArray):
            return AdArray(self.matrix @ other.val, self.matrix @ other.jac)
        return self.matrix @ np.asarray(other, dtype=float)

    def __repr__(self) -> str:
        return f"SparseOperator({self.name!r}, shape={self.shape}, nnz={self.matrix.nnz})"


def value(x) -> np.ndarray:
    """Plain value of an AdArray or array."""
    return x.val if isinstance(x, AdArray) else np.asarray(x, dtype=float)


def initialize_variables(x: np.ndarray, blocks: Sequence[slice]) -> List[AdArray]:
    """Seed one AdArray per block of the unknown vector ``x``."""
    x = np.asarray(x, dtype=float)
    eye = sp.identity(x.shape[0], format="csr")
    return [AdArray(x[block], eye[block]) for block in blocks]


def concatenate(parts: Sequence, num_dofs: int) -> AdArray:
    """Stack AdArrays (or constant arrays) into one residual vector."""
    vals = []
    jacs = []
    for part in parts:
        if isinstance(part, AdArray):
            vals.append(part.val)
            jacs.append(part.jac)
        else:
            arr = np.atleast_1d(np.asarray(part, dtype=float))
            vals.append(arr)
            jacs.append(sp.csr_matrix((arr.shape[0], num_dofs)))
    return AdArray(np.concatenate(vals), sp.vstack(jacs, format="csr"))


def jacobian(
    residual_fn: Callable[..., AdArray],
    x: np.ndarray,
    blocks: Sequence[slice] = None,
) -> Tuple[np.ndarray, sp.csr_matrix]:
    """
    Evaluate a residual and its Jacobian.

    Args:
        residual_fn: callable taking one AdArray per block and returning an AdArray
        x: state vector
        blocks: partition of ``x`` passed to ``residual_fn`` (whole vector if None)

    Returns:
        (residual value, sparse Jacobian in canonical CSR form)
    """
    x = np.asarray(x, dtype=float)
    if blocks is None:
        blocks = [slice(0, x.shape[0])]
    result = residual_fn(*initialize_variables(x, blocks))
    if not isinstance(result, AdArray):
        raise TypeError(f"Residual function returned {type(result).__name__}, expected AdArray")
    return result.val, finalize(result.jac)
