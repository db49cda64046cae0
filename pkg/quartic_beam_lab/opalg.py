"""Dense operator algebra on a quadrature grid.

Operators act on coefficients in the symmetrized basis: a grid function f
is represented by √w_j f_j, and an integral kernel K by
√w_i K(x_i, x_j) √w_j. In this basis the L² adjoint is the conjugate
transpose.
"""
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from loguru import logger
from scipy import linalg

from .errors import AssemblyError, DegenerateOperatorError, InvalidArgumentError, PreconditionError
from .quadrature import QuadratureGrid, symmetrized, unsymmetrized

# Reciprocal condition numbers below this are treated as singular
SINGULAR_RCOND = 1e-14

# Relative threshold for the inverse of the Schur complement on range(S)
FESHBACH_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class KernelOperator:
    matrix: np.ndarray
    grid: Optional[QuadratureGrid] = None

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ f

    def apply_grid(self, f: np.ndarray) -> np.ndarray:
        """Apply to a grid function and return a grid function"""
        if self.grid is None:
            raise InvalidArgumentError("Operator has no grid attached")
        return unsymmetrized(self.matrix @ symmetrized(f, self.grid), self.grid)

    def compose(self, other: "KernelOperator") -> "KernelOperator":
        return KernelOperator(self.matrix @ other.matrix, self.grid or other.grid)

    def adjoint(self) -> "KernelOperator":
        return KernelOperator(self.matrix.conj().T, self.grid)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.solve(self.matrix, rhs)

    def svd(self):
        return linalg.svd(self.matrix)

    def __matmul__(self, other):
        if isinstance(other, KernelOperator):
            return self.compose(other)
        return self.apply(other)

    def __add__(self, other: "KernelOperator") -> "KernelOperator":
        return KernelOperator(self.matrix + other.matrix, self.grid or other.grid)

    def __sub__(self, other: "KernelOperator") -> "KernelOperator":
        return KernelOperator(self.matrix - other.matrix, self.grid or other.grid)

    def __mul__(self, scalar) -> "KernelOperator":
        return KernelOperator(scalar * self.matrix, self.grid)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Projection(KernelOperator):
    """Orthogonal projection onto the span of orthonormal columns of basis"""
    basis: Optional[np.ndarray] = None

    @property
    def rank(self) -> int:
        if self.basis is None:
            return int(round(float(np.trace(self.matrix).real)))
        return self.basis.shape[1]

    @cached_property
    def complement(self) -> "Projection":
        n = self.matrix.shape[0]
        return Projection(np.eye(n) - self.matrix, self.grid, basis=None)


def projection_from_basis(basis: np.ndarray, grid: Optional[QuadratureGrid] = None) -> Projection:
    basis = np.asarray(basis)
    return Projection(basis @ basis.conj().T, grid, basis=basis)


def empty_projection(n: int, grid: Optional[QuadratureGrid] = None) -> Projection:
    return Projection(np.zeros((n, n)), grid, basis=np.zeros((n, 0)))


def range_basis(P, threshold: float = 0.5) -> np.ndarray:
    """Orthonormal columns spanning range(P) for a Hermitian projection P"""
    if isinstance(P, Projection) and P.basis is not None:
        return P.basis
    matrix = P.matrix if isinstance(P, KernelOperator) else np.asarray(P)
    values, vectors = linalg.eigh(0.5 * (matrix + matrix.conj().T))
    return vectors[:, values > threshold]


def compress(A, basis: np.ndarray) -> np.ndarray:
    """B* A B"""
    matrix = A.matrix if isinstance(A, KernelOperator) else np.asarray(A)
    return basis.conj().T @ matrix @ basis


def expand(B: np.ndarray, basis: np.ndarray, grid: Optional[QuadratureGrid] = None) -> KernelOperator:
    """basis B basis*"""
    return KernelOperator(basis @ B @ basis.conj().T, grid)


def assemble_nystrom(kernel: Callable, grid: QuadratureGrid, diagonal: Optional[np.ndarray] = None) -> KernelOperator:
    """Symmetrized Nyström matrix √w_i K(x_i, x_j) √w_j (+ diag(diagonal)).

    kernel is called once with broadcastable point arrays of shapes
    (n, 1, 3) and (1, n, 3).
    """
    nodes = grid.nodes
    K = np.asarray(kernel(nodes[:, None, :], nodes[None, :, :]))
    if K.shape != (grid.size, grid.size):
        K = np.broadcast_to(K, (grid.size, grid.size))
    bad = ~np.isfinite(K)
    if np.any(bad):
        i, j = (int(k) for k in np.argwhere(bad)[0])
        raise AssemblyError(i, j, nodes[i], nodes[j], K[i, j])
    sw = grid.sqrt_weights
    matrix = sw[:, None] * K * sw[None, :]
    if diagonal is not None:
        matrix = matrix + np.diag(diagonal)
    return KernelOperator(matrix, grid)


def multiplication_operator(values, grid: QuadratureGrid) -> KernelOperator:
    return KernelOperator(np.diag(np.asarray(values)), grid)


def singular_values(A) -> np.ndarray:
    matrix = A.matrix if isinstance(A, KernelOperator) else np.asarray(A)
    if matrix.size == 0:
        return np.zeros(0)
    return linalg.svdvals(matrix)


def operator_norm(A) -> float:
    sigma = singular_values(A)
    return float(sigma[0]) if sigma.size else 0.0


def smallest_singular(A) -> float:
    sigma = singular_values(A)
    return float(sigma[-1]) if sigma.size else 0.0


def absolute_norm(A) -> float:
    """Operator norm of the entrywise absolute value |A|"""
    matrix = A.matrix if isinstance(A, KernelOperator) else np.asarray(A)
    return operator_norm(np.abs(matrix))


def null_space_basis(matrix: np.ndarray, rel_tol: float):
    """Right singular vectors with σ <= rel_tol σ_max, and all singular values"""
    if not 0 < rel_tol < 1:
        raise InvalidArgumentError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    if matrix.size == 0:
        return np.zeros((matrix.shape[1], 0)), np.zeros(0)
    _, sigma, vh = linalg.svd(matrix)
    if sigma[0] == 0:
        raise DegenerateOperatorError("Operator is identically zero; null space is undefined")
    null = sigma <= rel_tol * sigma[0]
    return vh[null].conj().T, sigma


def null_space_projection(A, rel_tol: float = 1e-8) -> Projection:
    """Orthogonal projection onto singular directions with σ <= rel_tol σ_max"""
    matrix = A.matrix if isinstance(A, KernelOperator) else np.asarray(A)
    grid = A.grid if isinstance(A, KernelOperator) else None
    basis, sigma = null_space_basis(matrix, rel_tol)
    logger.debug(f"Null space of rank {basis.shape[1]} (σ_max={sigma[0]:.3e}, σ_min={sigma[-1]:.3e})")
    return projection_from_basis(basis, grid)


def checked_lu(matrix: np.ndarray):
    """LU factors and reciprocal 1-norm condition estimate of a square matrix"""
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            lu, piv = linalg.lu_factor(matrix, check_finite=True)
        except (linalg.LinAlgWarning, linalg.LinAlgError, ValueError) as e:
            return None, 0.0, str(e)
    gecon, = linalg.get_lapack_funcs(('gecon',), (lu,))
    anorm = np.linalg.norm(matrix, 1)
    rcond, info = gecon(lu, anorm, norm='1')
    if info != 0 or not np.isfinite(rcond):
        return None, 0.0, f"gecon info={info}"
    return (lu, piv), float(rcond), None


def feshbach_inverse(A, S: Projection, tol: float = FESHBACH_TOL) -> Optional[KernelOperator]:
    """A^-1 through the Schur complement a = S - S(A+S)^-1 S.

    Returns None when a is not invertible on range(S), which means A is
    not invertible.
    """
    matrix = A.matrix if isinstance(A, KernelOperator) else np.asarray(A)
    grid = A.grid if isinstance(A, KernelOperator) else None
    n = matrix.shape[0]
    shifted = matrix + S.matrix
    factors, rcond, detail = checked_lu(shifted)
    if factors is None or rcond < SINGULAR_RCOND:
        raise PreconditionError(f"A + S is numerically singular (rcond={rcond:.3e}{', ' + detail if detail else ''})")
    X = linalg.lu_solve(factors, np.eye(n, dtype=shifted.dtype))
    if S.rank == 0:
        return KernelOperator(X, grid)
    basis = range_basis(S)
    a = np.eye(basis.shape[1]) - basis.conj().T @ X @ basis
    sigma = linalg.svdvals(a)
    if sigma[-1] <= tol * max(sigma[0], 1.0):
        logger.debug(f"Schur complement is singular on range(S): σ_min={sigma[-1]:.3e}")
        return None
    a_inv = linalg.inv(a)
    XB = X @ basis
    BX = basis.conj().T @ X
    return KernelOperator(X + XB @ a_inv @ BX, grid)
