"""Zero-energy resonance ladder: S1 ⊇ S2 ⊇ S3, T1, T2, T3 and D0..D3.

All subspace work happens on orthonormal bases in the symmetrized basis:
QL² is spanned by the columns of SpectralAssembly.q_basis, and each S_j
is spanned by columns expressed in full-grid coordinates.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy import linalg, optimize

from .birman import SpectralAssembly, assemble_spectral
from .errors import InvalidArgumentError, LadderInconsistencyError
from .freekernel import series_kernel
from .model import Classification, ResonanceReport, ScanPoint, ScanResult
from .opalg import (
    KernelOperator,
    Projection,
    absolute_norm,
    empty_projection,
    expand,
    null_space_basis,
    operator_norm,
    projection_from_basis,
)
from .potential import Potential, decay_hypothesis_warnings, with_coupling
from .quadrature import QuadratureGrid, unsymmetrized
from .utils import parallel_map

DEFAULT_RANK_TOL = 1e-8

# Bisection stops once brackets are this narrow relative to their upper end
BRACKET_REL_WIDTH = 1e-4


@dataclass(frozen=True, eq=False)
class ResonanceLadder:
    """Bases of S1, S2, S3 and the compressed operators of the ladder"""
    q_basis: np.ndarray
    s1_basis: np.ndarray
    s2_basis: np.ndarray
    s3_basis: np.ndarray
    QTQ: np.ndarray
    T1: Optional[np.ndarray] = None
    T2: Optional[np.ndarray] = None
    T3: Optional[np.ndarray] = None
    D0: Optional[KernelOperator] = None
    D1: Optional[KernelOperator] = None
    D2: Optional[KernelOperator] = None
    D3: Optional[KernelOperator] = None

    def projection(self, name: str) -> Projection:
        basis = {'S1': self.s1_basis, 'S2': self.s2_basis, 'S3': self.s3_basis}[name]
        if basis.shape[1] == 0:
            return empty_projection(basis.shape[0])
        return projection_from_basis(basis)


@dataclass(frozen=True)
class ResonanceFunction:
    phi: np.ndarray
    c0: float
    residual: float


def _shifted_inverse(A: np.ndarray, null: np.ndarray) -> np.ndarray:
    """(A + S)^-1 with S the projection onto the columns of null"""
    return linalg.inv(A + null @ null.conj().T)


def _ladder_step(name: str, A: np.ndarray, parent: np.ndarray, rel_tol: float):
    null, sigma = null_space_basis(A, rel_tol)
    logger.debug(f"{name}: σ_max={sigma[0]:.3e} σ_min={sigma[-1]:.3e}, kernel rank {null.shape[1]}")
    D = expand(_shifted_inverse(A, null), parent)
    return parent @ null, sigma, D


def classify(sa: SpectralAssembly, rel_tol: float = DEFAULT_RANK_TOL) -> ResonanceReport:
    """Runs the resonance ladder and classifies zero energy"""
    if not 0 < rel_tol < 1:
        raise InvalidArgumentError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    T = sa.T.matrix
    Z = sa.q_basis
    QTQ = Z.T @ T @ Z
    B1, sigma0, D0 = _ladder_step("QTQ", QTQ, Z, rel_tol)
    n = sa.grid.size
    empty = np.zeros((n, 0))
    spectra = {'QTQ': sigma0.tolist()}
    ladder = dict(q_basis=Z, s1_basis=B1, s2_basis=empty, s3_basis=empty, QTQ=QTQ, D0=D0)
    classification = Classification.Regular

    if B1.shape[1] > 0:
        classification = Classification.FirstKind
        vG1v = sa.vGv(1)
        TPT = T @ sa.P.matrix @ T
        T1 = B1.T @ TPT @ B1 - sa.l1 / (3 * (8 * np.pi) ** 2) * (B1.T @ vG1v @ B1)
        B2, sigma1, D1 = _ladder_step("T1", T1, B1, rel_tol)
        spectra['T1'] = sigma1.tolist()
        ladder.update(T1=T1, s2_basis=B2, D1=D1)

        if B2.shape[1] > 0:
            classification = Classification.SecondKind
            k = 10.0 / (3.0 * sa.l1)
            inner = sa.vGv(3) + k * (vG1v @ vG1v) - k * (vG1v @ T @ D1.matrix @ T @ vG1v)
            T2 = B2.T @ inner @ B2
            B3, sigma2, D2 = _ladder_step("T2", T2, B2, rel_tol)
            spectra['T2'] = sigma2.tolist()
            ladder.update(T2=T2, s3_basis=B3, D2=D2)

            if B3.shape[1] > 0:
                classification = Classification.ThirdKind
                T3 = B3.T @ sa.vGv(4) @ B3
                sigma3 = linalg.svdvals(T3)
                spectra['T3'] = sigma3.tolist()
                if sigma3[-1] <= rel_tol * sigma3[0]:
                    raise LadderInconsistencyError(
                        f"T3 is singular on S3 (rank {B3.shape[1]}, σ_min/σ_max={sigma3[-1] / sigma3[0]:.3e}); "
                        f"the grid is probably under-resolved"
                    )
                ladder.update(T3=T3, D3=expand(linalg.inv(T3), B3))

    result = ResonanceLadder(**ladder)
    ranks = {name: int(basis.shape[1]) for name, basis in
             (('S1', result.s1_basis), ('S2', result.s2_basis), ('S3', result.s3_basis))}
    report = ResonanceReport(
        classification=classification,
        ranks=ranks,
        singular_spectra=spectra,
        coupling=sa.potential.coupling,
        tolerance=rel_tol,
        ladder=result,
    )
    report.residuals = orthogonality_residuals(report, sa)
    report.absolute_norms = {'QD0Q': absolute_norm(result.D0)}
    report.resonance_residuals = [fn.residual for fn in resonance_functions(report, sa)]
    report.warnings = decay_hypothesis_warnings(sa.potential, classification)
    logger.info(f"Zero energy is {classification.value} (ranks {ranks}, c={sa.potential.coupling:g})")
    return report


def _ladder(report: ResonanceReport) -> ResonanceLadder:
    if report.ladder is None:
        raise InvalidArgumentError("Report carries no ladder; run classify first")
    return report.ladder


def _relative(value: float, scale: float) -> float:
    return value / scale if scale > 0 else value


def _block_norm(left: np.ndarray, A: np.ndarray, right: np.ndarray) -> float:
    if left.shape[1] == 0 or right.shape[1] == 0:
        return 0.0
    return operator_norm(left.conj().T @ A @ right)


def _moment_overlap(vectors: np.ndarray, basis: np.ndarray) -> float:
    """max |⟨m, f⟩| / ‖m‖ over moment vectors m and basis columns f"""
    if basis.shape[1] == 0:
        return 0.0
    norms = np.linalg.norm(vectors, axis=1)
    overlaps = np.abs(vectors @ basis) / norms[:, None]
    return float(overlaps.max())


def orthogonality_residuals(report: ResonanceReport, sa: SpectralAssembly) -> Dict[str, float]:
    """Orthogonality relations of the ladder subspaces, relative to the operator scale"""
    ladder = _ladder(report)
    T = sa.T.matrix
    vG1v = sa.vGv(1)
    t_scale = operator_norm(T)
    g_scale = operator_norm(vG1v)
    Z, B1, B2, B3 = ladder.q_basis, ladder.s1_basis, ladder.s2_basis, ladder.s3_basis
    p = (sa.vw / np.linalg.norm(sa.vw))[:, None]
    x = sa.grid.nodes.T
    first = x * sa.vw
    second = np.array([x[i] * x[j] * sa.vw for i in range(3) for j in range(i, 3)])

    residuals = {
        'QTS1': _relative(_block_norm(Z, T, B1), t_scale),
        'S1TQ': _relative(_block_norm(B1, T, Z), t_scale),
        'PTS2': _relative(_block_norm(p, T, B2), t_scale),
        'x_v_S2': _moment_overlap(first, B2),
        'xx_v_S3': _moment_overlap(second, B3),
        'vG1vS3': _relative(0.0 if B3.shape[1] == 0 else operator_norm(vG1v @ B3), g_scale),
        'S2T': _relative(0.0 if B2.shape[1] == 0 else operator_norm(T @ B2), t_scale),
        'QvG1vS2': _relative(_block_norm(Z, vG1v, B2), g_scale),
    }
    residuals.update(ladder_identity_residuals(report, sa))
    return residuals


def _identity_residual(D: Optional[KernelOperator], basis: np.ndarray) -> Tuple[float, float]:
    """(‖S D - S‖, ‖D S - S‖) for S spanned by basis"""
    if D is None or basis.shape[1] == 0:
        return 0.0, 0.0
    left = operator_norm(basis.conj().T @ D.matrix - basis.conj().T)
    right = operator_norm(D.matrix @ basis - basis)
    return left, right


def ladder_identity_residuals(report: ResonanceReport, sa: SpectralAssembly) -> Dict[str, float]:
    """S_i D_j = D_j S_i = S_i for i > j, and Q D0 = D0 Q = D0"""
    ladder = _ladder(report)
    residuals = {}
    for name, D, basis in (('S1D0', ladder.D0, ladder.s1_basis),
                           ('S2D1', ladder.D1, ladder.s2_basis),
                           ('S3D2', ladder.D2, ladder.s3_basis)):
        left, right = _identity_residual(D, basis)
        residuals[name] = left
        residuals[name[2:] + name[:2]] = right
    Q = sa.Q.matrix
    D0 = ladder.D0.matrix
    scale = operator_norm(D0)
    residuals['QD0'] = _relative(operator_norm(Q @ D0 - D0), scale)
    residuals['D0Q'] = _relative(operator_norm(D0 @ Q - D0), scale)
    return residuals


def reconstruct_resonance_function(f, sa: SpectralAssembly, kind: Classification) -> ResonanceFunction:
    """φ = -G0 v f + c0 for a grid function f in S1L², with the residual ‖f - Uvφ‖.

    c0 = ⟨v, Tf⟩ / ‖V‖_L1 for the first kind and 0 otherwise.
    """
    kind = Classification(kind)
    if kind == Classification.Regular:
        raise InvalidArgumentError("A regular point has no resonance function")
    grid = sa.grid
    f = np.asarray(f)
    if f.shape != (grid.size,):
        raise InvalidArgumentError(f"f has shape {f.shape}, expected ({grid.size},)")
    fs = f * grid.sqrt_weights
    c0 = 0.0
    if kind == Classification.FirstKind:
        c0 = float(np.real(sa.vw @ (sa.T.matrix @ fs)) / sa.l1)
    h = sa.v * f
    phi = -(series_kernel(0, sa.distances) @ (grid.weights * h) + sa.kink_correction * h) + c0
    diff = f - sa.U * sa.v * phi
    residual = float(np.sqrt(np.sum(np.abs(diff) ** 2 * grid.weights)))
    return ResonanceFunction(phi=phi, c0=c0, residual=residual)


def resonance_functions(report: ResonanceReport, sa: SpectralAssembly) -> List[ResonanceFunction]:
    """Resonance functions for S1 basis vectors, then for S2 vectors at the detected kind"""
    ladder = _ladder(report)
    functions = [reconstruct_resonance_function(unsymmetrized(col, sa.grid), sa, Classification.FirstKind)
                 for col in ladder.s1_basis.T]
    if report.classification in (Classification.SecondKind, Classification.ThirdKind):
        functions += [reconstruct_resonance_function(unsymmetrized(col, sa.grid), sa, report.classification)
                      for col in ladder.s2_basis.T]
    return functions


@dataclass(frozen=True, eq=False)
class _LinearQTQ:
    """QTQ(c) = A + c B on QL², exact for V = c V0.

    When U is constant A = U I, so the spectrum is U + c μ for the
    eigenvalues μ of B, computed once.
    """
    A: Optional[np.ndarray]
    B: np.ndarray
    shift: Optional[float] = None
    b_eigenvalues: Optional[np.ndarray] = None

    def eigenvalues(self, c: float) -> np.ndarray:
        if self.shift is not None:
            # ascending for c > 0
            return self.shift + c * self.b_eigenvalues
        return linalg.eigvalsh(self.A + c * self.B)

    def sample(self, c: float) -> ScanPoint:
        eig = self.eigenvalues(c)
        sigma = np.abs(eig)
        return ScanPoint(c=float(c), sigma_min=float(sigma.min()), sigma_max=float(sigma.max()),
                         negative_count=int(np.sum(eig < 0)))


def _linear_qtq(V0: Potential, grid: QuadratureGrid) -> _LinearQTQ:
    sa = assemble_spectral(with_coupling(V0, 1.0), grid)
    Z = sa.q_basis
    B = Z.T @ sa.vGv(0) @ Z
    B = 0.5 * (B + B.T)
    if np.all(sa.U == sa.U[0]):
        return _LinearQTQ(A=None, B=B, shift=float(sa.U[0]), b_eigenvalues=linalg.eigvalsh(B))
    A = Z.T @ (sa.U[:, None] * Z)
    return _LinearQTQ(A=0.5 * (A + A.T), B=B)


def _bisect(qtq: _LinearQTQ, lo: float, hi: float, n_lo: int) -> Tuple[float, float]:
    while (hi - lo) > BRACKET_REL_WIDTH * hi:
        mid = 0.5 * (lo + hi)
        if int(np.sum(qtq.eigenvalues(mid) < 0)) == n_lo:
            lo = mid
        else:
            hi = mid
    return lo, hi


def refine_root(qtq: _LinearQTQ, bracket: Tuple[float, float]) -> float:
    """Brent's method on the eigenvalue of QTQ(c) that changes sign in bracket"""
    lo, hi = bracket
    n_lo = int(np.sum(qtq.eigenvalues(lo) < 0))
    n_hi = int(np.sum(qtq.eigenvalues(hi) < 0))
    index = min(n_lo, n_hi)
    root = optimize.brentq(lambda c: qtq.eigenvalues(c)[index], lo, hi, xtol=1e-15 * hi)
    logger.debug(f"Refined resonant coupling {root:.15g} in [{lo:.8g}, {hi:.8g}]")
    return float(root)


def coupling_scan(V0: Potential, grid: QuadratureGrid, c_range: Sequence[float] = (0.5, 40.0),
                  steps: int = 32, rel_tol: float = DEFAULT_RANK_TOL) -> ScanResult:
    """Samples σ(QTQ) over couplings c V0 and locates the resonant couplings.

    Inertia changes of QTQ(c) between samples are bisected to relative
    width 1e-4 and refined with Brent's method.
    """
    c_min, c_max = (float(c) for c in c_range)
    if not 0 < c_min < c_max:
        raise InvalidArgumentError(f"Coupling range must satisfy 0 < c_min < c_max, got {c_range}")
    if steps < 8:
        raise InvalidArgumentError(f"Coupling scan needs at least 8 steps, got {steps}")
    qtq = _linear_qtq(V0, grid)
    couplings = np.geomspace(c_min, c_max, steps)
    points = parallel_map(qtq.sample, couplings)

    brackets, roots = [], []
    for left, right in zip(points, points[1:]):
        if left.negative_count == right.negative_count:
            continue
        bracket = _bisect(qtq, left.c, right.c, left.negative_count)
        brackets.append(bracket)
        roots.append(refine_root(qtq, bracket))
    for point in points:
        dipped = point.sigma_min <= rel_tol * point.sigma_max
        if dipped and not any(lo <= point.c <= hi for lo, hi in brackets):
            brackets.append((point.c, point.c))
            roots.append(point.c)

    order = np.argsort(roots)
    result = ScanResult(points=points, brackets=[brackets[i] for i in order],
                        roots=[roots[i] for i in order], tolerance=rel_tol)
    logger.info(f"Coupling scan over [{c_min:g}, {c_max:g}] found {len(result.roots)} resonant couplings: "
                f"{', '.join(f'{c:.6g}' for c in result.roots)}")
    return result


def scan_to_frame(result: ScanResult) -> pd.DataFrame:
    return pd.DataFrame({
        'c': [p.c for p in result.points],
        'sigma_min': [p.sigma_min for p in result.points],
        'sigma_max': [p.sigma_max for p in result.points],
    })
