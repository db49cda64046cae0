"""Birman–Schwinger operators M^±(λ) = U + v R0^±(λ⁴) v and their zero-energy pieces."""
import threading
import uuid
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Sequence

import numpy as np
from cachetools import LRUCache
from loguru import logger
from scipy import linalg
from scipy.spatial.distance import cdist

from .errors import InvalidArgumentError, SpectralSingularityError
from .freekernel import (
    ProfileKind,
    free_resolvent_kernel,
    kernel_matrix,
    kernel_matrix_from_distances,
    parse_sign,
    profile_value,
    series_coefficient,
    series_term,
)
from .model import BornCheckReport, ExpansionRecord, ExpansionReport
from .opalg import SINGULAR_RCOND, KernelOperator, Projection, checked_lu, operator_norm, projection_from_basis
from .potential import Potential, SignAmplitude, decompose_sign_amplitude
from .quadrature import QuadratureGrid, box_distance_integral
from .settings import get_settings
from .utils import LogLogFit, local_orders, loglog_fit, parallel_map

DEFAULT_LAMBDA0 = 0.1


@dataclass(frozen=True, eq=False)
class SpectralAssembly:
    """Zero-energy data of M^±(λ) on one grid: U, v, P, Q, T and ‖V‖_L1"""
    potential: Potential
    grid: QuadratureGrid
    sign_amplitude: SignAmplitude
    l1: float
    key: str = field(default_factory=lambda: uuid.uuid4().hex)

    @property
    def U(self) -> np.ndarray:
        return self.sign_amplitude.U

    @property
    def v(self) -> np.ndarray:
        return self.sign_amplitude.v

    @cached_property
    def vw(self) -> np.ndarray:
        """v in the symmetrized basis, √w v"""
        return self.grid.sqrt_weights * self.v

    @cached_property
    def distances(self) -> np.ndarray:
        return cdist(self.grid.nodes, self.grid.nodes)

    @cached_property
    def kink_correction(self) -> np.ndarray:
        """g_i = -(∫_box |x_i - y| dy - Σ_k w_k |x_i - x_k|) / 8π.

        Added on the diagonal of the G0 block, it makes the discrete G0 exact
        on constants, which removes the leading Nyström error of the kink of
        |x - y| at x = y.
        """
        exact = box_distance_integral(self.grid.nodes, self.grid.radius)
        return series_term(0, 1).scale * (exact - self.distances @ self.grid.weights)

    def node_kernel(self, lam: float, sign) -> np.ndarray:
        """R0^±(λ⁴)(x_i, x_j) with the kink correction g_i / w_i on the diagonal"""
        K = kernel_matrix_from_distances(lam, self.distances, sign)
        K[np.diag_indices_from(K)] += self.kink_correction / self.grid.weights
        return K

    @cached_property
    def P(self) -> Projection:
        return projection_from_basis((self.vw / np.linalg.norm(self.vw))[:, None], self.grid)

    @cached_property
    def q_basis(self) -> np.ndarray:
        """Orthonormal basis of QL²"""
        return linalg.null_space(self.vw[None, :])

    @cached_property
    def Q(self) -> Projection:
        return projection_from_basis(self.q_basis, self.grid)

    @cached_property
    def T(self) -> KernelOperator:
        return KernelOperator(np.diag(self.U) + self.vGv(0), self.grid)

    @cached_property
    def _vgv(self) -> Dict[int, np.ndarray]:
        return {}

    def vGv(self, k: int) -> np.ndarray:
        """Matrix of v G_k v in the symmetrized basis"""
        if k not in self._vgv:
            G = series_term(k, 1).kernel(self.distances)
            if k == 0:
                G[np.diag_indices_from(G)] += self.kink_correction / self.grid.weights
            self._vgv[k] = self.vw[:, None] * G * self.vw[None, :]
        return self._vgv[k]

    def a_tilde(self, sign) -> complex:
        return series_coefficient(-1, sign) * self.l1


def assemble_spectral(V: Potential, grid: QuadratureGrid) -> SpectralAssembly:
    sa = decompose_sign_amplitude(V, grid)
    l1 = float(np.sum(np.abs(sa.values) * grid.weights))
    assembly = SpectralAssembly(potential=V, grid=grid, sign_amplitude=sa, l1=l1)
    logger.info(f"Assembled {V.family.value} (c={V.coupling:g}) on {grid.size} nodes, ‖V‖_L1={l1:.6g}")
    return assembly


def _check_lambda(lam):
    if not np.isfinite(lam) or lam <= 0:
        raise InvalidArgumentError(f"λ must be positive, got {lam}")


def assemble_M(sa: SpectralAssembly, lam: float, sign) -> KernelOperator:
    _check_lambda(lam)
    K = sa.node_kernel(lam, sign)
    return KernelOperator(np.diag(sa.U).astype(complex) + sa.vw[:, None] * K * sa.vw[None, :], sa.grid)


_factorization_cache = None
_factorization_lock = threading.Lock()


def _get_factorization_cache():
    """Get or initialize the M(λ) factorization cache"""
    global _factorization_cache
    if _factorization_cache is None:
        settings = get_settings()
        _factorization_cache = LRUCache(maxsize=settings.factorization_cache_size)
    return _factorization_cache


def clear_factorization_cache():
    cache = _get_factorization_cache()
    with _factorization_lock:
        old_size = len(cache)
        cache.clear()
    if old_size > 0:
        logger.debug(f"Cleared factorization cache, removed {old_size} entries")


def _factorize(sa: SpectralAssembly, lam: float, sign: int):
    M = assemble_M(sa, lam, sign).matrix
    factors, rcond, detail = checked_lu(M)
    if factors is None or rcond < SINGULAR_RCOND:
        raise SpectralSingularityError(lam, detail or f"rcond={rcond:.3e}")
    return factors


def factorize_M(sa: SpectralAssembly, lam: float, sign, use_cache: bool = True):
    """LU factors of M^±(λ); raises SpectralSingularityError when singular"""
    _check_lambda(lam)
    sign = parse_sign(sign)
    if not use_cache:
        return _factorize(sa, lam, sign)
    key = (sa.key, float(lam), sign)
    cache = _get_factorization_cache()
    with _factorization_lock:
        if key in cache:
            logger.trace(f"Cache HIT for M factorization at λ={lam:.6g}")
            return cache[key]
    factors = _factorize(sa, lam, sign)
    with _factorization_lock:
        cache[key] = factors
    return factors


def invert_M(sa: SpectralAssembly, lam: float, sign) -> KernelOperator:
    factors = factorize_M(sa, lam, sign)
    X = linalg.lu_solve(factors, np.eye(sa.grid.size, dtype=complex))
    if not np.all(np.isfinite(X)):
        raise SpectralSingularityError(lam, "non-finite inverse")
    return KernelOperator(X, sa.grid)


def lambda_sweep_norms(sa: SpectralAssembly, sign, lams: Sequence[float]) -> np.ndarray:
    """‖M^±(λ)^-1‖ for each λ, in input order"""
    return np.array(parallel_map(lambda lam: operator_norm(invert_M(sa, lam, sign)), lams))


def m_inverse_blowup_order(sa: SpectralAssembly, sign, lams: Sequence[float],
                           lambda0: float = DEFAULT_LAMBDA0) -> LogLogFit:
    """Slope of log ‖M^-1(λ)‖ against log λ on a small-λ sequence"""
    lams = np.asarray(lams, dtype=float)
    if lams.size < 3:
        raise InvalidArgumentError(f"Need at least 3 λ values, got {lams.size}")
    if np.any(lams <= 0) or np.any(lams > lambda0):
        raise InvalidArgumentError(f"λ values must lie in (0, λ0={lambda0}]")
    norms = lambda_sweep_norms(sa, sign, lams)
    fit = loglog_fit(lams, norms)
    logger.info(f"‖M^-1(λ)‖ blow-up exponent {fit.slope:.3f} ± {fit.stderr:.3f}")
    return fit


def truncated_M(sa: SpectralAssembly, lam: float, sign, order: int) -> np.ndarray:
    """U + Σ_{k=-1}^{order} coefficient_k λ^k v G_k v"""
    total = np.diag(sa.U).astype(complex)
    for k in range(-1, order + 1):
        term = series_term(k, sign)
        if term.coefficient == 0:
            continue
        total = total + term.coefficient * lam ** k * sa.vGv(k)
    return total


def _expansion_report(sign, order, lams, residuals) -> ExpansionReport:
    fit = loglog_fit(lams, residuals)
    records = [ExpansionRecord(lam=float(lam), residual_norm=float(res), fitted_order=local)
               for lam, res, local in zip(lams, residuals, local_orders(lams, residuals))]
    return ExpansionReport(sign=sign, order=order, records=records,
                           fitted_order=fit.slope, stderr=fit.stderr)


def expansion_residuals(sa: SpectralAssembly, sign, lams: Sequence[float], order: int) -> ExpansionReport:
    """Residual norms of M^±(λ) minus its expansion truncated after λ^order.

    order 0 keeps ã/λ P + T, order 1 adds a1 λ v G1 v.
    """
    sign = parse_sign(sign)
    lams = np.asarray(lams, dtype=float)

    def residual(lam):
        return operator_norm(assemble_M(sa, lam, sign).matrix - truncated_M(sa, lam, sign, order))

    residuals = np.array(parallel_map(residual, lams))
    report = _expansion_report(sign, order, lams, residuals)
    logger.info(f"Expansion of order {order}: fitted residual order {report.fitted_order:.3f}")
    return report


def gamma_derivative_orders(sa: SpectralAssembly, sign, lams: Sequence[float]) -> ExpansionReport:
    """λ ‖∂λ Γ1(λ)‖ where Γ1 = M - ã/λ P - T"""
    sign = parse_sign(sign)
    lams = np.asarray(lams, dtype=float)

    def scaled_derivative(lam):
        _check_lambda(lam)
        r = sa.distances
        p = lam * r
        dR = (r * profile_value(ProfileKind.F, sign, p, 1) / (8 * np.pi * lam)
              - profile_value(ProfileKind.F, sign, p) / (8 * np.pi * lam ** 2))
        dGamma = sa.vw[:, None] * dR * sa.vw[None, :] + sa.a_tilde(sign) / lam ** 2 * sa.P.matrix
        return lam * operator_norm(dGamma)

    values = np.array(parallel_map(scaled_derivative, lams))
    return _expansion_report(sign, 0, lams, values)


def _paired_points(xs, ys):
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if xs.shape != ys.shape:
        raise InvalidArgumentError(f"Point arrays differ in shape: {xs.shape} vs {ys.shape}")
    return xs, ys


def resolvent_correction(sa: SpectralAssembly, lam: float, xs, ys, sign, use_cache: bool = True) -> np.ndarray:
    """R0 v M^-1 v R0 (x, y) for paired rows of xs and ys"""
    xs, ys = _paired_points(xs, ys)
    factors = factorize_M(sa, lam, sign, use_cache=use_cache)
    rx = kernel_matrix(lam, xs, sa.grid.nodes, sign) * sa.vw[None, :]
    ry = kernel_matrix(lam, ys, sa.grid.nodes, sign) * sa.vw[None, :]
    W = linalg.lu_solve(factors, ry.T)
    return np.einsum('mj,jm->m', rx, W)


def perturbed_resolvent_kernel(sa: SpectralAssembly, lam: float, xs, ys, sign) -> np.ndarray:
    """R_V^±(λ⁴)(x, y) = R0 - R0 v M^-1 v R0 for paired rows of xs and ys"""
    xs, ys = _paired_points(xs, ys)
    return free_resolvent_kernel(lam, xs, ys, sign) - resolvent_correction(sa, lam, xs, ys, sign)


def sign_consistency_residual(sa: SpectralAssembly, lam: float, xs, ys) -> float:
    """max |R_V^+(λ⁴)(x, y) - conj(R_V^-(λ⁴)(x, y))|"""
    plus = perturbed_resolvent_kernel(sa, lam, xs, ys, 1)
    minus = perturbed_resolvent_kernel(sa, lam, xs, ys, -1)
    return float(np.max(np.abs(plus - np.conj(minus))))


def born_identity_residual(sa: SpectralAssembly, lam: float, xs, ys, sign) -> BornCheckReport:
    """Compares R_V with R0 - R0 V R0 + R0 V R_V V R0 on the grid"""
    sign = parse_sign(sign)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    factors = factorize_M(sa, lam, sign)
    nodes = sa.grid.nodes
    K = sa.node_kernel(lam, sign)
    vK = sa.vw[:, None] * K
    RV_nodes = K - vK.T @ linalg.lu_solve(factors, vK)
    wV = sa.grid.weights * sa.sign_amplitude.values
    Ax = kernel_matrix(lam, xs, nodes, sign)
    Ay = kernel_matrix(lam, ys, nodes, sign)
    once = np.einsum('mj,j,mj->m', Ax, wV, Ay)
    twice = np.einsum('mj,jk,mk->m', Ax * wV, RV_nodes, Ay * wV)
    identity = free_resolvent_kernel(lam, xs, ys, sign) - once + twice
    RV = perturbed_resolvent_kernel(sa, lam, xs, ys, sign)
    residual = float(np.max(np.abs(RV - identity)))
    logger.info(f"Born identity residual at λ={lam:g}: {residual:.3e}")
    return BornCheckReport(lam=lam, sign=sign, max_residual=residual, max_kernel=float(np.max(np.abs(RV))))
