"""Propagator kernels through Stone's formula.

Every mode reduces to the scalar oscillatory integral

    K_α(t; x, y) = ∫_0^∞ e^{-itλ²} λ^{2+2α} D(λ; x, y) dλ

with the spectral density D(λ) = (2/(πi)) λ [R^+(λ⁴) - R^-(λ⁴)](x, y).
cos(t√H) is Re K_0, sin(t√H)/√H is -Im K_{-1}, and H^{α/2} e^{-it√H}
is K_α itself. The λ-axis is cut into a base panel [0, 2^{N_min}] and
dyadic panels supported in [2^{N-2}, 2^N], each split at 2^{N-1} into
two Gauss rules.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, linalg, special
from scipy.interpolate import BarycentricInterpolator

from .birman import SpectralAssembly, factorize_M, resolvent_correction
from .errors import InvalidArgumentError
from .model import Classification, PropagatorMode, PropagatorSample
from .opalg import operator_norm
from .quadrature import gauss_legendre, grid_radius_of_support
from .utils import parallel_map

# Smoothness of the Littlewood–Paley cutoff (C^5) and of χ (C^2)
PANEL_SMOOTHNESS = 5
CHI_SMOOTHNESS = 2

# Panel integrals beyond the truncation decay like (1+|t|4^N)^-TAIL_ORDER
TAIL_ORDER = PANEL_SMOOTHNESS + 1

N0_SENTINEL = int(np.iinfo(np.int32).min)
N_LIMIT = 40

# Low-energy Chebyshev tables start with the base interval [0, 2^TABLE_BASE_INDEX]
TABLE_BASE_INDEX = -8
TABLE_MIN_DEGREE = 24
TABLE_MAX_DEGREE = 512

DensityFn = Callable[[np.ndarray], np.ndarray]


def _smoothstep(x, k: int) -> np.ndarray:
    """Polynomial step of class C^k: 0 for x <= 0, 1 for x >= 1"""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    total = np.zeros_like(x)
    for n in range(k + 1):
        total += special.comb(k + n, n) * special.comb(2 * k + 1, k - n) * (-x) ** n
    return x ** (k + 1) * total


def cutoff_phi(s) -> np.ndarray:
    """Even cutoff, 1 on |s| <= 1/2 and 0 on |s| >= 1"""
    return 1.0 - _smoothstep(2.0 * np.abs(s) - 1.0, PANEL_SMOOTHNESS)


def cutoff_phi0(s) -> np.ndarray:
    """φ(s) - φ(2s), supported in 1/4 <= |s| <= 1"""
    return cutoff_phi(s) - cutoff_phi(2.0 * np.asarray(s, dtype=float))


def chi_cutoff(lam, lambda0: float) -> np.ndarray:
    """Low-energy cutoff χ: 1 on [0, λ0], 0 beyond 2λ0"""
    if lambda0 <= 0:
        raise InvalidArgumentError(f"λ0 must be positive, got {lambda0}")
    return 1.0 - _smoothstep(np.abs(lam) / lambda0 - 1.0, CHI_SMOOTHNESS)


def partition_sum(s, n_range: Tuple[int, int], include_base: bool = True) -> np.ndarray:
    """φ(2^-lo s) + Σ_{N=lo+1}^{hi} φ0(2^-N s), or the bare φ0 sum without the base term"""
    lo, hi = n_range
    s = np.asarray(s, dtype=float)
    total = cutoff_phi(2.0 ** -lo * s) if include_base else np.zeros_like(s)
    first = lo + 1 if include_base else lo
    for N in range(first, hi + 1):
        total = total + cutoff_phi0(2.0 ** -N * s)
    return total


def n0_index(psi: float, t: float) -> int:
    """N0 = ⌊(1/3) log2(Ψ/|t|)⌋, or a sentinel far below any panel index for Ψ = 0"""
    if t == 0:
        raise InvalidArgumentError("t must be non-zero")
    if psi < 0:
        raise InvalidArgumentError(f"Ψ must be >= 0, got {psi}")
    if psi == 0:
        return N0_SENTINEL
    return int(math.floor(math.log2(psi / abs(t)) / 3.0))


def theta_envelope(N: int, N0: int, t: float) -> float:
    if t == 0:
        raise InvalidArgumentError("t must be non-zero")
    u = 1.0 + abs(t) * 4.0 ** N
    return u ** -1.5 if abs(N - N0) <= 2 else u ** -2.0


def tail_estimate(t: float, n_max: int, alpha: float = 0.0, order: int = TAIL_ORDER) -> float:
    """Envelope sum Σ_{N > n_max} 2^{(3+2α)N} (1+|t|4^N)^-order"""
    total = 0.0
    for N in range(n_max + 1, n_max + 200):
        log_term = (3 + 2 * alpha) * N * math.log(2.0) - order * math.log1p(abs(t) * 2.0 ** (2 * N))
        term = math.exp(log_term)
        total += term
        if term <= 1e-17 * total and log_term < 0:
            break
    return total


class QuadratureBudget(BaseModel):
    """Node allocation and truncation controls of the dyadic quadrature"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    n_min: int = Field(
        description="Minimum Gauss nodes per half panel",
        default=16,
        ge=2
    )
    nodes_per_cycle: float = Field(
        description="Gauss nodes per oscillation cycle of the integrand",
        default=8.0,
        gt=0
    )
    n_cap: int = Field(
        description="Maximum Gauss nodes per half panel; reaching it flags the sample",
        default=4096,
        ge=2
    )
    tail_eps: float = Field(
        description="Target for the envelope estimate of the discarded panels",
        default=1e-8,
        gt=0
    )
    tail_phase: float = Field(
        description="Minimum phase |t|4^N at the last panel",
        default=1024.0,
        gt=0
    )

    @model_validator(mode='after')
    def check_caps(self):
        if self.n_cap < self.n_min:
            raise ValueError(f"n_cap ({self.n_cap}) must be >= n_min ({self.n_min})")
        return self


@dataclass(frozen=True, eq=False)
class DyadicPanel:
    """Gauss rule for one panel; weights include the cutoff and λ^{2+2α}"""
    N: int
    lower: float
    upper: float
    node_count: int
    capped: bool
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    base: bool = False


def node_count(t: float, psi: float, N: int, budget: QuadratureBudget) -> Tuple[int, bool]:
    """Nodes per half panel and whether the cap was hit"""
    cycles = 0.75 * (abs(t) * 4.0 ** N + psi * 2.0 ** N) / (2 * math.pi)
    n = max(budget.n_min, int(math.ceil(budget.nodes_per_cycle * cycles)))
    return min(n, budget.n_cap), n > budget.n_cap


def build_panels(t: float, psi: float, n_range: Sequence[int], alpha: float = 0.0,
                 budget: Optional[QuadratureBudget] = None) -> List[DyadicPanel]:
    if t == 0:
        raise InvalidArgumentError("t must be non-zero")
    n_range = list(n_range)
    if not n_range:
        raise InvalidArgumentError("Empty panel range")
    budget = budget or QuadratureBudget()
    power = 2.0 + 2.0 * alpha
    panels = []
    for N in n_range:
        n, capped = node_count(t, psi, N, budget)
        lo, mid, hi = 2.0 ** (N - 2), 2.0 ** (N - 1), 2.0 ** N
        x1, w1 = gauss_legendre(lo, mid, n)
        x2, w2 = gauss_legendre(mid, hi, n)
        nodes = np.concatenate([x1, x2])
        weights = np.concatenate([w1, w2]) * cutoff_phi0(nodes / hi) * nodes ** power
        panels.append(DyadicPanel(N=N, lower=lo, upper=hi, node_count=n, capped=capped,
                                  nodes=nodes, weights=weights))
    return panels


def base_panel(t: float, psi: float, n_min_index: int, alpha: float = 0.0,
               budget: Optional[QuadratureBudget] = None) -> DyadicPanel:
    """Rule for φ(2^-N λ) λ^{2+2α} on [0, 2^N]; Gauss–Jacobi on the first half"""
    budget = budget or QuadratureBudget()
    n, capped = node_count(t, psi, n_min_index, budget)
    power = 2.0 + 2.0 * alpha
    upper = 2.0 ** n_min_index
    half = 0.5 * upper
    x, w = special.roots_jacobi(n, 0.0, power)
    x1 = 0.5 * half * (x + 1.0)
    w1 = w * (0.5 * half) ** (power + 1.0)
    x2, w2 = gauss_legendre(half, upper, n)
    w2 = w2 * cutoff_phi(x2 / upper) * x2 ** power
    return DyadicPanel(N=n_min_index, lower=0.0, upper=upper, node_count=n, capped=capped,
                       nodes=np.concatenate([x1, x2]), weights=np.concatenate([w1, w2]), base=True)


def base_index(t: float) -> int:
    """N_min = min(0, ⌊(1/2) log2(1/|t|)⌋)"""
    return min(0, int(math.floor(0.5 * math.log2(1.0 / abs(t)))))


def truncation_index(t: float, psi: float, alpha: float, budget: QuadratureBudget) -> Tuple[int, float, bool]:
    """Smallest N_max past the stationary region with a small enough tail"""
    N = base_index(t) + 1
    while N <= N_LIMIT:
        tail = tail_estimate(t, N, alpha)
        if (abs(t) * 4.0 ** N >= budget.tail_phase and 2.0 ** (N - 2) >= 2.0 * psi / abs(t)
                and tail < budget.tail_eps):
            return N, tail, True
        N += 1
    logger.warning(f"No truncation index up to N={N_LIMIT} at t={t:g}, Ψ={psi:g}")
    return N_LIMIT, tail_estimate(t, N_LIMIT, alpha), False


def panel_plan(t: float, psi: float, alpha: float, budget: QuadratureBudget):
    """Base panel then dyadic panels in ascending N, with the tail estimate"""
    at = abs(t)
    lo = base_index(at)
    hi, tail, converged = truncation_index(at, psi, alpha, budget)
    panels = [base_panel(at, psi, lo, alpha, budget)] + build_panels(at, psi, range(lo + 1, hi + 1), alpha, budget)
    return panels, tail, converged


def panel_integrals(t: float, density: DensityFn, panels: Sequence[DyadicPanel]) -> np.ndarray:
    """∫ e^{-itλ²} (panel weight) D(λ) dλ per panel; shape (panels, pairs)"""
    rows = []
    for panel in panels:
        phase = panel.weights * np.exp(-1j * t * panel.nodes ** 2)
        rows.append(phase @ density(panel.nodes))
    return np.array(rows)


@dataclass(frozen=True)
class StoneIntegral:
    total: np.ndarray
    low: Optional[np.ndarray]
    est_error: float
    warn: bool
    n_max: int


def stone_integral(t: float, density: DensityFn, alpha: float, psi: float,
                   budget: Optional[QuadratureBudget] = None, lambda0: Optional[float] = None) -> StoneIntegral:
    """K_α(t) for every point pair of a real density, with its χ part when λ0 is given"""
    if t == 0:
        raise InvalidArgumentError("t must be non-zero")
    budget = budget or QuadratureBudget()
    at = abs(t)
    panels, tail, converged = panel_plan(at, psi, alpha, budget)
    total = 0.0
    low = 0.0
    scale = 0.0
    warn = not converged
    for panel in panels:
        D = density(panel.nodes)
        scale = max(scale, float(np.max(np.abs(D))))
        phase = panel.weights * np.exp(-1j * at * panel.nodes ** 2)
        total = total + phase @ D
        if lambda0 is not None and panel.nodes[0] < 2.0 * lambda0:
            low = low + (phase * chi_cutoff(panel.nodes, lambda0)) @ D
        if panel.capped:
            warn = True
            logger.debug(f"Panel N={panel.N} hit the node cap at t={t:g}")
    total = np.asarray(total)
    low = None if lambda0 is None else np.asarray(low) * np.ones_like(total)
    if t < 0:
        total = np.conj(total)
        low = None if low is None else np.conj(low)
    return StoneIntegral(total=total, low=low, est_error=tail * scale, warn=warn, n_max=panels[-1].N)


def free_spectral_density(distances) -> DensityFn:
    """D0(λ; r) = sin(λr) / (2π² λr)"""
    r = np.asarray(distances, dtype=float)

    def density(lam):
        return np.sinc(np.outer(lam, r) / np.pi) / (2 * np.pi ** 2)
    return density


def mode_alpha(mode: PropagatorMode, alpha: float = 0.0) -> float:
    mode = PropagatorMode(mode)
    if mode == PropagatorMode.cosine:
        return 0.0
    if mode == PropagatorMode.sine_over_sqrt:
        return -1.0
    return alpha


def mode_value(mode: PropagatorMode, K: np.ndarray) -> np.ndarray:
    """Propagator kernel from K_α for the given mode"""
    mode = PropagatorMode(mode)
    if mode == PropagatorMode.cosine:
        return K.real.astype(complex)
    if mode == PropagatorMode.sine_over_sqrt:
        return (-K.imag).astype(complex)
    return K


Point = Tuple[float, float, float]


class PropagatorRequest(BaseModel):
    """Kernel samples K(t; x, y) to compute"""
    model_config = ConfigDict(extra='forbid')

    mode: PropagatorMode = Field(
        description="Propagator mode",
        default=PropagatorMode.cosine
    )
    alpha: float = Field(
        description="Power α of H^{α/2} in halfwave mode",
        default=0.0
    )
    t: List[float] = Field(
        description="Non-zero times"
    )
    x: List[Point] = Field(
        description="First points of the sample pairs"
    )
    y: List[Point] = Field(
        description="Second points of the sample pairs"
    )
    free: bool = Field(
        description="Use the free operator Δ² instead of Δ² + V",
        default=True
    )
    lambda0: float = Field(
        description="Low/high energy split point of χ",
        default=0.1,
        gt=0
    )
    budget: QuadratureBudget = Field(
        description="Quadrature controls",
        default_factory=QuadratureBudget
    )

    @model_validator(mode='after')
    def check_request(self):
        if self.mode == PropagatorMode.halfwave and not -1.5 < self.alpha <= 0:
            raise ValueError(f"alpha must lie in (-3/2, 0], got {self.alpha}")
        if any(t == 0 for t in self.t):
            raise ValueError("Propagator times must be non-zero")
        if len(self.x) != len(self.y) or not self.x:
            raise ValueError(f"Need equally many x and y points, got {len(self.x)} and {len(self.y)}")
        return self

    @property
    def xs(self) -> np.ndarray:
        return np.array(self.x, dtype=float)

    @property
    def ys(self) -> np.ndarray:
        return np.array(self.y, dtype=float)

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.xs - self.ys, axis=1)


def _samples(request: PropagatorRequest, density: DensityFn, psi: float) -> List[PropagatorSample]:
    alpha = mode_alpha(request.mode, request.alpha)
    xs, ys = request.xs, request.ys

    def at_time(t):
        result = stone_integral(t, density, alpha, psi, request.budget, request.lambda0)
        values = mode_value(request.mode, result.total)
        low = mode_value(request.mode, result.low)
        return [PropagatorSample(t=t, x=tuple(x), y=tuple(y), mode=request.mode.value,
                                 re=float(value.real), im=float(value.imag),
                                 est_error=result.est_error, warn_flag=result.warn,
                                 low=float(abs(lo)), high=float(abs(value - lo)))
                for x, y, value, lo in zip(xs, ys, values, low)]

    samples = [s for batch in parallel_map(at_time, request.t) for s in batch]
    n_warn = sum(s.warn_flag for s in samples)
    if n_warn:
        logger.warning(f"{n_warn} of {len(samples)} kernel samples exhausted the quadrature budget")
    return samples


def free_propagator_kernel(request: PropagatorRequest) -> List[PropagatorSample]:
    r = request.distances
    return _samples(request, free_spectral_density(r), float(r.max()))


def exact_free_halfwave(t: float, r) -> np.ndarray:
    """(4πit)^{-3/2} e^{ir²/(4t)}, the kernel of e^{-it√H} for H = Δ²"""
    if t == 0:
        raise InvalidArgumentError("t must be non-zero")
    r = np.asarray(r, dtype=float)
    value = (4 * np.pi * abs(t)) ** -1.5 * np.exp(-0.75j * np.pi) * np.exp(1j * r ** 2 / (4 * abs(t)))
    return np.conj(value) if t < 0 else value


def exact_free_cosine(t: float, r) -> np.ndarray:
    return exact_free_halfwave(t, r).real


def free_sine_kernel_closed_form(t: float, r) -> np.ndarray:
    """(C(z) - S(z)) / (4πr) with z = r / √(2π|t|), odd in t"""
    if t == 0:
        raise InvalidArgumentError("t must be non-zero")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.full(r.shape, np.sqrt(np.pi / (2 * abs(t))) / (4 * np.pi ** 2))
    positive = r > 0
    S, C = special.fresnel(r[positive] / np.sqrt(2 * np.pi * abs(t)))
    out[positive] = (C - S) / (4 * np.pi * r[positive])
    return np.sign(t) * out


def free_sine_kernel_oracle(t: float, r: float) -> float:
    """sin(t√H)/√H kernel at distance r by adaptive quadrature of its reduced form"""
    if t == 0:
        raise InvalidArgumentError("t must be non-zero")
    if r < 0:
        raise InvalidArgumentError(f"r must be >= 0, got {r}")
    at = abs(t)
    if r == 0:
        return float(np.sign(t) * np.sqrt(np.pi / (2 * at)) / (4 * np.pi ** 2))
    # about one subinterval per cycle of s²/(4|t|)
    cycles = r ** 2 / (4 * at) / (2 * np.pi)
    breaks = np.sqrt(np.linspace(0.0, 1.0, int(np.ceil(cycles)) + 2)) * r
    value = 0.0
    for a, b in zip(breaks, breaks[1:]):
        value += integrate.quad(lambda s: np.sin(np.pi / 4 - s ** 2 / (4 * at)), a, b,
                                epsabs=1e-12, epsrel=1e-10, limit=200)[0]
    return float(np.sign(t) * np.sqrt(np.pi / at) * value / (4 * np.pi ** 2 * r))


def envelope_constants(t_values: Sequence[float], x, y, alpha: float = 0.0,
                       budget: Optional[QuadratureBudget] = None) -> np.ndarray:
    """max_N |panel integral| / (2^{(3+2α)N} Θ_{N0,N}(t)) for each t (free kernel)"""
    budget = budget or QuadratureBudget()
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    density = free_spectral_density([r])
    constants = []
    for t in t_values:
        panels, _, _ = panel_plan(t, r, alpha, budget)
        dyadic = [p for p in panels if not p.base]
        values = np.abs(panel_integrals(abs(t), density, dyadic)[:, 0])
        N0 = n0_index(r, t)
        ratios = [v / (2.0 ** ((3 + 2 * alpha) * p.N) * theta_envelope(p.N, N0, t))
                  for v, p in zip(values, dyadic)]
        constants.append(max(ratios))
    return np.array(constants)


class SpectralDensityTable:
    """Perturbation part of the spectral density on per-octave Chebyshev tables.

    Holds E(λ) = -(4/π) λ Im[R0 v M^+(λ)^-1 v R0](x, y) for a fixed set of
    point pairs, so that D_V = D0 + E. Values do not depend on t. The base
    interval is [0, 2^-8], then octaves [2^{k-1}, 2^k] are added on demand
    by prepare(); evaluation is read-only afterwards.
    """

    def __init__(self, sa: SpectralAssembly, xs, ys):
        self.sa = sa
        self.xs = np.atleast_2d(np.asarray(xs, dtype=float))
        self.ys = np.atleast_2d(np.asarray(ys, dtype=float))
        support = grid_radius_of_support(sa.sign_amplitude.values, sa.grid, 1e-8)
        self.psi = float(np.max(np.linalg.norm(self.xs, axis=1) + np.linalg.norm(self.ys, axis=1))) + 2 * support
        self._octaves = {}

    def degree(self, width: float) -> int:
        n = int(math.ceil(1.25 * self.psi * width / 2.0)) + TABLE_MIN_DEGREE
        return int(np.clip(n, TABLE_MIN_DEGREE, TABLE_MAX_DEGREE))

    def perturbation(self, lam: float) -> np.ndarray:
        correction = resolvent_correction(self.sa, lam, self.xs, self.ys, 1, use_cache=False)
        return -(4.0 / np.pi) * lam * correction.imag

    def _build(self, k: int) -> BarycentricInterpolator:
        lo, hi = (0.0, 2.0 ** k) if k == TABLE_BASE_INDEX else (2.0 ** (k - 1), 2.0 ** k)
        n = self.degree(hi - lo)
        # Chebyshev points of the first kind stay clear of λ = 0
        j = np.arange(n)
        nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * j + 1) * np.pi / (2 * n))
        values = np.array(parallel_map(self.perturbation, nodes))
        logger.debug(f"Density table octave {k} on [{lo:.4g}, {hi:.4g}] with {n} nodes")
        return BarycentricInterpolator(nodes, values)

    def prepare(self, lam_max: float):
        top = max(TABLE_BASE_INDEX, int(math.ceil(math.log2(lam_max))))
        for k in range(TABLE_BASE_INDEX, top + 1):
            if k not in self._octaves:
                self._octaves[k] = self._build(k)
        return self

    def _octave_index(self, lam: np.ndarray) -> np.ndarray:
        with np.errstate(divide='ignore'):
            k = np.ceil(np.log2(lam))
        return np.maximum(k, TABLE_BASE_INDEX).astype(int)

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        out = np.empty((lam.size, self.xs.shape[0]))
        index = self._octave_index(lam)
        for k in np.unique(index):
            if k not in self._octaves:
                raise InvalidArgumentError(f"λ={lam[index == k].max():g} lies beyond the prepared table")
            out[index == k] = self._octaves[k](lam[index == k])
        return out


def perturbed_density(table: SpectralDensityTable) -> DensityFn:
    free = free_spectral_density(np.linalg.norm(table.xs - table.ys, axis=1))

    def density(lam):
        return free(lam) + table(lam)
    return density


def perturbed_propagator_kernel(request: PropagatorRequest, sa: SpectralAssembly,
                                classification: Optional[Classification] = None,
                                table: Optional[SpectralDensityTable] = None) -> List[PropagatorSample]:
    """Kernel samples for Δ² + V through the symmetric resolvent identity"""
    if classification in (Classification.SecondKind, Classification.ThirdKind):
        logger.warning(f"Zero energy is {classification.value}; the low-energy part of the kernel "
                       f"carries a growing finite-rank term")
    table = table or SpectralDensityTable(sa, request.xs, request.ys)
    alpha = mode_alpha(request.mode, request.alpha)
    lam_max = max(panel_plan(t, table.psi, alpha, request.budget)[0][-1].upper for t in request.t)
    table.prepare(lam_max)
    return _samples(request, perturbed_density(table), table.psi)


def scalar_growth_integral(t: float, lambda0: float) -> float:
    """∫_0^∞ χ(λ) sin(tλ²) λ^-2 dλ"""
    if t == 0:
        return 0.0
    if lambda0 <= 0:
        raise InvalidArgumentError(f"λ0 must be positive, got {lambda0}")
    at = abs(t)

    def integrand(lam):
        if lam == 0:
            return at
        return chi_cutoff(lam, lambda0) * math.sin(at * lam * lam) / (lam * lam)

    # breakpoints every four cycles of tλ², plus λ0
    step = math.sqrt(8 * math.pi / at)
    breaks = np.union1d(np.arange(0.0, 2 * lambda0, step), [lambda0, 2 * lambda0])
    value = sum(integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
                for a, b in zip(breaks, breaks[1:]))
    return math.copysign(1.0, t) * float(value)


def extract_growth_block(sa: SpectralAssembly, report, lam: float = 1e-3) -> np.ndarray:
    """Leading S2-block of λ³ S2 M^+(λ)^-1 S2 by Richardson extrapolation"""
    ladder = report.ladder
    if ladder is None or ladder.s2_basis.shape[1] == 0:
        raise InvalidArgumentError("The growth term needs a non-trivial S2 subspace")
    B2 = ladder.s2_basis
    if not 0 < lam <= 0.1:
        raise InvalidArgumentError(f"λ must lie in (0, 0.1], got {lam}")

    def block(mu):
        factors = factorize_M(sa, mu, 1)
        return mu ** 3 * (B2.conj().T @ linalg.lu_solve(factors, B2.astype(complex)))

    return 2.0 * block(0.5 * lam) - block(lam)


@dataclass(frozen=True)
class GrowthKernel:
    t: float
    values: np.ndarray
    weight: np.ndarray
    envelope: float
    bound: float
    within_bound: bool


def growth_weight(sa: SpectralAssembly, report, block: np.ndarray, xs, ys) -> Tuple[np.ndarray, float]:
    """W(x, y) = [G0 v S2 A S2 v G0](x, y) and its Cauchy–Schwarz bound"""
    ladder = report.ladder
    if ladder is None or ladder.s2_basis.shape[1] == 0:
        raise InvalidArgumentError("The growth weight needs a non-trivial S2 subspace")
    B2 = ladder.s2_basis
    if block.shape != (B2.shape[1], B2.shape[1]):
        raise InvalidArgumentError(f"Growth block has shape {block.shape}, S2 has dimension {B2.shape[1]}")
    nodes = sa.grid.nodes
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    gx = -np.linalg.norm(xs[:, None, :] - nodes[None, :, :], axis=-1) / (8 * np.pi) * sa.vw[None, :]
    gy = -np.linalg.norm(ys[:, None, :] - nodes[None, :, :], axis=-1) / (8 * np.pi) * sa.vw[None, :]
    left = gx @ B2
    right = gy @ B2
    W = np.einsum('mi,ij,mj->m', left, block, right).real
    bound = float(np.max(np.linalg.norm(gx, axis=1) * np.linalg.norm(gy, axis=1))) * operator_norm(block)
    return W, bound


def leading_growth_kernel(t: float, xs, ys, sa: SpectralAssembly, report, lambda0: float = 0.1,
                          block: Optional[np.ndarray] = None) -> GrowthKernel:
    """I(t) W(x, y), the leading growing term of the second and third kind"""
    if block is None:
        block = extract_growth_block(sa, report)
    W, bound = growth_weight(sa, report, block, xs, ys)
    I = scalar_growth_integral(t, lambda0)
    return GrowthKernel(t=t, values=I * W, weight=W, envelope=math.sqrt(abs(t)) * float(np.max(np.abs(W))),
                        bound=bound, within_bound=bool(np.all(np.abs(W) <= bound * (1 + 1e-12))))
