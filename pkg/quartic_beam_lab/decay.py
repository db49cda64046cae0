"""Sup-norm decay scans of propagator kernels and their log-log exponents."""
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from .birman import SpectralAssembly, assemble_spectral
from .errors import InvalidArgumentError
from .model import (
    Classification,
    DecayCurve,
    DecayModeResult,
    DecayReport,
    FreeCheckReport,
    OracleComparison,
    PropagatorMode,
    PropagatorSample,
    SlopeFit,
)
from .potential import WEAK_GAUSSIAN_WELL, Potential
from .quadrature import QuadratureGrid
from .resonance import DEFAULT_RANK_TOL, classify
from .stone import (
    PropagatorRequest,
    QuadratureBudget,
    SpectralDensityTable,
    exact_free_halfwave,
    extract_growth_block,
    free_propagator_kernel,
    free_sine_kernel_closed_form,
    free_sine_kernel_oracle,
    growth_weight,
    perturbed_propagator_kernel,
    scalar_growth_integral,
)
from .utils import loglog_fit

MIN_FIT_POINTS = 6
DEFAULT_TOLERANCE = 0.15
DIAGONAL_PAIRS = 5

Cloud = Tuple[np.ndarray, np.ndarray]


def default_sample_cloud(radius: float, size: int = 25, seed: int = 0) -> Cloud:
    """Point pairs with |x|, |y| <= radius/2; the first five have x = y"""
    if radius <= 0 or size < 1:
        raise InvalidArgumentError(f"Invalid sample cloud: radius={radius} size={size}")
    rng = np.random.default_rng(seed)

    def points(n):
        directions = rng.normal(size=(n, 3))
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        return directions * rng.uniform(0.0, 0.5 * radius, size=(n, 1))

    xs = points(size)
    ys = points(size)
    n_diag = min(DIAGONAL_PAIRS, size)
    ys[:n_diag] = xs[:n_diag]
    return xs, ys


def time_grid(t_min: float, t_max: float, count: int) -> np.ndarray:
    if not 0 < t_min < t_max or count < 2:
        raise InvalidArgumentError(f"Invalid time window [{t_min}, {t_max}] with {count} points")
    return np.geomspace(t_min, t_max, count)


def mode_label(mode: PropagatorMode, alpha: float = 0.0) -> str:
    mode = PropagatorMode(mode)
    if mode == PropagatorMode.halfwave:
        return f"halfwave(alpha={alpha:g})"
    return mode.value


def curve_from_samples(samples: Sequence[PropagatorSample], label: str, provenance: str) -> DecayCurve:
    """Max |K| and the number of warned samples per t"""
    frame = samples_to_frame(samples)
    frame['abs'] = np.hypot(frame['re'], frame['im'])
    grouped = frame.groupby('t', sort=True)
    t = grouped['abs'].max().index.to_numpy()
    if np.any(np.diff(t) <= 0):
        raise InvalidArgumentError("Time grid must be strictly increasing")
    return DecayCurve(mode=label, provenance=provenance, t=t.tolist(),
                      sup_abs=grouped['abs'].max().tolist(),
                      n_warn=grouped['warn_flag'].sum().astype(int).tolist())


def _scan_samples(request: PropagatorRequest, sa: Optional[SpectralAssembly],
                  classification: Optional[Classification],
                  table: Optional[SpectralDensityTable]) -> Tuple[List[PropagatorSample], str]:
    if request.free:
        return free_propagator_kernel(request), "free"
    if sa is None:
        raise InvalidArgumentError("A perturbed scan needs a spectral assembly")
    return perturbed_propagator_kernel(request, sa, classification, table), "perturbed"


def sup_kernel_scan(request: PropagatorRequest, cloud: Optional[Cloud] = None,
                    sa: Optional[SpectralAssembly] = None, classification: Optional[Classification] = None,
                    table: Optional[SpectralDensityTable] = None) -> DecayCurve:
    """max over the sample cloud of |K(t; x, y)| for each t of the request"""
    if cloud is not None:
        xs, ys = cloud
        request = request.model_copy(update={'x': [tuple(p) for p in np.asarray(xs, dtype=float)],
                                             'y': [tuple(p) for p in np.asarray(ys, dtype=float)]})
    request = request.model_copy(update={'t': sorted(request.t)})
    samples, provenance = _scan_samples(request, sa, classification, table)
    curve = curve_from_samples(samples, mode_label(request.mode, request.alpha), provenance)
    logger.debug(f"Scanned {len(samples)} {provenance} samples of {curve.mode}")
    return curve


def slope_fit(curve: DecayCurve, window: Optional[Tuple[float, float]] = None) -> SlopeFit:
    """Least-squares slope of log sup|K| against log t inside window"""
    t = np.asarray(curve.t, dtype=float)
    sup = np.asarray(curve.sup_abs, dtype=float)
    if window is not None:
        inside = (t >= window[0]) & (t <= window[1])
        t, sup = t[inside], sup[inside]
    if t.size < MIN_FIT_POINTS:
        raise InvalidArgumentError(f"A slope fit needs at least {MIN_FIT_POINTS} points, got {t.size}")
    fit = loglog_fit(t, sup, min_points=MIN_FIT_POINTS)
    return SlopeFit(slope=fit.slope, stderr=fit.stderr, n_points=int(t.size))


def expected_exponents(classification: Classification, mode: PropagatorMode,
                       alpha: float = 0.0) -> Tuple[float, Optional[float]]:
    """Decay exponent and, for the second and third kind, the exponent after
    removing the leading growth term"""
    classification = Classification(classification)
    mode = PropagatorMode(mode)
    resonant = classification in (Classification.SecondKind, Classification.ThirdKind)
    if mode == PropagatorMode.cosine:
        return (-0.5, -1.5) if resonant else (-1.5, None)
    if mode == PropagatorMode.sine_over_sqrt:
        return (0.5, -0.5) if resonant else (-0.5, None)
    if resonant:
        raise InvalidArgumentError("No halfwave exponent is tabulated for the second and third kind")
    return -(3.0 + 2.0 * alpha) / 2.0, None


def free_exponent_sweep(alpha_values: Sequence[float], t_window: Tuple[float, float], t_points: int = 8,
                        cloud: Optional[Cloud] = None,
                        budget: Optional[QuadratureBudget] = None) -> List[Tuple[float, SlopeFit, float]]:
    """Fitted halfwave exponents of the free kernel against -(3+2α)/2"""
    cloud = cloud if cloud is not None else default_sample_cloud(1.0, size=DIAGONAL_PAIRS)
    t = time_grid(t_window[0], t_window[1], t_points).tolist()
    results = []
    for alpha in alpha_values:
        request = PropagatorRequest(mode=PropagatorMode.halfwave, alpha=alpha, t=t, x=[(0.0, 0.0, 0.0)],
                                    y=[(0.0, 0.0, 0.0)], budget=budget or QuadratureBudget())
        fit = slope_fit(sup_kernel_scan(request, cloud))
        expected = -(3.0 + 2.0 * alpha) / 2.0
        logger.info(f"Free halfwave α={alpha:g}: slope {fit.slope:.4f}, expected {expected:.4f}")
        results.append((alpha, fit, expected))
    return results


def _subtracted_curve(request: PropagatorRequest, samples: Sequence[PropagatorSample], sa: SpectralAssembly,
                      report, label: str) -> DecayCurve:
    """The perturbed samples minus I(t) W(x, y); samples are ordered t-major over the cloud"""
    block = extract_growth_block(sa, report)
    W, _ = growth_weight(sa, report, block, request.xs, request.ys)
    I = {t: scalar_growth_integral(t, request.lambda0) for t in sorted({s.t for s in samples})}
    shifted = []
    for k, sample in enumerate(samples):
        growth = I[sample.t] * W[k % len(W)]
        shifted.append(sample.model_copy(update={'re': sample.re - growth}))
    return curve_from_samples(shifted, label, "perturbed-minus-growth")


def decay_report(V: Optional[Potential], grid: QuadratureGrid,
                 modes: Sequence[PropagatorMode] = (PropagatorMode.cosine, PropagatorMode.sine_over_sqrt),
                 t_window: Tuple[float, float] = (10.0, 300.0), t_points: int = 8,
                 rel_tol: float = DEFAULT_RANK_TOL, lambda0: float = 0.1,
                 budget: Optional[QuadratureBudget] = None, cloud: Optional[Cloud] = None,
                 tolerance: float = DEFAULT_TOLERANCE) -> DecayReport:
    """Classifies V, scans the perturbed kernels and compares slopes with the expected exponents.

    V = None runs WEAK_GAUSSIAN_WELL.
    """
    sa = assemble_spectral(V if V is not None else WEAK_GAUSSIAN_WELL, grid)
    report = classify(sa, rel_tol)
    classification = report.classification
    xs, ys = cloud if cloud is not None else default_sample_cloud(grid.radius)
    t = time_grid(t_window[0], t_window[1], t_points).tolist()
    table = SpectralDensityTable(sa, xs, ys)
    results, curves = [], []
    for mode in modes:
        mode = PropagatorMode(mode)
        request = PropagatorRequest(mode=mode, t=t, x=[tuple(p) for p in xs], y=[tuple(p) for p in ys],
                                    free=False, lambda0=lambda0, budget=budget or QuadratureBudget())
        samples, _ = _scan_samples(request, sa, classification, table)
        curve = curve_from_samples(samples, mode_label(mode, request.alpha), "perturbed")
        curve.fit = slope_fit(curve)
        curves.append(curve)
        expected, subtracted = expected_exponents(classification, mode, request.alpha)
        if subtracted is not None and mode == PropagatorMode.sine_over_sqrt:
            shifted = _subtracted_curve(request, samples, sa, report, curve.mode)
            shifted.fit = slope_fit(shifted)
            curves.append(shifted)
        passed = abs(curve.fit.slope - expected) <= tolerance
        if not passed:
            logger.warning(f"{curve.mode} slope {curve.fit.slope:.3f} is outside {expected:g} ± {tolerance:g}")
        results.append(DecayModeResult(mode=curve.mode, slope=curve.fit.slope, stderr=curve.fit.stderr,
                                       expected=expected, subtracted_expected=subtracted, passed=passed))
    return DecayReport(classification=classification, window=tuple(t_window), tolerance=tolerance,
                       results=results, curves=curves)


def curve_to_frame(curve: DecayCurve) -> pd.DataFrame:
    return pd.DataFrame({'t': curve.t, 'sup_abs': curve.sup_abs, 'n_warn': curve.n_warn})


def samples_to_frame(samples: Sequence[PropagatorSample]) -> pd.DataFrame:
    """Kernel samples with columns t, x1..x3, y1..y3, mode, re, im, est_error, warn_flag"""
    rows = [{
        't': s.t,
        'x1': s.x[0], 'x2': s.x[1], 'x3': s.x[2],
        'y1': s.y[0], 'y2': s.y[1], 'y3': s.y[2],
        'mode': s.mode,
        're': s.re,
        'im': s.im,
        'est_error': s.est_error,
        'warn_flag': s.warn_flag,
    } for s in samples]
    columns = ['t', 'x1', 'x2', 'x3', 'y1', 'y2', 'y3', 'mode', 're', 'im', 'est_error', 'warn_flag']
    return pd.DataFrame(rows, columns=columns)


def free_check(budget: Optional[QuadratureBudget] = None, samples: int = 10, seed: int = 0,
               t_window: Tuple[float, float] = (10.0, 1000.0), t_points: int = 8) -> FreeCheckReport:
    """Free engine against the exact halfwave kernel, the Fresnel sine values and the free exponents"""
    budget = budget or QuadratureBudget()
    rng = np.random.default_rng(seed)
    comparisons = []
    for t, x, y in zip(rng.uniform(1.0, 100.0, samples), rng.uniform(-1.0, 1.0, (samples, 3)),
                       rng.uniform(-1.0, 1.0, (samples, 3))):
        request = PropagatorRequest(mode=PropagatorMode.halfwave, t=[float(t)], x=[tuple(x)], y=[tuple(y)],
                                    budget=budget)
        sample = free_propagator_kernel(request)[0]
        exact = complex(exact_free_halfwave(float(t), np.linalg.norm(x - y)))
        computed = complex(sample.re, sample.im)
        comparisons.append(OracleComparison(t=float(t), x=tuple(x), y=tuple(y),
                                            computed_re=sample.re, computed_im=sample.im,
                                            exact_re=exact.real, exact_im=exact.imag,
                                            relative_error=abs(computed - exact) / abs(exact)))
    halfwave_error = max(c.relative_error for c in comparisons)

    t_diag = t_window[0]
    request = PropagatorRequest(mode=PropagatorMode.sine_over_sqrt, t=[t_diag], x=[(0.0, 0.0, 0.0)],
                                y=[(0.0, 0.0, 0.0)], budget=budget)
    diagonal = free_propagator_kernel(request)[0].re
    fresnel = float(free_sine_kernel_closed_form(t_diag, 0.0)[0])
    diagonal_error = abs(diagonal - fresnel) / abs(fresnel)
    closed = float(free_sine_kernel_closed_form(5.0, 2.0)[0])
    oracle = free_sine_kernel_oracle(5.0, 2.0)
    closed_error = abs(closed - oracle) / abs(oracle)

    cloud = default_sample_cloud(1.0, size=DIAGONAL_PAIRS)
    t = time_grid(t_window[0], t_window[1], t_points).tolist()
    slopes = {}
    for mode in (PropagatorMode.cosine, PropagatorMode.sine_over_sqrt):
        request = PropagatorRequest(mode=mode, t=t, x=[(0.0, 0.0, 0.0)], y=[(0.0, 0.0, 0.0)], budget=budget)
        slopes[mode] = slope_fit(sup_kernel_scan(request, cloud))

    passed = (halfwave_error < 1e-3 and diagonal_error < 1e-2 and closed_error < 1e-3
              and abs(slopes[PropagatorMode.cosine].slope + 1.5) <= 0.05
              and abs(slopes[PropagatorMode.sine_over_sqrt].slope + 0.5) <= 0.05)
    logger.info(f"Free check: halfwave error {halfwave_error:.2e}, sine diagonal error {diagonal_error:.2e}, "
                f"slopes {slopes[PropagatorMode.cosine].slope:.4f} / {slopes[PropagatorMode.sine_over_sqrt].slope:.4f}")
    return FreeCheckReport(halfwave_samples=comparisons, halfwave_max_relative_error=halfwave_error,
                           sine_diagonal_relative_error=diagonal_error,
                           sine_closed_form_relative_error=closed_error,
                           cosine_slope=slopes[PropagatorMode.cosine],
                           sine_slope=slopes[PropagatorMode.sine_over_sqrt], passed=passed)
