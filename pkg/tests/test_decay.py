import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import linalg

from quartic_beam_lab import decay
from quartic_beam_lab.birman import assemble_spectral
from quartic_beam_lab.decay import *
from quartic_beam_lab.decay import _subtracted_curve
from quartic_beam_lab.errors import InvalidArgumentError
from quartic_beam_lab.model import Classification, DecayCurve, PropagatorMode, PropagatorSample
from quartic_beam_lab.potential import WEAK_GAUSSIAN_WELL, Potential
from quartic_beam_lab.quadrature import build_box_grid
from quartic_beam_lab.resonance import ResonanceLadder
from quartic_beam_lab.stone import PropagatorRequest, exact_free_cosine, growth_weight, scalar_growth_integral


def diagonal_request(mode, t, alpha=0.0):
    return PropagatorRequest(mode=mode, alpha=alpha, t=list(t), x=[(0.0, 0.0, 0.0)], y=[(0.0, 0.0, 0.0)])


def test_default_sample_cloud():
    xs, ys = default_sample_cloud(4.0, size=12, seed=3)
    assert xs.shape == (12, 3)
    assert ys.shape == (12, 3)
    assert np.array_equal(xs[:DIAGONAL_PAIRS], ys[:DIAGONAL_PAIRS])
    assert np.all(np.linalg.norm(xs, axis=1) <= 2.0)
    assert np.all(np.linalg.norm(ys, axis=1) <= 2.0)
    again, _ = default_sample_cloud(4.0, size=12, seed=3)
    assert np.array_equal(xs, again)
    with pytest.raises(InvalidArgumentError):
        default_sample_cloud(0.0)
    with pytest.raises(InvalidArgumentError):
        default_sample_cloud(1.0, size=0)


def test_time_grid():
    t = time_grid(10.0, 1000.0, 3)
    assert t == pytest.approx([10.0, 100.0, 1000.0])
    with pytest.raises(InvalidArgumentError):
        time_grid(10.0, 1.0, 5)
    with pytest.raises(InvalidArgumentError):
        time_grid(0.0, 1.0, 5)


def test_mode_label():
    assert mode_label(PropagatorMode.cosine) == "cosine"
    assert mode_label("halfwave", -0.5) == "halfwave(alpha=-0.5)"


def test_expected_exponents():
    assert expected_exponents(Classification.Regular, PropagatorMode.cosine) == (-1.5, None)
    assert expected_exponents(Classification.FirstKind, PropagatorMode.sine_over_sqrt) == (-0.5, None)
    assert expected_exponents(Classification.SecondKind, PropagatorMode.cosine) == (-0.5, -1.5)
    assert expected_exponents(Classification.ThirdKind, PropagatorMode.sine_over_sqrt) == (0.5, -0.5)
    assert expected_exponents(Classification.Regular, PropagatorMode.halfwave, -0.5) == (-1.0, None)
    with pytest.raises(InvalidArgumentError):
        expected_exponents(Classification.SecondKind, PropagatorMode.halfwave)


def test_curve_from_samples():
    samples = [
        PropagatorSample(t=2.0, x=(0, 0, 0), y=(0, 0, 0), mode="cosine", re=3.0, im=4.0, est_error=0.0),
        PropagatorSample(t=1.0, x=(0, 0, 0), y=(0, 0, 0), mode="cosine", re=1.0, im=0.0, est_error=0.0),
        PropagatorSample(t=1.0, x=(1, 0, 0), y=(0, 0, 0), mode="cosine", re=-2.0, im=0.0, est_error=0.0,
                         warn_flag=True),
    ]
    curve = curve_from_samples(samples, "cosine", "free")
    assert curve.t == [1.0, 2.0]
    assert curve.sup_abs == pytest.approx([2.0, 5.0])
    assert curve.n_warn == [1, 0]
    assert curve.provenance == "free"


def test_samples_to_frame():
    samples = [PropagatorSample(t=1.0, x=(1, 2, 3), y=(4, 5, 6), mode="cosine", re=1.0, im=0.0, est_error=1e-9)]
    frame = samples_to_frame(samples)
    assert list(frame.columns) == ['t', 'x1', 'x2', 'x3', 'y1', 'y2', 'y3', 'mode', 're', 'im', 'est_error',
                                   'warn_flag']
    assert frame.loc[0, 'y2'] == 5
    assert samples_to_frame([]).empty


def test_slope_fit_on_power_law():
    t = np.geomspace(10, 1000, 8)
    curve = DecayCurve(mode="cosine", provenance="free", t=t.tolist(), sup_abs=(3 * t ** -1.5).tolist(),
                       n_warn=[0] * 8)
    fit = slope_fit(curve)
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.n_points == 8
    with pytest.raises(InvalidArgumentError):
        slope_fit(curve, window=(10, 100))
    assert curve_to_frame(curve).shape == (8, 3)


def test_free_cosine_scan():
    t = time_grid(10.0, 1000.0, 6)
    curve = sup_kernel_scan(diagonal_request(PropagatorMode.cosine, t), default_sample_cloud(1.0, size=5))
    assert curve.provenance == "free"
    # every pair of the cloud is diagonal
    expected = [abs(float(exact_free_cosine(s, 0.0))) for s in t]
    assert np.allclose(curve.sup_abs, expected, rtol=1e-3)
    assert slope_fit(curve).slope == pytest.approx(-1.5, abs=0.05)


def test_free_sine_plateau():
    t = time_grid(10.0, 1000.0, 6)
    curve = sup_kernel_scan(diagonal_request(PropagatorMode.sine_over_sqrt, t))
    scaled = np.asarray(curve.sup_abs) * np.sqrt(curve.t)
    assert scaled.max() / scaled.min() <= 1.02
    assert scaled.mean() == pytest.approx(math.sqrt(math.pi / 2) / (4 * math.pi ** 2), rel=1e-2)


def test_perturbed_scan_needs_assembly():
    request = diagonal_request(PropagatorMode.cosine, [1.0]).model_copy(update={'free': False})
    with pytest.raises(InvalidArgumentError):
        sup_kernel_scan(request)


def test_free_exponent_sweep():
    results = free_exponent_sweep([0.0, -0.5], (10.0, 1000.0), 6)
    for alpha, fit, expected in results:
        assert expected == -(3 + 2 * alpha) / 2
        assert fit.slope == pytest.approx(expected, abs=0.05)


def test_free_check():
    report = free_check(samples=4, t_points=6)
    assert len(report.halfwave_samples) == 4
    assert report.halfwave_max_relative_error < 1e-3
    assert report.sine_closed_form_relative_error < 1e-3
    assert report.sine_diagonal_relative_error < 1e-2
    assert report.passed


def test_decay_report_structure():
    grid = build_box_grid(3.0, 6)
    cloud = default_sample_cloud(grid.radius, size=3)
    report = decay_report(Potential(), grid, t_window=(10.0, 100.0), t_points=6, cloud=cloud)
    assert report.classification == Classification.Regular
    assert [r.mode for r in report.results] == ["cosine", "sine_over_sqrt"]
    assert [r.expected for r in report.results] == [-1.5, -0.5]
    assert all(r.subtracted_expected is None for r in report.results)
    assert len(report.curves) == 2
    for curve in report.curves:
        assert curve.provenance == "perturbed"
        assert curve.fit.n_points == 6
        assert np.all(np.isfinite(curve.sup_abs))
    data = report.model_dump(by_alias=True)
    assert 'pass' in data['results'][0]


def test_weak_well_decays_at_the_regular_rates():
    report = decay_report(WEAK_GAUSSIAN_WELL, build_box_grid(4.0, 8), t_window=(10.0, 300.0), t_points=8)
    assert report.classification == Classification.Regular
    cosine, sine = report.results
    assert -1.65 <= cosine.slope <= -1.35
    assert -0.65 <= sine.slope <= -0.35
    assert cosine.passed and sine.passed


def test_decay_report_defaults_to_weak_well():
    grid = build_box_grid(3.0, 6)
    cloud = default_sample_cloud(grid.radius, size=3)
    kwargs = dict(modes=(PropagatorMode.cosine,), t_window=(10.0, 100.0), t_points=6, cloud=cloud)
    default = decay_report(None, grid, **kwargs)
    weak = decay_report(WEAK_GAUSSIAN_WELL, grid, **kwargs)
    assert default.classification == weak.classification
    assert default.curves[0].sup_abs == pytest.approx(weak.curves[0].sup_abs, rel=1e-12)


def test_subtracted_curve_reuses_samples(monkeypatch):
    grid = build_box_grid(3.0, 6)
    sa = assemble_spectral(Potential(), grid)
    basis = linalg.orth(np.random.default_rng(4).normal(size=(grid.size, 1)))
    ladder = ResonanceLadder(q_basis=sa.q_basis, s1_basis=basis, s2_basis=basis,
                             s3_basis=np.zeros((grid.size, 0)), QTQ=np.eye(1))
    report = SimpleNamespace(ladder=ladder)

    def recomputed(*args, **kwargs):
        raise AssertionError("kernel samples were computed twice")

    monkeypatch.setattr(decay, "extract_growth_block", lambda sa, report: np.eye(1))
    monkeypatch.setattr(decay, "perturbed_propagator_kernel", recomputed)
    points = [(0.1, 0.2, 0.3), (-0.5, 0.0, 0.4)]
    request = PropagatorRequest(mode=PropagatorMode.sine_over_sqrt, t=[10.0, 20.0], x=points, y=points,
                                free=False)
    samples = [PropagatorSample(t=t, x=p, y=p, mode="sine_over_sqrt", re=1.0, im=0.0, est_error=0.0)
               for t in request.t for p in points]
    curve = _subtracted_curve(request, samples, sa, report, "sine_over_sqrt")
    W, _ = growth_weight(sa, report, np.eye(1), request.xs, request.ys)
    expected = [np.max(np.abs(1.0 - scalar_growth_integral(t, request.lambda0) * W)) for t in request.t]
    assert curve.provenance == "perturbed-minus-growth"
    assert curve.sup_abs == pytest.approx(expected, rel=1e-12)
