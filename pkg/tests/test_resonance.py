import numpy as np
import pytest

from quartic_beam_lab.birman import assemble_spectral, m_inverse_blowup_order
from quartic_beam_lab.errors import InvalidArgumentError
from quartic_beam_lab.model import Classification
from quartic_beam_lab.potential import Potential, with_coupling
from quartic_beam_lab.quadrature import build_box_grid, unsymmetrized
from quartic_beam_lab.resonance import *
from quartic_beam_lab.resonance import _LinearQTQ, _linear_qtq
from quartic_beam_lab.utils import geometric_sequence


@pytest.fixture(scope="module")
def grid():
    return build_box_grid(4.0, 8)


@pytest.fixture(scope="module")
def scan(grid):
    return coupling_scan(Potential(), grid, (0.5, 200.0), 24)


@pytest.fixture(scope="module")
def resonant(grid, scan):
    """Assembly and report at the smallest resonant coupling of the default well"""
    sa = assemble_spectral(with_coupling(Potential(), scan.roots[0]), grid)
    return sa, classify(sa)


def test_regular_well(grid):
    sa = assemble_spectral(Potential(), grid)
    report = classify(sa)
    assert report.classification == Classification.Regular
    assert report.ranks == {'S1': 0, 'S2': 0, 'S3': 0}
    assert list(report.singular_spectra) == ['QTQ']
    assert len(report.singular_spectra['QTQ']) == grid.size - 1
    assert report.coupling == 1.0
    assert report.resonance_residuals == []
    assert report.warnings == []
    assert report.residuals['QD0'] < 1e-10
    assert report.residuals['D0Q'] < 1e-10
    assert report.residuals['QTS1'] == 0.0
    assert 'QD0Q' in report.absolute_norms


def test_report_serializes_without_ladder(grid):
    report = classify(assemble_spectral(Potential(), grid))
    data = report.model_dump()
    assert 'ladder' not in data
    assert data['classification'] == 'Regular'


def test_classify_rejects_bad_tolerance(grid):
    sa = assemble_spectral(Potential(), grid)
    with pytest.raises(InvalidArgumentError):
        classify(sa, 0.0)
    with pytest.raises(InvalidArgumentError):
        classify(sa, 1.0)


def test_slow_decay_is_warned(grid):
    V = Potential(family="PowerDecay", beta=5.0, width=0.5)
    report = classify(assemble_spectral(V, grid))
    assert report.classification == Classification.Regular
    assert len(report.warnings) == 1


def test_scan_finds_resonances(grid, scan):
    assert len(scan.points) == 24
    assert [p.c for p in scan.points] == sorted(p.c for p in scan.points)
    assert len(scan.roots) >= 1
    assert scan.roots == sorted(scan.roots)
    for (lo, hi), root in zip(scan.brackets, scan.roots):
        assert lo <= root <= hi
        assert hi - lo <= 1e-4 * hi
    # Small couplings leave QTQ = U + c vG0v negative definite
    assert scan.points[0].negative_count == grid.size - 1
    assert scan.points[-1].negative_count < scan.points[0].negative_count


def test_scan_frame(scan):
    frame = scan_to_frame(scan)
    assert list(frame.columns) == ['c', 'sigma_min', 'sigma_max']
    assert len(frame) == len(scan.points)
    assert np.all(frame['sigma_min'] <= frame['sigma_max'])


def test_scan_rejects_bad_range(grid):
    with pytest.raises(InvalidArgumentError):
        coupling_scan(Potential(), grid, (0.0, 10.0))
    with pytest.raises(InvalidArgumentError):
        coupling_scan(Potential(), grid, (10.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        coupling_scan(Potential(), grid, (1.0, 10.0), steps=4)


def test_resonant_coupling_is_not_regular(resonant):
    sa, report = resonant
    assert report.classification != Classification.Regular
    assert report.ranks['S1'] >= 1
    assert report.singular_spectra['QTQ'][-1] <= 1e-8 * report.singular_spectra['QTQ'][0]


def test_resonant_orthogonality(resonant):
    sa, report = resonant
    assert report.residuals['QTS1'] < 1e-8
    assert report.residuals['S1TQ'] < 1e-8
    assert report.residuals['S1D0'] < 1e-8
    assert report.residuals['D0S1'] < 1e-8


def test_resonance_functions(resonant):
    sa, report = resonant
    functions = resonance_functions(report, sa)
    assert len(functions) >= report.ranks['S1']
    assert len(report.resonance_residuals) == len(functions)
    for fn in functions:
        assert fn.residual < 1e-6
        assert np.all(np.isfinite(fn.phi))


def test_reconstruct_rejects_regular(resonant):
    sa, report = resonant
    f = unsymmetrized(report.ladder.s1_basis[:, 0], sa.grid)
    with pytest.raises(InvalidArgumentError):
        reconstruct_resonance_function(f, sa, Classification.Regular)
    with pytest.raises(InvalidArgumentError):
        reconstruct_resonance_function(f[:10], sa, Classification.FirstKind)


def test_ladder_projections(resonant):
    sa, report = resonant
    S1 = report.ladder.projection('S1')
    assert S1.rank == report.ranks['S1']
    assert np.allclose(sa.Q.matrix @ S1.matrix, S1.matrix, atol=1e-10)
    assert report.ladder.projection('S3').rank == report.ranks['S3']


def test_blowup_at_resonant_coupling(resonant):
    sa, report = resonant
    fit = m_inverse_blowup_order(sa, 1, geometric_sequence(1e-2, 0.5, 5))
    assert -1.3 <= fit.slope <= -0.7


def test_refine_root_matches_bracket(grid, scan):
    qtq = _linear_qtq(Potential(), grid)
    root = refine_root(qtq, scan.brackets[0])
    assert root == pytest.approx(scan.roots[0], rel=1e-12)
    assert qtq.sample(root).sigma_min <= 1e-10 * qtq.sample(root).sigma_max


def test_constant_sign_uses_spectrum_of_B(grid):
    qtq = _linear_qtq(Potential(), grid)
    assert qtq.shift == -1.0
    pencil = _LinearQTQ(A=-np.eye(grid.size - 1), B=qtq.B)
    scale = np.abs(qtq.b_eigenvalues).max()
    for c in (1.0, 17.0):
        assert np.allclose(qtq.eigenvalues(c), pencil.eigenvalues(c), rtol=0, atol=1e-10 * c * scale)


def test_sign_changing_potential_scans_full_pencil():
    bump = Potential(family="CompactBump", inner_radius=1.0)
    qtq = _linear_qtq(bump, build_box_grid(2.0, 6))
    assert qtq.shift is None
    assert np.allclose(qtq.A, qtq.A.T, rtol=0, atol=1e-14)
    eig = qtq.eigenvalues(0.0)
    assert np.all(np.abs(eig) <= 1.0 + 1e-12)


def test_resonant_coupling_is_stable_under_refinement():
    roots = [coupling_scan(Potential(), build_box_grid(3.0, order), (5.0, 50.0), 12).roots[0]
             for order in (12, 16)]
    assert roots[1] == pytest.approx(roots[0], rel=1e-2)


def test_weak_coupling_stays_regular_under_refinement():
    sigmas = [_linear_qtq(Potential(), build_box_grid(3.0, order)).sample(1.0).sigma_min for order in (8, 10, 12)]
    assert min(sigmas) >= 0.5
    assert np.ptp(sigmas) < 0.05
