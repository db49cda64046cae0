import numpy as np
import pytest

from quartic_beam_lab import birman
from quartic_beam_lab.birman import *
from quartic_beam_lab.errors import InvalidArgumentError, SpectralSingularityError
from quartic_beam_lab.freekernel import free_resolvent_kernel, series_coefficient, series_kernel
from quartic_beam_lab.opalg import operator_norm
from quartic_beam_lab.potential import Potential, with_coupling
from quartic_beam_lab.quadrature import box_distance_integral, build_box_grid
from quartic_beam_lab.utils import geometric_sequence


@pytest.fixture(scope="module")
def grid():
    return build_box_grid(4.0, 8)


@pytest.fixture(scope="module")
def sa(grid):
    return assemble_spectral(Potential(), grid)


@pytest.fixture(scope="module")
def bump():
    """Sign-changing compact bump: V0 < 0 inside radius 1, V0 > 0 out to the support radius 2"""
    return assemble_spectral(Potential(family="CompactBump", inner_radius=1.0), build_box_grid(2.0, 8))


@pytest.fixture
def points():
    rng = np.random.default_rng(5)
    return rng.uniform(-2, 2, size=(6, 3)), rng.uniform(-2, 2, size=(6, 3))


@pytest.fixture(autouse=True)
def empty_cache():
    clear_factorization_cache()
    yield
    clear_factorization_cache()


def test_assembly_pieces(sa, grid):
    assert sa.l1 == pytest.approx(np.sum(grid.weights * sa.v ** 2), rel=1e-13)
    assert sa.P.rank == 1
    assert sa.q_basis.shape == (grid.size, grid.size - 1)
    assert operator_norm(sa.P.matrix + sa.Q.matrix - np.eye(grid.size)) < 1e-12
    assert np.allclose(sa.P.matrix @ sa.vw, sa.vw, rtol=1e-12)
    assert np.abs(sa.vw @ sa.q_basis).max() < 1e-12
    # T = U + v G0 v is real symmetric
    assert np.allclose(sa.T.matrix, sa.T.matrix.T, rtol=0, atol=1e-15)
    assert sa.a_tilde(1) == pytest.approx(series_coefficient(-1, 1) * sa.l1)


def test_assemble_M_entries(sa):
    lam = 0.5
    M = assemble_M(sa, lam, 1).matrix
    x = sa.grid.nodes
    expected = sa.vw[3] * free_resolvent_kernel(lam, x[3], x[10], 1) * sa.vw[10]
    assert M[3, 10] == pytest.approx(expected, rel=1e-13)
    diagonal = sa.U[7] + sa.vw[7] ** 2 * (1 + 1j) / (8 * np.pi * lam) + sa.v[7] ** 2 * sa.kink_correction[7]
    assert M[7, 7] == pytest.approx(diagonal, rel=1e-13)
    # V real: M^-(λ) = conj(M^+(λ))
    assert np.allclose(assemble_M(sa, lam, -1).matrix, np.conj(M), rtol=0, atol=1e-15)


def test_kink_correction_makes_G0_exact_on_constants(sa, grid):
    rows = series_kernel(0, sa.distances) @ grid.weights + sa.kink_correction
    exact = -box_distance_integral(grid.nodes, grid.radius) / (8 * np.pi)
    assert np.allclose(rows, exact, rtol=1e-12, atol=0)
    G = sa.vGv(0) / np.outer(sa.vw, sa.vw)
    assert np.allclose(G @ grid.weights, exact, rtol=1e-12, atol=0)


def test_assemble_M_rejects_bad_lambda(sa):
    with pytest.raises(InvalidArgumentError):
        assemble_M(sa, 0.0, 1)
    with pytest.raises(InvalidArgumentError):
        factorize_M(sa, float('nan'), 1)


def test_factorization_cache_hit(sa):
    first = factorize_M(sa, 0.3, 1)
    assert factorize_M(sa, 0.3, "+") is first
    assert factorize_M(sa, 0.3, -1) is not first
    assert factorize_M(sa, 0.3, 1, use_cache=False) is not first


def test_invert_M(sa):
    M = assemble_M(sa, 0.2, 1).matrix
    X = invert_M(sa, 0.2, 1).matrix
    assert operator_norm(M @ X - np.eye(sa.grid.size)) < 1e-10


def test_singular_M_reports_lambda(sa, monkeypatch):
    monkeypatch.setattr(birman, "checked_lu", lambda matrix: (None, 0.0, "forced"))
    with pytest.raises(SpectralSingularityError) as e:
        invert_M(sa, 0.25, 1)
    assert e.value.lam == 0.25
    assert "forced" in str(e.value)


def test_M_inverse_is_bounded_for_regular_well(sa):
    norms = lambda_sweep_norms(sa, 1, np.linspace(0.1, 1.0, 6))
    assert np.all(np.isfinite(norms))
    assert norms.max() < 1e3


def test_blowup_order_regular(sa):
    fit = m_inverse_blowup_order(sa, 1, geometric_sequence(1e-2, 0.5, 5))
    assert abs(fit.slope) < 0.2


def test_blowup_order_arguments(sa):
    with pytest.raises(InvalidArgumentError):
        m_inverse_blowup_order(sa, 1, [1e-2, 5e-3])
    with pytest.raises(InvalidArgumentError):
        m_inverse_blowup_order(sa, 1, [0.5, 1e-2, 5e-3])


def test_truncated_M_leading_term(sa):
    lam = 1e-3
    M0 = truncated_M(sa, lam, 1, 0)
    expected = sa.a_tilde(1) / lam * sa.P.matrix + sa.T.matrix
    assert operator_norm(M0 - expected) < 1e-10 * operator_norm(expected)


@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("well", ["sa", "bump"])
def test_expansion_orders(request, well, sign):
    sa = request.getfixturevalue(well)
    lams = geometric_sequence(1e-2, 0.5, 5)
    zeroth = expansion_residuals(sa, sign, lams, 0)
    first = expansion_residuals(sa, sign, lams, 1)
    assert zeroth.fitted_order >= 0.9
    assert first.fitted_order >= 2.7
    assert zeroth.records[0].fitted_order is None
    assert len(first.records) == 5
    assert first.records[-1].residual_norm < zeroth.records[-1].residual_norm


@pytest.mark.parametrize("well", ["sa", "bump"])
def test_gamma_derivative_order(request, well):
    sa = request.getfixturevalue(well)
    report = gamma_derivative_orders(sa, 1, geometric_sequence(1e-2, 0.5, 5))
    assert report.fitted_order >= 0.9


def test_resolvent_correction_cache_independent(sa, points):
    xs, ys = points
    cached = resolvent_correction(sa, 0.7, xs, ys, 1)
    fresh = resolvent_correction(sa, 0.7, xs, ys, 1, use_cache=False)
    assert np.allclose(cached, fresh, rtol=1e-12, atol=0)
    with pytest.raises(InvalidArgumentError):
        resolvent_correction(sa, 0.7, xs, ys[:3], 1)


def test_sign_consistency(sa, points):
    xs, ys = points
    assert sign_consistency_residual(sa, 0.5, xs, ys) < 1e-12


def test_perturbed_kernel_tends_to_free(grid, points):
    xs, ys = points
    free = free_resolvent_kernel(0.5, xs, ys, 1)
    differences = []
    for c in (1e-2, 1e-3):
        sa_c = assemble_spectral(with_coupling(Potential(), c), grid)
        differences.append(np.max(np.abs(perturbed_resolvent_kernel(sa_c, 0.5, xs, ys, 1) - free)))
    assert differences[0] / differences[1] == pytest.approx(10.0, rel=0.1)


def test_bump_changes_sign(bump):
    assert set(np.unique(bump.U)) == {-1.0, 1.0}


def test_born_identity(sa, points):
    xs, ys = points
    report = born_identity_residual(sa, 4.0, xs, ys, 1)
    assert report.lam == 4.0
    assert report.sign == 1
    assert report.max_residual < 1e-10 * max(report.max_kernel, 1.0)
