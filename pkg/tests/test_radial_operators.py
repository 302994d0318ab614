import numpy as np
import pytest
from scipy import sparse

from app.core.banded import (
    BandedLU,
    banded_matvec,
    banded_transpose,
    bands_from_diagonals,
    bands_to_sparse,
    empty_bands,
    sparse_to_bands,
)
from app.core.exceptions import ConvergenceError, NearResonanceError, PreconditionError
from app.core.linear_map import LinearMap, dense_measure_norm, power_norm
from app.models.sector import SectorGrid, SectorOperator
from app.services.operator_service import OperatorService

TOL = 1e-12
TOL_SP = 1e-6
TOL_ADJ = 1e-10


def random_pentadiagonal(rng, size, dtype=float):
    diagonals = [rng.standard_normal(size - abs(k)) for k in range(-2, 3)]
    if dtype == complex:
        diagonals = [d + 1j * rng.standard_normal(d.size) for d in diagonals]
    matrix = sparse.diags(diagonals, offsets=range(-2, 3), shape=(size, size))
    # diagonal dominance keeps the LU test well conditioned
    return matrix + sparse.identity(size) * 10.0


def test_tridiagonal_packing(rng):
    main, lower, upper = rng.standard_normal(6), rng.standard_normal(5), rng.standard_normal(5)
    dense = np.diag(main) + np.diag(lower, -1) + np.diag(upper, 1)
    np.testing.assert_allclose(bands_to_sparse(bands_from_diagonals(main, lower, upper)).toarray(), dense)


def test_band_storage_roundtrip_and_products(rng):
    matrix = random_pentadiagonal(rng, 12)
    bands = sparse_to_bands(matrix)
    x = rng.standard_normal(12)
    np.testing.assert_allclose(bands_to_sparse(bands).toarray(), matrix.toarray(), atol=TOL)
    np.testing.assert_allclose(banded_matvec(bands, x), matrix @ x, atol=TOL)
    np.testing.assert_allclose(bands_to_sparse(banded_transpose(bands)).toarray(), matrix.toarray().T, atol=TOL)


def test_band_width_is_enforced():
    wide = sparse.diags([np.ones(7)], offsets=[3], shape=(10, 10))
    with pytest.raises(ValueError):
        sparse_to_bands(wide)


@pytest.mark.parametrize("trans", [0, 1, 2])
def test_banded_lu_solves(rng, trans):
    matrix = random_pentadiagonal(rng, 40, dtype=complex)
    lu = BandedLU(sparse_to_bands(matrix))
    rhs = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    dense = matrix.toarray()
    operator = {0: dense, 1: dense.T, 2: dense.conj().T}[trans]
    np.testing.assert_allclose(operator @ lu.solve(rhs, trans=trans), rhs, atol=1e-10)


def test_banded_lu_real_factors_complex_data(rng):
    matrix = random_pentadiagonal(rng, 20)
    lu = BandedLU(sparse_to_bands(matrix))
    rhs = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    np.testing.assert_allclose(matrix @ lu.solve(rhs), rhs, atol=1e-10)


def test_singular_pivot_is_a_resonance():
    with pytest.raises(NearResonanceError):
        BandedLU(empty_bands(8))


def test_grid_geometry():
    grid = SectorGrid(d=3, ell=0, r_max=10.0, n=9)
    assert grid.h == pytest.approx(1.0)
    np.testing.assert_allclose(grid.nodes, np.arange(1, 10))
    np.testing.assert_allclose(grid.weights, grid.nodes ** 2)
    assert grid.with_ell(2).centrifugal == 6.0
    refined = grid.refined()
    assert refined.h == pytest.approx(0.5)
    np.testing.assert_allclose(refined.nodes[1::2], grid.nodes)


@pytest.mark.parametrize("options", [dict(d=0), dict(ell=-1), dict(n=3), dict(r_max=0.0)])
def test_grid_rejects_bad_parameters(options):
    params = dict(d=3, ell=0, r_max=10.0, n=32)
    params.update(options)
    with pytest.raises(PreconditionError):
        SectorGrid(**params)


@pytest.mark.parametrize("ell", [0, 1, 3])
def test_laplacian_is_selfadjoint_in_measure(damped_profile, rng, ell):
    grid = SectorGrid(d=3, ell=ell, r_max=20.0, n=200)
    laplacian = OperatorService.assemble_laplacian(damped_profile, grid)
    assert laplacian.residual_selfadjoint(rng) < TOL


def test_laplacian_consistency():
    grid = SectorGrid(d=3, ell=0, r_max=10.0, n=2000)
    r = grid.nodes
    u = np.exp(-r ** 2)
    exact = (4 * r ** 2 - 6) * np.exp(-r ** 2)
    interior = (r > 0.5) & (r < 5.0)
    applied = OperatorService.assemble_free_laplacian(grid).matvec(u)
    assert np.max(np.abs(applied - exact)[interior]) < 1e-3


def test_dilation_generator_is_selfadjoint(small_grid, rng):
    generator = OperatorService.assemble_dilation_generator(small_grid)
    assert generator.residual_selfadjoint(rng) < TOL


def test_operator_adjoint_in_measure(small_grid, rng):
    derivative = OperatorService.assemble_radial_derivative(small_grid)
    operator = derivative.left_scale(small_grid.nodes) + SectorOperator.identity(small_grid) * (1 + 2j)
    u = rng.standard_normal(small_grid.n) + 1j * rng.standard_normal(small_grid.n)
    v = rng.standard_normal(small_grid.n) + 1j * rng.standard_normal(small_grid.n)
    lhs = small_grid.inner(operator.matvec(u), v)
    rhs = small_grid.inner(u, operator.adjoint().matvec(v))
    assert abs(lhs - rhs) < TOL_ADJ * max(1.0, abs(lhs))


def test_free_spectrum(small_grid):
    spectrum = OperatorService.free_spectrum(small_grid)
    assert np.all(spectrum.eigenvalues >= 0)
    assert np.all(np.diff(spectrum.eigenvalues) > 0)
    basis = np.column_stack([spectrum.eigenvector(k) for k in range(5)])
    gram = basis.T @ (small_grid.weights[:, None] * basis)
    np.testing.assert_allclose(gram, np.eye(5), atol=1e-10)


def test_sobolev_scale(small_grid, rng):
    scale = OperatorService.sobolev_scale(small_grid, 0.5)
    u = rng.standard_normal(small_grid.n)
    assert scale.norm(0.0, u) == pytest.approx(small_grid.norm(u), rel=1e-10)
    assert scale.norm(-1.0, u) < scale.norm(0.0, u) < scale.norm(1.0, u)
    np.testing.assert_allclose(scale.apply(-1.0, scale.apply(1.0, u)), u, atol=1e-8)
    with pytest.raises(PreconditionError):
        OperatorService.sobolev_scale(small_grid, 1.5)


def test_power_norm_matches_dense_norm():
    weights = np.linspace(1.0, 2.0, 40)
    values = np.concatenate([np.linspace(0.1, 1.0, 39), [2.0]])
    diagonal = LinearMap.diagonal(values, weights)
    result = power_norm(diagonal, tol=1e-12, max_iter=2000)
    assert result.norm == pytest.approx(2.0, rel=TOL_SP)
    assert dense_measure_norm(diagonal) == pytest.approx(2.0, rel=TOL)


def test_power_norm_of_null_map():
    weights = np.ones(10)
    assert power_norm(LinearMap.diagonal(np.zeros(10), weights)).norm == 0.0


def test_power_norm_reports_non_convergence():
    weights = np.ones(10)
    with pytest.raises(ConvergenceError):
        power_norm(LinearMap.diagonal(np.linspace(1.0, 2.0, 10), weights), max_iter=1)


def test_linear_map_composition_and_adjoint(small_grid, rng):
    derivative = OperatorService.assemble_radial_derivative(small_grid).as_map()
    weight = LinearMap.diagonal(OperatorService.weight(small_grid, 2.0), small_grid.weights)
    composed = weight @ derivative
    u = rng.standard_normal(small_grid.n) + 0j
    v = rng.standard_normal(small_grid.n) + 0j
    lhs = small_grid.inner(composed(u), v)
    rhs = small_grid.inner(u, composed.H(v))
    assert abs(lhs - rhs) < TOL_ADJ * max(1.0, abs(lhs))
