import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatchain import lattice as lt


@pytest.fixture(params=[1, 2, 7, 8, 64])
def n(request):
    return request.param


def test_divergence_of_constant_is_zero():
    assert np.all(lt.apply_divergence(np.full(9, 3.5)) == 0.0)


def test_divergence_unit_vector():
    np.testing.assert_array_equal(lt.apply_divergence([0.0, 1.0, 0.0]), [1.0, -1.0])


def test_gradient_of_zero():
    assert np.all(lt.apply_gradient(np.zeros(5)) == 0.0)


def test_dimension_errors():
    with pytest.raises(lt.DimensionError):
        lt.apply_divergence([1.0])
    with pytest.raises(lt.DimensionError):
        lt.neumann_basis(4).forward(np.ones(4))
    with pytest.raises(lt.DimensionError):
        lt.dirichlet_basis(4).forward(np.ones(5))


def test_intertwining_relations():
    n = 8
    N, D = lt.neumann_basis(n), lt.dirichlet_basis(n)
    for j in range(1, n + 1):
        psi, phi, g = N.vectors[j], D.vectors[j - 1], N.gammas[j]
        np.testing.assert_allclose(lt.apply_divergence(psi), -g * phi, atol=1e-12)
        np.testing.assert_allclose(lt.apply_gradient(phi), g * psi, atol=1e-12)
    # psi_0 is constant: killed by the divergence
    np.testing.assert_allclose(lt.apply_divergence(N.vectors[0]), 0.0, atol=1e-14)


def test_neumann_eigen_relation():
    n = 8
    N = lt.neumann_basis(n)
    for j in range(n + 1):
        np.testing.assert_allclose(
            lt.apply_neumann_laplacian(N.vectors[j]), -N.eigenvalues[j] * N.vectors[j], atol=1e-12
        )


def test_n1_eigenvalue():
    lam, _ = lt.eigenvalues(1)
    assert lam[1] == pytest.approx(2.0, abs=1e-15)


def test_eigenvalues_increasing():
    lam, gam = lt.eigenvalues(16)
    assert lam[0] == 0.0
    assert np.all(np.diff(lam) > 0)
    np.testing.assert_allclose(lam, gam**2)


def test_orthogonality_relations(n):
    for B in (lt.neumann_basis(n), lt.dirichlet_basis(n)):
        V = B.vectors
        I = np.eye(V.shape[0])
        np.testing.assert_allclose(V @ V.T, I, atol=1e-12)
        np.testing.assert_allclose(V.T @ V, I, atol=1e-12)


def test_factorizations(n):
    rng = np.random.default_rng(n)
    f = rng.normal(size=n + 1)
    g = rng.normal(size=n)
    lapN = np.pad(f, 1, mode="edge")
    lapN = lapN[2:] + lapN[:-2] - 2 * f
    np.testing.assert_allclose(lt.apply_neumann_laplacian(f), lapN, atol=1e-12)
    lapD = np.pad(g, 1)
    lapD = lapD[2:] + lapD[:-2] - 2 * g
    np.testing.assert_allclose(lt.apply_dirichlet_laplacian(g), lapD, atol=1e-12)


def test_adjointness_random_pairs():
    n = 16
    rng = np.random.default_rng(0)
    for _ in range(100):
        f = rng.normal(size=n)
        g = rng.normal(size=n + 1)
        # explicit loop oracle for both sides
        grad = [(f[x] if x < n else 0.0) - (f[x - 1] if x >= 1 else 0.0) for x in range(n + 1)]
        div = [g[x] - g[x - 1] for x in range(1, n + 1)]
        lhs = sum(grad[x] * g[x] for x in range(n + 1))
        rhs = sum(f[x - 1] * div[x - 1] for x in range(1, n + 1))
        assert abs(lhs + rhs) < 1e-12
        assert abs(np.dot(lt.apply_gradient(f), g) + np.dot(f, lt.apply_divergence(g))) < 1e-12


def test_matrices_match_operators():
    n = 6
    rng = np.random.default_rng(1)
    f = rng.normal(size=n + 1)
    np.testing.assert_allclose(lt.divergence_matrix(n) @ f, lt.apply_divergence(f))
    g = rng.normal(size=n)
    np.testing.assert_allclose(lt.gradient_matrix(n) @ g, lt.apply_gradient(g))
    np.testing.assert_allclose(lt.neumann_laplacian_matrix(n) @ f, lt.apply_neumann_laplacian(f))


def test_transform_of_basis_vector_is_unit():
    n = 8
    e = lt.neumann_transform(lt.neumann_basis(n).vectors[3])
    expected = np.zeros(n + 1)
    expected[3] = 1.0
    np.testing.assert_allclose(e, expected, atol=1e-12)


def test_round_trip_and_parseval():
    n = 64
    rng = np.random.default_rng(2)
    f = rng.normal(size=n + 1)
    fh = lt.neumann_transform(f)
    assert np.max(np.abs(lt.neumann_transform(fh, "inverse") - f)) < 1e-10
    assert np.sum(f**2) == pytest.approx(np.sum(fh**2), rel=1e-12)
    g = rng.normal(size=n)
    gh = lt.dirichlet_transform(g)
    assert np.max(np.abs(lt.dirichlet_transform(gh, "inverse") - g)) < 1e-10
    assert np.sum(g**2) == pytest.approx(np.sum(gh**2), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=2**31))
def test_round_trip_property(n, seed):
    f = np.random.default_rng(seed).normal(size=(3, n + 1))
    np.testing.assert_allclose(lt.neumann_transform(lt.neumann_transform(f), "inverse"), f, atol=1e-11)


def test_lattice_spec_grid():
    s = lt.LatticeSpec(5)
    assert s.u[0] == 0 and s.u[-1] == pytest.approx(5 / 6)
    assert np.all(np.diff(s.u) > 0)
