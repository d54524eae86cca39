import math

import numpy as np
import pytest

from regtrace.eigen import eigh, jacobi_eigh, refined_shifts
from regtrace.errors import NumericalFailure
from regtrace.galerkin import build_system

from conftest import REFERENCE_TERMS, make_model

SOLVERS = [eigh, jacobi_eigh]


@pytest.mark.parametrize("solve", SOLVERS)
def test_two_by_two(solve):
    assert np.allclose(solve(np.array([[2.0, 1.0], [1.0, 2.0]])).values, [1.0, 3.0], atol=1e-14)
    expected = [1.5 - math.sqrt(2) / 2, 1.5 + math.sqrt(2) / 2]
    assert np.allclose(solve(np.array([[1.0, 0.5], [0.5, 2.0]])).values, expected, atol=1e-14)


@pytest.mark.parametrize("solve", SOLVERS)
def test_diagonal_input(solve):
    mu = np.array([3.0, 1.0, 2.0, 5.0])
    assert np.array_equal(solve(np.diag(mu)).values, np.sort(mu))


@pytest.mark.parametrize("solve", SOLVERS)
def test_characteristic_polynomial_oracle(solve, rng):
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        M = A + A.T
        roots = np.sort(np.roots(np.poly(M)).real)
        assert np.allclose(solve(M).values, roots, atol=1e-9)


@pytest.mark.parametrize("solve", SOLVERS)
def test_invariants_on_galerkin_matrix(solve):
    system = build_system(make_model(K=20, terms=REFERENCE_TERMS))
    M = system.full_matrix()
    spec = solve(M)
    fro = np.linalg.norm(M)
    assert np.all(np.diff(spec.values) >= 0)
    assert abs(spec.values.sum() - np.trace(M)) <= 1e-9 * fro
    assert abs(np.sum(spec.values**2) - fro**2) <= 1e-9 * fro**2
    assert np.max(np.abs(spec.vectors.T @ spec.vectors - np.eye(system.N))) <= 1e-10
    assert np.all(np.abs(spec.values - system.mu) <= system.qnorm2 + 1e-12)
    assert system.qnorm2 <= np.linalg.norm(system.Qmat) + 1e-15


def test_jacobi_matches_lapack(rng):
    A = rng.normal(size=(30, 30))
    M = A + A.T
    assert np.allclose(jacobi_eigh(M).values, eigh(M).values, atol=1e-11)


def test_rejects_asymmetric():
    with pytest.raises(ValueError):
        eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_jacobi_budget_exhaustion():
    M = np.array([[1.0, 0.5], [0.5, 2.0]])
    M = np.kron(np.eye(4), M) + 0.1
    with pytest.raises(NumericalFailure) as err:
        jacobi_eigh(M, max_sweeps=0)
    assert "off-diagonal" in str(err.value)


def test_refined_shifts_match_plain_differences():
    system = build_system(make_model(K=20, terms=REFERENCE_TERMS))
    spec = eigh(system.full_matrix())
    d = refined_shifts(spec, system.mu, system.Qmat)
    assert np.allclose(d, spec.values - system.mu, atol=1e-12)
