import math

import numpy as np
import pytest

from regtrace import resolvent as R
from regtrace.eigen import eigh
from regtrace.errors import ContourError, NumericalFailure
from regtrace.galerkin import GalerkinSystem, build_system

from conftest import REFERENCE_TERMS, make_model, reference_model, two_level


def explicit_trace(mu, Q, lam, s):
    X = Q @ np.diag(1.0 / (mu - lam))
    return np.trace(np.linalg.matrix_power(X, s))


# ---------------------------------------------------------------- trace_power

def test_trace_power_examples():
    zero = GalerkinSystem.from_arrays([1.0, 2.0], np.zeros((2, 2)))
    assert R.trace_power(zero, 0.3 + 0.2j, 3) == 0
    one = GalerkinSystem.from_arrays([1.25], [[0.5]])
    assert R.trace_power(one, 0.0, 1) == pytest.approx(0.4, abs=1e-16)
    assert R.trace_power(two_level(), 0.0, 2) == pytest.approx(0.25, abs=1e-16)


def test_trace_power_sparse_path_matches_explicit_products(rng):
    model = reference_model(K=240)  # N = 480 exceeds the dense limit
    system = build_system(model)
    assert system.N > R.DENSE_LIMIT
    for lam in (3.3 + 1.0j, 50.0 - 7.0j):
        for s in (1, 2, 3, 4):
            expected = explicit_trace(system.mu, system.Qmat, lam, s)
            assert R.trace_power(system, lam, s) == pytest.approx(expected, rel=1e-12, abs=1e-300)


def test_trace_power_conjugate_symmetry(small_reference):
    for s in range(1, 5):
        lam = 4.1 + 2.3j
        assert R.trace_power(small_reference, np.conj(lam), s) == pytest.approx(
            np.conj(R.trace_power(small_reference, lam, s)), rel=1e-14
        )


def test_trace_power_pole_guard_names_mu():
    with pytest.raises(ContourError, match="mu_2"):
        R.trace_power(two_level(), 2.0, 2)


def test_dense_trace_table_matches_explicit(small_reference):
    lams = np.array([3.0 + 1j, 10.0 - 2j, -1.0 + 0.5j])
    table = R.dense_trace_table(small_reference, lams, 4)
    for i, lam in enumerate(lams):
        for s in range(1, 5):
            assert table["X"][s - 1, i] == pytest.approx(explicit_trace(small_reference.mu, small_reference.Qmat, lam, s), rel=1e-12)
            d = 1.0 / (small_reference.mu - lam)
            X = small_reference.Qmat * d[None, :]
            expected = np.trace(np.diag(d) @ np.linalg.matrix_power(X, s))
            assert table["R0X"][s - 1, i] == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------- clusters

def test_cluster_poles_partition_and_degeneracy():
    system = build_system(make_model(a=2.0, K=12, terms={1: np.eye(2).tolist()}))
    clusters = R.cluster_poles(system.mu)
    flat = sorted(i for c in clusters for i in c.indices)
    assert flat == list(range(system.N))
    big = [c for c in clusters if len(c.indices) > 1]
    # 4.5^2 + 2 = 2.5^2 + 16 and 7.5^2 + 2 = 6.5^2 + 16
    assert [c.value for c in big] == [22.25, 58.25]
    for c in clusters:
        assert c.radius > 0


def test_degenerate_gap_error():
    system = GalerkinSystem.from_arrays([1.0, 2.0], [[0.0, 0.5], [0.5, 0.0]])
    tight = R.PoleCluster(1.0, (0,), 1e-12)
    with pytest.raises(NumericalFailure, match="degenerate gap"):
        R.residue_at_pole(system, tight, 2)


# ---------------------------------------------------------------- residues

def test_residue_two_level_partial_fractions():
    # tr(lam X^2) = 0.5 lam / ((lam - 1)(lam - 2)): residues -0.5 at 1 and 1 at 2
    system = two_level()
    c1, c2 = R.cluster_poles(system.mu)
    assert R.residue_at_pole(system, c1, 2) == pytest.approx(-0.5, abs=1e-15)
    assert R.residue_at_pole(system, c1, 2, "quadrature") == pytest.approx(-0.5, abs=1e-12)
    assert R.residue_at_pole(system, c2, 2, "quadrature") == pytest.approx(1.0, abs=1e-12)


def test_residue_diagonal_q_is_square():
    system = GalerkinSystem.from_arrays([1.0, 3.0, 4.0], np.diag([0.3, -0.2, 0.7]))
    for c, qq in zip(R.cluster_poles(system.mu), [0.3, -0.2, 0.7]):
        assert R.residue_at_pole(system, c, 2) == pytest.approx(qq**2, rel=1e-14)
        assert R.residue_at_pole(system, c, 2, "quadrature") == pytest.approx(qq**2, rel=1e-10)


def test_residue_zero_potential():
    system = GalerkinSystem.from_arrays([1.0, 2.0, 5.0], np.zeros((3, 3)))
    for c in R.cluster_poles(system.mu):
        for s in (2, 3, 5):
            assert R.residue_at_pole(system, c, s) == 0.0


def test_series_residues_match_quadrature(small_reference):
    clusters = R.cluster_poles(small_reference.mu)
    for c in clusters[:6]:
        q = c.indices[0]
        series = R.residue_series(small_reference, [q], 6)
        for s in range(2, 7):
            quad = R.residue_at_pole(small_reference, c, s, "quadrature")
            assert series[s, 0] == pytest.approx(quad, rel=1e-9, abs=1e-14)
            assert R.residue_at_pole(small_reference, c, s, "series") == pytest.approx(series[s, 0], rel=1e-14)


def test_perturbation_coefficients_reproduce_eigenvalue():
    # lambda(eps) Taylor series summed at eps = 0.5 equals the eigenvalue of diag(mu) + Q / 2
    system = build_system(reference_model(K=10))
    E = R.perturbation_coefficients(system, [0, 3, 7], 40)
    exact = eigh(np.diag(system.mu) + 0.5 * system.Qmat).values[[0, 3, 7]]
    approx = (E * 0.5 ** np.arange(41)[:, None]).sum(axis=0)
    assert np.allclose(approx, exact, atol=1e-12)


def test_residue_table_cluster_shares():
    system = build_system(make_model(a=2.0, K=12, terms=REFERENCE_TERMS))
    clusters = R.cluster_poles(system.mu)
    pair = [c for c in clusters if len(c.indices) == 2][0]
    n = pair.indices[-1] + 1
    table = R.residue_table(system, n, 3, clusters)
    total = R.residue_at_pole(system, pair, 3)
    assert table[3, pair.indices[0]] == table[3, pair.indices[1]]
    assert table[3, list(pair.indices)].sum() == pytest.approx(total, rel=1e-12)
    with pytest.raises(ContourError, match="splits"):
        R.residue_table(system, pair.indices[0] + 1, 3, clusters)


# ---------------------------------------------------------------- contour moments

def test_contour_moments_two_level():
    system = two_level()
    contour = R.ContourSpec(0.0, 3.0, 256)
    res = R.contour_moments(system, contour, 2, "resolvent", "dense")
    thm = R.contour_moments(system, contour, 2, "theorem1", "dense")
    assert res[1] == pytest.approx(thm[1], rel=1e-8)
    # (-1)^2 / (pi i 2) * 2 pi i * (Res_1 + Res_2) = -0.5 + 1
    assert thm[1] == pytest.approx(0.5, rel=1e-12)


def test_contour_moments_zero_potential():
    system = GalerkinSystem.from_arrays([1.0, 2.0, 4.0], np.zeros((3, 3)))
    contour = R.make_contour(system.mu, 2)
    assert np.all(R.contour_moments(system, contour, 4) == 0)


def test_residue_theorem_closure(small_reference):
    mu = small_reference.mu
    clusters = R.cluster_poles(mu)
    for n in (3, 7, 12):
        contour = R.make_contour(mu, n)
        lam = contour.points()
        for s in range(1, 5):
            table = R.dense_trace_table(small_reference, lam, s)
            integral = contour.integrate(lam * table["X"][s - 1], lam)[0].real
            inside = sum(R.residue_at_pole(small_reference, c, s, "quadrature") for c in clusters if c.indices[-1] < n)
            assert integral == pytest.approx(inside, rel=1e-8, abs=1e-14)


def test_theorem1_equivalence_and_residue_route(small_reference):
    spec = eigh(small_reference.full_matrix())
    for n in (4, 9, 15):
        contour = R.make_contour(small_reference.mu, n, lam=spec.values)
        a = R.contour_moments(small_reference, contour, 4, "resolvent", "dense")
        b = R.contour_moments(small_reference, contour, 4, "theorem1", "dense")
        c = R.residue_D_ps(R.residue_table(small_reference, n, 4), n)
        assert np.allclose(a, b, rtol=1e-8, atol=1e-14)
        assert np.allclose(a, c, rtol=1e-8, atol=1e-14)


def test_ring_backend_matches_dense():
    system = build_system(reference_model(K=12).with_potential(reference_model(K=12).potential.scaled(0.3)))
    spec = eigh(system.full_matrix())
    contours = [R.make_contour(system.mu, n, lam=spec.values) for n in (3, 8)]
    ring = R.coupling_ring(system, contours, vectors=True)
    assert ring.rho > 1.0
    for contour in contours:
        dense = R.contour_moments(system, contour, 6, "resolvent", "dense")
        for form in ("resolvent", "theorem1"):
            assert np.allclose(R.contour_moments(system, contour, 6, form, "ring", ring), dense, rtol=1e-9, atol=1e-13)
        rem_dense = R.remainder_estimate(system, spec, contour, 6, "dense")
        rem_ring = R.remainder_estimate(system, spec, contour, 6, "ring", ring=ring)
        assert rem_ring == pytest.approx(rem_dense, rel=1e-6, abs=1e-13)


def test_ring_cache_reuse():
    system = build_system(reference_model(K=8).with_potential(reference_model(K=8).potential.scaled(0.3)))
    contour = R.make_contour(system.mu, 4)
    first = R.coupling_ring(system, [contour])
    assert R.coupling_ring(system, [contour]) is first


# ---------------------------------------------------------------- second moment and remainder

def test_second_moment_two_level():
    system = two_level()
    spec = eigh(system.full_matrix())
    assert R.contour_second_moment(system, spec, R.ContourSpec(0.0, 3.0, 256)) == pytest.approx(0.5, rel=1e-12)
    low = (1.5 - math.sqrt(2) / 2) ** 2 - 1.0
    assert low == pytest.approx(-0.371320, abs=1e-6)
    assert R.contour_second_moment(system, spec, R.ContourSpec(0.0, 1.5, 256)) == pytest.approx(low, rel=1e-12)


def test_second_moment_count_mismatch():
    system = two_level()
    spec = eigh(system.full_matrix())
    with pytest.raises(ContourError, match="encloses"):
        R.contour_second_moment(system, spec, R.ContourSpec(0.0, 0.9, 256))


def test_second_moment_exact_sum(small_reference):
    spec = eigh(small_reference.full_matrix())
    mu, lam = small_reference.mu, spec.values
    for n in (2, 6, 11):
        contour = R.make_contour(mu, n, lam=lam)
        exact = np.sum(lam[:n] ** 2 - mu[:n] ** 2)
        assert R.contour_second_moment(small_reference, spec, contour) == pytest.approx(exact, rel=1e-8)


def test_remainder_zero_potential():
    system = GalerkinSystem.from_arrays([1.0, 2.0, 4.0, 7.0], np.zeros((4, 4)))
    spec = eigh(system.full_matrix())
    assert R.remainder_estimate(system, spec, R.make_contour(system.mu, 2), 3) == 0.0


def test_expansion_closure_dense(small_reference):
    spec = eigh(small_reference.full_matrix())
    mu, lam = small_reference.mu, spec.values
    for m in (2, 5, 22):
        for n in (3, 10):
            contour = R.make_contour(mu, n, lam=lam)
            total = np.sum(lam[:n] ** 2 - mu[:n] ** 2)
            D = R.contour_moments(small_reference, contour, m)
            rem = R.remainder_estimate(small_reference, spec, contour, m, "dense")
            assert total - D.sum() - rem == pytest.approx(0.0, abs=1e-7 * abs(total))


def test_residue_route_remainder_matches_dense(small_reference):
    spec = eigh(small_reference.full_matrix())
    res = R.residue_table(small_reference, 10, 40)
    contour = R.make_contour(small_reference.mu, 10, lam=spec.values)
    dense = R.remainder_estimate(small_reference, spec, contour, 4, "dense")
    route = R.remainder_estimate(small_reference, spec, None, 4, "residue", residues=res, n=10)
    assert route == pytest.approx(dense, rel=1e-7)


# ---------------------------------------------------------------- contours

def test_make_contour_invariants(small_reference):
    mu = small_reference.mu
    for n in range(1, 10):
        if mu[n] == mu[n - 1]:
            continue
        c = R.make_contour(mu, n)
        gap = mu[n] - mu[n - 1]
        assert c.radius == 0.5 * (mu[n - 1] + mu[n])
        assert c.nodes >= 64 and c.nodes >= 16 * math.ceil(c.radius / gap)


def test_contour_rejects_close_lambda():
    with pytest.raises(ContourError, match="lambda"):
        R.make_contour(np.array([1.0, 2.0, 3.0]), 1, lam=np.array([1.5, 2.0, 3.0]))
    with pytest.raises(ContourError):
        R.make_contour(np.array([1.0, 1.0, 3.0]), 1)
