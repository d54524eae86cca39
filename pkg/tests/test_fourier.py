import math

import numpy as np
import pytest
from scipy.integrate import quad

from regtrace import fourier as F
from regtrace.errors import ConsistencyError, NumericalFailure
from regtrace.traces import rhs_second

from conftest import REFERENCE_TERMS, make_model, reference_model


def profile(coefficients, j=1):
    return F.DiagonalProfile(j, dict(coefficients))


def quad_pi(f):
    return quad(f, 0.0, math.pi, limit=400, epsabs=1e-13, epsrel=1e-13)[0]


# ---------------------------------------------------------------- quadrature

@pytest.mark.parametrize("f", [np.sin, lambda x: np.exp(np.cos(3 * x)), lambda x: x**7])
def test_composite_gauss_legendre_matches_scipy(f):
    assert F.composite_gauss_legendre(f) == pytest.approx(quad_pi(f), rel=1e-12, abs=1e-13)


# ---------------------------------------------------------------- Fourier coefficients

def test_h_fourier_coeff_examples():
    h = profile({1: 1.0})
    assert F.h_fourier_coeff(h, 0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert F.h_fourier_coeff(h, 1) == 0.0
    zero = profile({})
    assert all(F.h_fourier_coeff(zero, k) == 0.0 for k in range(5))
    with pytest.raises(ValueError):
        F.h_fourier_coeff(h, -1)


def test_h_fourier_coeff_against_quadrature():
    h = profile({0: 0.3, 1: -0.7, 2: 0.4, 3: 1.1, 5: 0.2})
    for k in range(5):
        expected = quad_pi(lambda x: h(x) * np.cos((2 * k + 1) * x))
        assert F.h_fourier_coeff(h, k) == pytest.approx(expected, abs=1e-12)


def test_profiles_take_diagonals():
    model = reference_model(K=4)
    hs = F.profiles(model)
    assert [h.j for h in hs] == [1, 2]
    for n, c in REFERENCE_TERMS.items():
        assert hs[0].coefficient(n) == c[0][0]
        assert hs[1].coefficient(n) == c[1][1]


# ---------------------------------------------------------------- integration by parts

@pytest.mark.parametrize("method", ["closed", "quadrature"])
def test_ibp_examples(method):
    h = profile({1: 1.0})
    lhs, rhs = F.ibp_identity_check(h, 0, 1, method)
    assert lhs == pytest.approx(math.pi / 2, abs=1e-12)
    assert rhs == pytest.approx(math.pi / 2, abs=1e-12)
    lhs, rhs = F.ibp_identity_check(h, 1, 1, method)
    assert abs(lhs) < 1e-12 and abs(rhs) < 1e-12
    const = profile({0: 2.5})
    for r in (1, 2, 3):
        lhs, rhs = F.ibp_identity_check(const, 2, r, method)
        assert abs(lhs) < 1e-12 and abs(rhs) < 1e-12


@pytest.mark.parametrize("r", [1, 2])
def test_ibp_identity_holds_for_mixed_profile(r):
    h = profile({0: 0.1, 1: 0.5, 2: -0.3, 3: 0.8, 7: -0.05})
    for k in range(6):
        for method in ("closed", "quadrature"):
            lhs, rhs = F.ibp_identity_check(h, k, r, method)
            assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


def test_ibp_unknown_method():
    with pytest.raises(ValueError):
        F.ibp_identity_check(profile({1: 1.0}), 0, 1, "simpson")


# ---------------------------------------------------------------- series bound

def test_nuclear_norm_nonsymmetric():
    M = np.array([[1.0, 2.0], [0.0, 3.0]])
    assert F.nuclear_norm(M) == pytest.approx(np.sum(np.linalg.svd(M, compute_uv=False)))
    assert F.nuclear_norm(np.diag([-2.0, 3.0])) == pytest.approx(5.0)


def test_series_zero_potential():
    result = F.theorem2_series(make_model(K=8))
    assert np.all(result.partial_sums == 0.0)
    assert result.bound == 0.0
    assert result.stabilization == 0


def test_series_single_term_value():
    result = F.theorem2_series(make_model(T=1, K=16, terms={1: [[1.0]]}))
    assert result.partial_sums[-1] == pytest.approx(5 * math.pi / 8, abs=1e-14)
    assert result.stabilization == 1
    # the bound integrand is (1 + 1)|cos x|, so the bound is pi^2/8 * 4
    assert result.bound == pytest.approx(math.pi**2 / 2, rel=1e-6)


def test_series_stabilizes_past_largest_odd_frequency():
    result = F.theorem2_series(reference_model(K=32))
    assert result.stabilization == (3 + 1) // 2
    sums = result.partial_sums
    assert np.all(np.diff(sums) >= 0)
    assert np.all(sums[result.stabilization - 1 :] == sums[-1])
    assert sums[-1] <= result.bound


def test_series_k_limit_guard():
    with pytest.raises(ValueError):
        F.theorem2_series(make_model(K=8), k_limit=9)


def test_series_bound_violation_raises(monkeypatch):
    monkeypatch.setattr(F, "nuclear_norm", lambda M: 0.0)
    with pytest.raises(NumericalFailure, match="exceeds the bound"):
        F.theorem2_series(make_model(T=1, K=4, terms={1: [[1.0]]}))


# ---------------------------------------------------------------- oscillatory limit

def test_oscillatory_limit_examples():
    assert F.oscillatory_sum_limit(make_model()) == 0.0
    single = make_model(T=1, terms={1: [[1.0]]})
    assert F.oscillatory_sum_limit(single) == pytest.approx(1.25, abs=1e-14)
    assert F.oscillatory_sum_limit(make_model(T=1, terms={2: [[1.0]]})) == 0.0


def test_oscillatory_limit_matches_endpoint_route():
    for model in (reference_model(K=8), make_model(r=2, alpha=4.0, K=8, terms=REFERENCE_TERMS)):
        osc = F.oscillatory_sum_limit(model)
        assert osc == pytest.approx(rhs_second(model), abs=1e-12)
        assert F.endpoint_weighted_limit(model) == pytest.approx(osc, abs=1e-10)


def test_oscillatory_limit_disagreement_raises(monkeypatch):
    monkeypatch.setattr(F, "rhs_second", lambda model: 99.0)
    with pytest.raises(ConsistencyError):
        F.oscillatory_sum_limit(make_model(T=1, terms={1: [[1.0]]}))
