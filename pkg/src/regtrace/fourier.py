"""Cosine-series side of the second trace: diagonal profiles h_j, the
integration-by-parts identity, the absolute-convergence bound and the
endpoint evaluation of the oscillatory sum."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, NumericalFailure
from .model import SpectralModel, _cos_derivative, potential_eval
from .traces import rhs_second


def composite_gauss_legendre(f, a: float = 0.0, b: float = math.pi, panels: int = 64, order: int = 8) -> float:
    """Integral of a vectorized f over [a, b] with ``panels`` Gauss-Legendre panels."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    vals = np.asarray(f(pts))
    return float(np.dot(wts, vals) if vals.ndim == 1 else np.tensordot(wts, vals, axes=(0, 0)))


@dataclass(frozen=True)
class DiagonalProfile:
    """h_j(x) = (Q(x) phi_j, phi_j) = sum_n coefficients[n] cos(n x)."""

    j: int
    coefficients: dict[int, float]

    def __call__(self, x, d: int = 0):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for n, c in self.coefficients.items():
            out = out + c * _cos_derivative(n, x, d)
        return out

    def coefficient(self, n: int) -> float:
        return self.coefficients.get(n, 0.0)


def profiles(model: SpectralModel) -> list[DiagonalProfile]:
    Q = model.potential
    return [
        DiagonalProfile(j, {n: float(c[j - 1, j - 1]) for n, c in Q.terms}) for j in range(1, model.T + 1)
    ]


def h_fourier_coeff(profile: DiagonalProfile, k: int) -> float:
    """Integral over [0, pi] of h_j(x) cos((2k+1) x)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return 0.5 * math.pi * profile.coefficient(2 * k + 1)


def ibp_identity_check(profile: DiagonalProfile, k: int, r: int, method: str = "closed") -> tuple[float, float]:
    """Both sides of moving 2r+2 derivatives onto h_j against cos((2k+1) x).

    ``closed`` uses cosine orthogonality, ``quadrature`` composite
    Gauss-Legendre on [0, pi].
    """
    n = 2 * k + 1
    factor = (-1) ** (r + 1) / float(n) ** (2 * r + 2)
    if method == "closed":
        lhs = h_fourier_coeff(profile, k)
        deriv = sum(
            c * float(_cos_derivative(f, 0.0, 2 * r + 2)) * (0.5 * math.pi if f == n else 0.0)
            for f, c in profile.coefficients.items()
            if f > 0
        )
        return lhs, factor * deriv
    if method == "quadrature":
        lhs = composite_gauss_legendre(lambda x: profile(x) * np.cos(n * x))
        deriv = composite_gauss_legendre(lambda x: profile(x, 2 * r + 2) * np.cos(n * x))
        return lhs, factor * deriv
    raise ValueError(f"unknown method {method!r}")


def nuclear_norm(M: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(M, compute_uv=False)))


@dataclass(frozen=True)
class SeriesBound:
    partial_sums: np.ndarray  # partial_sums[i] sums k < i + 1
    bound: float
    stabilization: int  # number of terms after which the partial sums stop changing


def theorem2_series(model: SpectralModel, k_limit: int | None = None) -> SeriesBound:
    """Absolute partial sums of sum_k sum_j [(k+1/2)^(2r) + gamma_j] * int h_j cos((2k+1)x).

    The bound is (pi^2 / 8) times the integral of the nuclear norms of
    Q^(2r+2) and A Q'' over [0, pi].
    """
    k_limit = model.K if k_limit is None else k_limit
    if not 1 <= k_limit <= model.K:
        raise ValueError(f"k_limit must lie in 1..K={model.K}")
    r = model.r
    g = model.gammas()
    prof = profiles(model)
    k = np.arange(k_limit)
    terms = np.zeros(k_limit)
    for j, h in enumerate(prof):
        coef = np.array([h_fourier_coeff(h, int(kk)) for kk in k])
        terms += np.abs(((k + 0.5) ** (2 * r) + g[j]) * coef)
    sums = np.cumsum(terms)

    A = np.diag(g)
    Q = model.potential

    def norms(xs):
        return np.array(
            [nuclear_norm(potential_eval(Q, x, 2 * r + 2)) + nuclear_norm(A @ potential_eval(Q, x, 2)) for x in xs]
        )

    bound = math.pi**2 / 8.0 * composite_gauss_legendre(norms)
    if np.any(np.diff(sums) < 0):
        raise NumericalFailure("absolute partial sums decrease")
    if sums[-1] > bound * (1 + 1e-12):
        raise NumericalFailure(f"absolute partial sum {sums[-1]:.6g} exceeds the bound {bound:.6g}")
    changed = np.nonzero(terms)[0]
    stabilization = int(changed[-1] + 1) if len(changed) else 0
    return SeriesBound(sums, float(bound), stabilization)


def oscillatory_sum_limit(model: SpectralModel) -> float:
    """(2/pi) sum_k sum_j [(k+1/2)^(2r) + gamma_j] int h_j cos((2k+1)x), in closed form.

    Raises ConsistencyError unless it equals the endpoint right-hand side.
    """
    r = model.r
    g = model.gammas()
    terms = []
    for h, gj in zip(profiles(model), g):
        for n in sorted(h.coefficients):
            if n % 2 == 1:
                k = (n - 1) // 2
                terms.append(2.0 / math.pi * ((k + 0.5) ** (2 * r) + gj) * h_fourier_coeff(h, k))
    total = math.fsum(terms)
    target = rhs_second(model)
    if abs(total - target) > 1e-12 * max(1.0, abs(target)):
        raise ConsistencyError(f"oscillatory sum {total!r} differs from the endpoint value {target!r}")
    return total


def _cos_product_integral(n: int, k: int) -> float:
    """Integral over [0, pi] of cos(n x) cos(k x)."""
    if n != k:
        return 0.0
    return math.pi if n == 0 else 0.5 * math.pi


def endpoint_weighted_limit(model: SpectralModel) -> float:
    """Same limit through the cosine Fourier series of (-1/4)^r h_j^(2r) + gamma_j h_j at 0 and pi.

    Each coefficient is M_k times the integral against cos(k x), with
    M_0 = 1/pi and M_k = 2/pi otherwise.
    """
    r = model.r
    total = 0.0
    for h, gj in zip(profiles(model), model.gammas()):
        freqs = sorted(h.coefficients)
        top = max(freqs, default=0)
        for k in range(top + 1):
            weight = (1.0 if k == 0 else 2.0) / math.pi
            integral = 0.0
            for n in freqs:
                # (-1/4)^r d^(2r) cos(nx) + gamma_j cos(nx) = [(-1/4)^r (-1)^r n^(2r) + gamma_j] cos(nx)
                amp = (-0.25) ** r * (-1) ** r * float(n) ** (2 * r) + gj
                integral += h.coefficient(n) * amp * _cos_product_integral(n, k)
            a_k = weight * integral
            total += 0.5 * a_k * (math.cos(k * 0.0) - math.cos(k * math.pi))
    return total
