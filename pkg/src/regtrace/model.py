"""Problem instance: operator order, spectrum of ``A`` and the cosine potential."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import HypothesisError, ScenarioError

SYMMETRY_RTOL = 1e-12


def _cos_derivative(n: int, x, d: int):
    """d-th derivative of cos(n x), using the four-cycle of cosine."""
    if n == 0:
        return np.ones_like(np.asarray(x, dtype=float)) if d == 0 else np.zeros_like(np.asarray(x, dtype=float))
    phase = d % 4
    scale = float(n) ** d
    if phase == 0:
        return scale * np.cos(n * x)
    if phase == 1:
        return -scale * np.sin(n * x)
    if phase == 2:
        return -scale * np.cos(n * x)
    return scale * np.sin(n * x)


@dataclass(frozen=True)
class CosinePotential:
    """Q(x) = sum_n C_n cos(n x) with T x T symmetric coefficient matrices."""

    terms: tuple[tuple[int, np.ndarray], ...] = ()
    size: int = 1

    @classmethod
    def from_terms(cls, terms: Mapping[int, np.ndarray] | list, size: int) -> "CosinePotential":
        items = list(terms.items()) if isinstance(terms, Mapping) else list(terms)
        seen: set[int] = set()
        clean = []
        for n, mat in items:
            n = int(n)
            if n < 0:
                raise ScenarioError(f"frequency must be nonnegative, got {n}")
            if n in seen:
                raise ScenarioError(f"duplicate frequency n={n}")
            seen.add(n)
            mat = np.array(mat, dtype=float)
            if mat.shape != (size, size):
                raise ScenarioError(f"C_{n} has shape {mat.shape}, expected {(size, size)}")
            scale = max(np.max(np.abs(mat)), np.finfo(float).tiny)
            if np.max(np.abs(mat - mat.T)) > SYMMETRY_RTOL * scale:
                raise HypothesisError("Q2", f"C_{n} is not symmetric; Q(x) must be self-adjoint")
            clean.append((n, 0.5 * (mat + mat.T)))
        clean.sort(key=lambda t: t[0])
        return cls(tuple(clean), size)

    @property
    def frequencies(self) -> list[int]:
        return [n for n, _ in self.terms]

    def coefficient(self, n: int) -> np.ndarray:
        for freq, mat in self.terms:
            if freq == n:
                return mat
        return np.zeros((self.size, self.size))

    def scaled(self, t: float) -> "CosinePotential":
        return CosinePotential(tuple((n, t * c) for n, c in self.terms), self.size)

    def __call__(self, x: float, d: int = 0) -> np.ndarray:
        return potential_eval(self, x, d)


def potential_eval(potential: CosinePotential, x: float, d: int = 0) -> np.ndarray:
    """Q^{(d)}(x) as a T x T symmetric matrix."""
    if d < 0:
        raise ValueError("derivative order must be nonnegative")
    out = np.zeros((potential.size, potential.size))
    for n, mat in potential.terms:
        out += mat * float(_cos_derivative(n, x, d))
    return out


@dataclass(frozen=True)
class AsymptoticConstants:
    beta: float
    delta: float
    m_star: int
    m_theorem: int
    d1_estimate: float = math.nan
    d2_estimate: float = math.nan


def weyl_exponent(r: int, alpha: float) -> float:
    return 2.0 * r * alpha / (2.0 * r + alpha)


def series_cutoff(r: int, alpha: float, plus_one: bool = True) -> int:
    """Number of resolvent-series terms kept in the second trace.

    ``plus_one`` selects the cutoff under which the remainder is shown to
    vanish; without it the integer part alone is returned.
    """
    base = math.floor(abs((2 * r * alpha + 6 * r + 3 * alpha) / (2 * r * alpha - 2 * r - alpha)))
    return max(2, base + 1 if plus_one else base)


@dataclass(frozen=True)
class SpectralModel:
    r: int
    a: float
    alpha: float
    T: int
    K: int
    potential: CosinePotential = field(default_factory=CosinePotential)
    m_override: int | None = None

    @property
    def constants(self) -> AsymptoticConstants:
        beta = weyl_exponent(self.r, self.alpha)
        m_thm = series_cutoff(self.r, self.alpha, plus_one=False)
        m_star = self.m_override if self.m_override is not None else series_cutoff(self.r, self.alpha)
        return AsymptoticConstants(beta=beta, delta=beta - 1.0, m_star=m_star, m_theorem=m_thm)

    def gamma(self, j):
        return gamma(self, j)

    def gammas(self) -> np.ndarray:
        return gamma(self, np.arange(1, self.T + 1))

    def with_potential(self, potential: CosinePotential) -> "SpectralModel":
        return SpectralModel(self.r, self.a, self.alpha, self.T, self.K, potential, self.m_override)

    def with_K(self, K: int) -> "SpectralModel":
        return SpectralModel(self.r, self.a, self.alpha, self.T, K, self.potential, self.m_override)


def gamma(model: SpectralModel, j):
    """Eigenvalue a j^alpha of A (1-based j)."""
    return model.a * np.asarray(j, dtype=float) ** model.alpha if np.ndim(j) else model.a * float(j) ** model.alpha


def validate_scenario(raw: Mapping) -> SpectralModel:
    """Build a :class:`SpectralModel` from a parsed scenario mapping.

    ``raw`` needs a ``model`` mapping (r, a, alpha, T, K) and a ``potential``
    mapping ``{n: matrix}``; an optional ``run`` mapping may carry ``m``.
    """
    try:
        block = raw["model"]
        r = int(block["r"])
        a = float(block["a"])
        alpha = float(block["alpha"])
        T = int(block["T"])
        K = int(block["K"])
    except KeyError as exc:
        raise ScenarioError(f"missing model key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad model value: {exc}") from None

    if r < 1:
        raise HypothesisError("order", f"r must be >= 1, got {r}")
    if not a > 0:
        raise HypothesisError("A>=I spectrum", f"spectrum scale a must be positive, got {a}")
    if T < 1 or K < 1:
        raise ScenarioError(f"T and K must be >= 1, got T={T}, K={K}")
    threshold = 2 * r / (2 * r - 1)
    if not alpha > threshold:
        raise HypothesisError(
            "alpha>2r/(2r-1)",
            f"alpha={alpha} does not exceed 2r/(2r-1)={threshold:g}; resolvents are not trace class",
        )

    potential = CosinePotential.from_terms(raw.get("potential", {}) or {}, T)
    for n, _ in potential.terms:
        for i in range(r + 1):
            d = 2 * i + 1
            jump = float(_cos_derivative(n, 0.0, d)) + float(_cos_derivative(n, math.pi, d))
            if abs(jump) > 1e-12 * max(1.0, float(n) ** d):
                raise HypothesisError("Q1", f"odd derivative {d} of cos({n}x) fails the endpoint condition")

    m = (raw.get("run") or {}).get("m")
    if m is not None:
        m = int(m)
        if m < 2:
            raise ScenarioError(f"series cutoff m must be >= 2, got {m}")
    return SpectralModel(r=r, a=a, alpha=alpha, T=T, K=K, potential=potential, m_override=m)
