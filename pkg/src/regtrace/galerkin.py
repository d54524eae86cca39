"""Matrix of L = L0 + Q in the eigenbasis sqrt(2/pi) cos((k+1/2)x) phi_j of L0."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .model import SpectralModel


class BasisIndex(NamedTuple):
    q: int  # 1-based rank
    k: int
    j: int  # 1-based A-eigenindex
    mu: float


def unperturbed_eigenvalue(model: SpectralModel, k, j):
    return (np.asarray(k, dtype=float) + 0.5) ** (2 * model.r) + model.a * np.asarray(j, dtype=float) ** model.alpha


def enumerate_basis(model: SpectralModel) -> list[BasisIndex]:
    """All (k, j) with k < K, j <= T, ordered by mu and then (j, k)."""
    k, j = np.meshgrid(np.arange(model.K), np.arange(1, model.T + 1), indexing="ij")
    k, j = k.ravel(), j.ravel()
    mu = unperturbed_eigenvalue(model, k, j)
    order = np.lexsort((k, j, mu))
    return [BasisIndex(q + 1, int(k[i]), int(j[i]), float(mu[i])) for q, i in enumerate(order)]


def overlap_integral(n: int, k: int, kp: int) -> float:
    """Integral over [0, pi] of cos(n x) cos((k+1/2)x) cos((k'+1/2)x)."""
    if n == 0:
        return math.pi / 2 if k == kp else 0.0
    val = 0.0
    if n == k + kp + 1:
        val += math.pi / 4
    if n == abs(k - kp):
        val += math.pi / 4
    return val


def _normalized_overlaps(n: int, k: np.ndarray) -> np.ndarray:
    # (2/pi) * overlap_integral, kept exact: 1 on the n=0 diagonal, 1/2 per matching branch
    kr, kc = k[:, None], k[None, :]
    if n == 0:
        return (kr == kc) * 1.0
    return ((kr + kc + 1 == n) * 1.0 + (np.abs(kr - kc) == n)) * 0.5


@dataclass
class GalerkinSystem:
    basis: list[BasisIndex]
    Qmat: np.ndarray
    model: SpectralModel
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_arrays(cls, mu, Qmat, model: SpectralModel | None = None) -> "GalerkinSystem":
        """System with prescribed ascending mu and symmetric Qmat (labels k = q - 1, j = 1)."""
        mu = np.asarray(mu, dtype=float)
        Qmat = np.asarray(Qmat, dtype=float)
        if Qmat.shape != (len(mu), len(mu)):
            raise ValueError("Qmat must be square with one row per mu")
        if np.any(np.diff(mu) < 0):
            raise ValueError("mu must be sorted ascending")
        basis = [BasisIndex(q + 1, q, 1, float(m)) for q, m in enumerate(mu)]
        return cls(basis=basis, Qmat=0.5 * (Qmat + Qmat.T), model=model)

    @property
    def N(self) -> int:
        return len(self.basis)

    @cached_property
    def mu(self) -> np.ndarray:
        return np.array([b.mu for b in self.basis])

    @cached_property
    def k(self) -> np.ndarray:
        return np.array([b.k for b in self.basis])

    @cached_property
    def j(self) -> np.ndarray:
        return np.array([b.j for b in self.basis])

    @cached_property
    def Qsparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.Qmat)

    @cached_property
    def qnorm2(self) -> float:
        """Spectral norm of the perturbation matrix."""
        if not self.Qmat.any():
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvalsh(self.Qmat))))

    def full_matrix(self) -> np.ndarray:
        return np.diag(self.mu) + self.Qmat

    def summary(self) -> dict:
        nnz = int(np.count_nonzero(self.Qmat))
        return {
            "N": self.N,
            "nnz": nnz,
            "density": nnz / float(self.N * self.N),
            "qmat_max": float(np.max(np.abs(self.Qmat))) if self.N else 0.0,
            "qmat_frobenius": float(np.linalg.norm(self.Qmat)),
            "qmat_spectral": self.qnorm2,
            "mu_min": float(self.mu[0]),
            "mu_max": float(self.mu[-1]),
        }


def assemble_Q_matrix(model: SpectralModel, basis: list[BasisIndex] | None = None) -> GalerkinSystem:
    """Qmat[p, q] = (2/pi) sum_n I(n, k_p, k_q) (C_n)[j_p, j_q]."""
    if basis is None:
        basis = enumerate_basis(model)
    k = np.array([b.k for b in basis])
    j = np.array([b.j for b in basis]) - 1
    Qmat = np.zeros((len(basis), len(basis)))
    for n, C in model.potential.terms:
        Qmat += _normalized_overlaps(n, k) * C[j[:, None], j[None, :]]
    Qmat = 0.5 * (Qmat + Qmat.T)
    return GalerkinSystem(basis=basis, Qmat=Qmat, model=model)


def build_system(model: SpectralModel) -> GalerkinSystem:
    return assemble_Q_matrix(model, enumerate_basis(model))
