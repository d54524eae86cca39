"""Dense symmetric eigensolvers with verified residuals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure

RESIDUAL_TOL = 1e-10
ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SpectrumResult:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns
    residual_bound: float

    @property
    def N(self) -> int:
        return len(self.values)


def _check_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(float(np.max(np.abs(M))) if M.size else 0.0, np.finfo(float).tiny)
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric within 1e-12 relative")
    return 0.5 * (M + M.T)


def _verify(M: np.ndarray, w: np.ndarray, V: np.ndarray) -> SpectrumResult:
    fro = float(np.linalg.norm(M))
    res = np.linalg.norm(M @ V - V * w, axis=0)
    worst = float(res.max(initial=0.0))
    if worst > RESIDUAL_TOL * max(fro, np.finfo(float).tiny) and fro > 0:
        raise NumericalFailure(f"eigenpair residual {worst:.3e} exceeds {RESIDUAL_TOL:g} * ||M||_F")
    gram = V.T @ V - np.eye(len(w))
    if np.max(np.abs(gram), initial=0.0) > ORTHO_TOL:
        raise NumericalFailure("eigenvectors are not orthonormal to 1e-10")
    return SpectrumResult(values=w, vectors=V, residual_bound=worst)


def eigh(M: np.ndarray) -> SpectrumResult:
    """Eigen-decomposition of a real symmetric matrix via LAPACK, then verified."""
    M = _check_symmetric(M)
    try:
        w, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"LAPACK eigensolver did not converge: {exc}") from exc
    return _verify(M, w, V)


def jacobi_eigh(M: np.ndarray, max_sweeps: int = 40, tol: float = 1e-15) -> SpectrumResult:
    """Cyclic Jacobi eigensolver.

    Deterministic row-by-row sweeps; stops once the off-diagonal Frobenius
    mass drops below ``tol * ||M||_F``. Exceeding ``max_sweeps`` raises.
    """
    A = _check_symmetric(M).copy()
    n = A.shape[0]
    V = np.eye(n)
    fro = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff  # tau would overflow; first-order angle
                else:
                    tau = diff / (2.0 * apq)
                    t = np.copysign(1.0, tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rp - s * rq, s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    else:
        off_max = float(np.max(np.abs(A - np.diag(np.diag(A)))))
        raise NumericalFailure(f"Jacobi did not converge in {max_sweeps} sweeps; worst off-diagonal {off_max:.3e}")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return _verify(_check_symmetric(M), w[order], V[:, order])


def refined_shifts(spectrum: SpectrumResult, mu: np.ndarray, Qmat: np.ndarray) -> np.ndarray:
    """lambda_q - mu_q, rank-paired, from Rayleigh quotients.

    Uses sum_i (mu_i - mu_q) v_i^2 + v^T Q v so that the small difference is
    never formed by cancelling two large eigenvalues.
    """
    V = spectrum.vectors
    diag_part = np.einsum("iq,iq->q", (mu[:, None] - mu[None, :]) * V, V)
    pert_part = np.einsum("iq,iq->q", Qmat @ V, V)
    norms = np.einsum("iq,iq->q", V, V)
    return (diag_part + pert_part) / norms
