"""Resolvent-trace calculus on circles: trace powers, residues, D_ps and remainders.

Notation: X(lam) = Q R0(lam) with R0(lam) = diag(1 / (mu - lam)) in the
unperturbed eigenbasis.  Every contour integral is an equispaced trapezoidal
sum on a circle, which is spectrally accurate for the rational integrands here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .eigen import SpectrumResult, refined_shifts
from .errors import ContourError, NumericalFailure
from .galerkin import GalerkinSystem

DENSE_LIMIT = 400  # largest N evaluated by explicit per-node matrix products
CHUNK_ENTRIES = 4_000_000
RING_POINTS = 48
NODES_PER_DECAY = 64.0  # exp(-64) leaves room for the N^s growth of high-order pole errors
RING_RADIUS_MAX = 1.6
RING_NOISE = 100.0  # safety factor on the round-off estimate of ring coefficients


@dataclass(frozen=True)
class ContourSpec:
    center: complex
    radius: float
    nodes: int

    def points(self) -> np.ndarray:
        theta = 2.0 * np.pi * (np.arange(self.nodes) + 0.5) / self.nodes
        return self.center + self.radius * np.exp(1j * theta)

    def integrate(self, values: np.ndarray, lam: np.ndarray | None = None) -> tuple[complex, float]:
        """(1/2 pi i) * contour integral of ``values`` sampled at :meth:`points`.

        Returns the complex value and the quadrature magnitude scale
        mean |f (lam - c)| used for imaginary-part checks.
        """
        if lam is None:
            lam = self.points()
        terms = values * (lam - self.center)
        return complex(np.mean(terms, axis=-1)), float(np.mean(np.abs(terms), axis=-1))


def make_contour(mu: np.ndarray, n_p: int, nodes_mult: int = 4, lam: np.ndarray | None = None) -> ContourSpec:
    """Circle |z| = b_p between mu[n_p - 1] and mu[n_p] (n_p counts enclosed states).

    The trapezoidal error decays like exp(-nodes * delta / b) with delta the
    distance from the circle to the nearest pole, so when the perturbed
    eigenvalues are known the node count also covers them.
    """
    if not 1 <= n_p < len(mu):
        raise ContourError(f"cut n_p={n_p} outside 1..{len(mu) - 1}")
    gap = float(mu[n_p] - mu[n_p - 1])
    if gap <= 0:
        raise ContourError(f"no gap at n_p={n_p}")
    b = 0.5 * float(mu[n_p - 1] + mu[n_p])
    nodes = max(64, nodes_mult * 16 * int(math.ceil(b / gap)))
    if lam is not None:
        delta = float(np.min(np.abs(np.abs(np.asarray(lam)) - b)))
        if delta > 0:
            nodes = max(nodes, int(math.ceil(NODES_PER_DECAY * b / min(delta, gap / 2))))
    contour = ContourSpec(0.0, b, nodes)
    check_contour(contour, mu, gap, lam)
    return contour


def check_contour(contour: ContourSpec, mu: np.ndarray, gap: float, lam: np.ndarray | None = None) -> None:
    if contour.nodes < 64 or contour.nodes < 16 * math.ceil(contour.radius / gap):
        raise ContourError(f"{contour.nodes} nodes are too few for radius {contour.radius:g} and gap {gap:g}")
    for name, vals in (("mu", mu), ("lambda", lam)):
        if vals is None:
            continue
        dist = np.min(np.abs(np.abs(np.asarray(vals) - contour.center) - contour.radius))
        if dist < gap / 4:
            raise ContourError(
                f"circle of radius {contour.radius:g} passes within {dist:.3g} of a {name} value (gap/4 = {gap / 4:.3g})"
            )


def count_inside(contour: ContourSpec, values: np.ndarray) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(values) - contour.center) < contour.radius))


@dataclass(frozen=True)
class PoleCluster:
    value: float
    indices: tuple[int, ...]  # 0-based positions in the ordered basis
    radius: float


def cluster_poles(mu: np.ndarray, cluster_tol: float | None = None) -> list[PoleCluster]:
    mu = np.asarray(mu, dtype=float)
    if cluster_tol is None:
        cluster_tol = 1e-9 * float(np.max(np.abs(mu)))
    groups: list[list[int]] = [[0]]
    for i in range(1, len(mu)):
        if mu[i] - mu[groups[-1][0]] <= cluster_tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    values = [float(np.mean(mu[g])) for g in groups]
    clusters = []
    for c, g in enumerate(groups):
        neighbours = []
        if c > 0:
            neighbours.append(values[c] - values[c - 1])
        if c + 1 < len(groups):
            neighbours.append(values[c + 1] - values[c])
        radius = 0.5 * min(neighbours) if neighbours else max(1.0, abs(values[c]))
        clusters.append(PoleCluster(values[c], tuple(g), radius))
    return clusters


def cluster_of(clusters: list[PoleCluster], index: int) -> PoleCluster:
    for c in clusters:
        if index in c.indices:
            return c
    raise KeyError(index)


def _pole_distances(system: GalerkinSystem, lam) -> np.ndarray:
    return np.abs(system.mu[None, :] - np.atleast_1d(lam)[:, None])


def _guard_poles(system: GalerkinSystem, lam) -> None:
    tol = 1e-8 * float(np.max(np.abs(system.mu)))
    dist = _pole_distances(system, lam)
    if np.min(dist) < tol:
        node, q = np.unravel_index(np.argmin(dist), dist.shape)
        raise ContourError(f"lambda={np.atleast_1d(lam)[node]} is within {tol:.2e} of pole mu_{q + 1}={system.mu[q]}")


def trace_power(system: GalerkinSystem, lam: complex, s: int) -> complex:
    """tr((Q R0(lam))^s)."""
    if s < 1:
        raise ValueError("s must be >= 1")
    _guard_poles(system, lam)
    d = 1.0 / (system.mu - lam)
    if system.N <= DENSE_LIMIT:
        X = system.Qmat * d[None, :]
        P = X
        for _ in range(s - 1):
            P = P @ X
        return complex(np.trace(P))
    X = sp.csr_matrix(system.Qsparse.multiply(d[None, :]))
    P = X
    for _ in range(s - 1):
        P = P @ X
    return complex(P.diagonal().sum())


def dense_trace_table(
    system: GalerkinSystem,
    lams: np.ndarray,
    s_max: int,
    spectrum: SpectrumResult | None = None,
    remainder_power: int | None = None,
) -> dict[str, np.ndarray]:
    """Explicit per-node traces for small systems.

    Returns ``X``: tr(X^s) and ``R0X``: tr(R0 X^s) with shape (s_max, nodes),
    and ``RX``: tr(R X^remainder_power) when a spectrum is supplied.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    _guard_poles(system, lams)
    N = system.N
    out = {"X": np.empty((s_max, len(lams)), complex), "R0X": np.empty((s_max, len(lams)), complex)}
    if remainder_power is not None:
        out["RX"] = np.empty(len(lams), complex)
    # tr(X^(a+b)) = sum(X^a * (X^b)^T), so only powers up to half the order are formed
    half = (max(s_max, remainder_power or 0) + 1) // 2
    chunk = max(1, CHUNK_ENTRIES // max(N * N * (half + 1), 1))
    for c0 in range(0, len(lams), chunk):
        sl = slice(c0, c0 + chunk)
        lam = lams[sl]
        D = 1.0 / (system.mu[None, :] - lam[:, None])
        X = system.Qmat[None, :, :] * D[:, None, :]
        pw = [None, X]
        for _ in range(2, half + 1):
            pw.append(pw[-1] @ X)
        for s in range(1, s_max + 1):
            lo, hi = s // 2, s - s // 2
            if lo == 0:
                diag = np.einsum("nii->ni", pw[hi])
                out["X"][s - 1, sl] = diag.sum(axis=1)
                out["R0X"][s - 1, sl] = (D * diag).sum(axis=1)
            else:
                prod = pw[lo] * pw[hi].transpose(0, 2, 1)
                out["X"][s - 1, sl] = prod.sum(axis=(1, 2))
                out["R0X"][s - 1, sl] = np.einsum("ni,nij->n", D, prod)
        if remainder_power is not None:
            lo, hi = remainder_power // 2, remainder_power - remainder_power // 2
            V, w = spectrum.vectors, spectrum.values
            Rd = 1.0 / (w[None, :] - lam[:, None])
            # tr(R X^lo X^hi) with R = V diag(Rd) V^T
            right = pw[hi] @ V
            left = V.T @ pw[lo] if lo else np.broadcast_to(V.T, right.shape[:1] + V.T.shape)
            out["RX"][sl] = np.einsum("na,nak,nka->n", Rd, left, right, optimize=True)
    return out


class CouplingRing:
    """Generating functions in the coupling eps for L0 + eps Q.

    The eigenvalues of diag(mu) + eps Q on the ring |eps| = rho give, for any
    lam, tr(R0 - R(eps)) = sum_s (-1)^(s+1) eps^s tr(R0 X^s) and (with
    eigenvectors) tr(Q R(eps)) = sum_s (-eps)^s tr(X^(s+1)).  A discrete
    Fourier transform over the ring extracts all trace powers at once, which
    keeps large systems tractable on long contours.
    """

    def __init__(self, system: GalerkinSystem, rho: float, points: int = RING_POINTS, vectors: bool = False):
        self.system = system
        self.rho = float(rho)
        self.points = int(points)
        self.vectors = vectors
        self.eps = self.rho * np.exp(2j * np.pi * np.arange(self.points) / self.points)
        N = system.N
        self.values = np.empty((self.points, N), complex)
        self.qweights = np.empty((self.points, N), complex) if vectors else None
        base = np.diag(system.mu)
        half = self.points // 2
        for k in range(half + 1):
            M = base + self.eps[k] * system.Qmat
            if vectors:
                w, W = np.linalg.eig(M)
                num = np.einsum("ia,ij,ja->a", W, system.Qmat, W, optimize=True)
                self.qweights[k] = num / np.einsum("ia,ia->a", W, W)
            else:
                w = np.linalg.eigvals(M)
            self.values[k] = w
        for k in range(half + 1, self.points):
            self.values[k] = np.conj(self.values[self.points - k])
            if vectors:
                self.qweights[k] = np.conj(self.qweights[self.points - k])

    @property
    def s_max(self) -> int:
        return self.points // 2 - 1

    def _coefficients(self, samples: np.ndarray) -> np.ndarray:
        coef = np.fft.fft(samples, axis=0) / self.points
        return coef / (self.rho ** np.arange(self.points))[:, None]

    def trace_table(self, lams: np.ndarray, s_max: int, theorem1: bool = False) -> dict[str, np.ndarray]:
        if s_max > self.s_max:
            raise NumericalFailure(f"ring with {self.points} points resolves s <= {self.s_max}, asked for {s_max}")
        if theorem1 and not self.vectors:
            raise NumericalFailure("trace-power form needs a ring built with eigenvectors")
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        mu = self.system.mu
        out = {
            "R0X": np.empty((s_max, len(lams)), complex),
            "tail": np.empty((self.points, len(lams)), complex),
            "noise": np.empty((s_max, len(lams))),
        }
        if theorem1:
            out["X"] = np.empty((s_max, len(lams)), complex)
        chunk = max(1, CHUNK_ENTRIES // (self.points * len(mu)))
        signs = (-1.0) ** (np.arange(1, s_max + 1) + 1)
        for c0 in range(0, len(lams), chunk):
            lam = lams[c0 : c0 + chunk]
            d0 = 1.0 / (mu[:, None] - lam[None, :])
            inv0 = d0.sum(axis=0)
            # eigenvalue round-off eps * max|mu| propagates through every 1/(lambda_i - lam)
            out["noise"][:, c0 : c0 + chunk] = (
                RING_NOISE * np.finfo(float).eps * np.max(np.abs(mu)) * (np.abs(d0) ** 2).sum(axis=0)[None, :]
            ) / (self.rho ** np.arange(1, s_max + 1))[:, None]
            inv = 1.0 / (self.values[:, :, None] - lam[None, None, :])
            G = inv0[None, :] - inv.sum(axis=1)
            coef = self._coefficients(G)
            out["R0X"][:, c0 : c0 + chunk] = signs[:, None] * coef[1 : s_max + 1]
            out["tail"][:, c0 : c0 + chunk] = coef
            if theorem1:
                H = np.einsum("kn,kni->ki", self.qweights, inv)
                hc = self._coefficients(H)
                out["X"][:, c0 : c0 + chunk] = signs[:, None] * hc[:s_max]
        return out


def ring_radius_limit(system: GalerkinSystem, contour: ContourSpec) -> float:
    """Largest coupling radius for which no eigenvalue can reach the contour."""
    dist = float(np.min(np.abs(np.abs(system.mu - contour.center) - contour.radius)))
    if system.qnorm2 == 0.0:
        return math.inf
    return dist / system.qnorm2


def coupling_ring(
    system: GalerkinSystem, contours: list[ContourSpec], vectors: bool = False, points: int = RING_POINTS
) -> CouplingRing:
    """Cached ring whose radius is analytic for every contour given."""
    limit = min(ring_radius_limit(system, c) for c in contours)
    for key, ring in system.cache.items():
        if key[0] == "ring" and ring.rho < limit and ring.points >= points and (ring.vectors or not vectors):
            return ring
    rho = min(RING_RADIUS_MAX, 0.9 * limit)
    ring = CouplingRing(system, rho, points, vectors)
    system.cache[("ring", rho, points, vectors)] = ring
    return ring


def _use_dense(system: GalerkinSystem, backend: str) -> bool:
    if backend == "auto":
        return system.N <= DENSE_LIMIT
    if backend not in ("dense", "ring"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend == "dense"


def _finish(value: complex, scale: float, rtol: float, what: str, noise: float = 0.0) -> float:
    if abs(value.imag) > rtol * max(scale, abs(value.real), 1e-300) + noise:
        raise NumericalFailure(f"{what}: imaginary part {value.imag:.3e} exceeds tolerance (scale {scale:.3e})")
    return value.real


def contour_moments(
    system: GalerkinSystem,
    contour: ContourSpec,
    s_max: int,
    form: str = "resolvent",
    backend: str = "auto",
    ring: CouplingRing | None = None,
    imag_rtol: float = 1e-8,
) -> np.ndarray:
    """D_ps for s = 1..s_max on one circle; index 0 holds s = 1."""
    if form not in ("resolvent", "theorem1"):
        raise ValueError(f"unknown form {form!r}")
    lam = contour.points()
    if _use_dense(system, backend):
        table = dense_trace_table(system, lam, s_max)
    else:
        if ring is None:
            ring = coupling_ring(system, [contour], vectors=form == "theorem1")
        table = ring.trace_table(lam, s_max, theorem1=form == "theorem1")
    out = np.empty(s_max)
    for s in range(1, s_max + 1):
        noise = 0.0
        if "noise" in table:
            weight = np.abs(lam) ** (2 if form == "resolvent" else 1)
            noise = contour.integrate(weight * table["noise"][s - 1], lam)[1]
        if form == "resolvent":
            val, scale = contour.integrate(lam**2 * table["R0X"][s - 1], lam)
            val *= (-1) ** (s + 1)
        else:
            val, scale = contour.integrate(lam * table["X"][s - 1], lam)
            val *= 2.0 * (-1) ** s / s
            scale *= 2.0 / s
            noise *= 2.0 / s
        out[s - 1] = _finish(val, scale, imag_rtol, f"D_p{s} ({form})", noise)
    return out


def contour_D_ps(
    system: GalerkinSystem, contour: ContourSpec, s: int, form: str = "resolvent", backend: str = "auto", ring=None
) -> float:
    return float(contour_moments(system, contour, s, form, backend, ring)[s - 1])


def contour_second_moment(
    system: GalerkinSystem,
    spectrum: SpectrumResult,
    contour: ContourSpec,
    shifts: np.ndarray | None = None,
    imag_rtol: float = 1e-8,
) -> float:
    """-(1/2 pi i) * contour integral of lam^2 tr(R - R0)."""
    n_mu = count_inside(contour, system.mu)
    n_lam = count_inside(contour, spectrum.values)
    if n_mu != n_lam:
        raise ContourError(f"contour encloses {n_mu} unperturbed but {n_lam} perturbed eigenvalues")
    if shifts is None:
        shifts = refined_shifts(spectrum, system.mu, system.Qmat)
    lam = contour.points()
    mu = system.mu
    total = np.zeros(len(lam), complex)
    chunk = max(1, CHUNK_ENTRIES // len(mu))
    for c0 in range(0, len(lam), chunk):
        l = lam[c0 : c0 + chunk]
        num = -shifts[:, None]
        den = (mu[:, None] + shifts[:, None] - l[None, :]) * (mu[:, None] - l[None, :])
        total[c0 : c0 + chunk] = (num / den).sum(axis=0)
    val, scale = contour.integrate(lam**2 * total, lam)
    return _finish(-val, scale, imag_rtol, "second moment")


def perturbation_coefficients(system: GalerkinSystem, qs, order: int, chunk: int = 128) -> np.ndarray:
    """Taylor coefficients of lambda_q(eps) for L0 + eps Q, nondegenerate poles.

    Row n holds the n-th Rayleigh-Schroedinger coefficient (row 0 is mu_q).
    """
    qs = np.asarray(qs, dtype=int)
    mu = system.mu
    N = system.N
    Qs = system.Qsparse
    E = np.zeros((order + 1, len(qs)))
    E[0] = mu[qs]
    for c0 in range(0, len(qs), chunk):
        cols = qs[c0 : c0 + chunk]
        idx = np.arange(len(cols))
        with np.errstate(divide="ignore"):
            Rp = 1.0 / (mu[cols][None, :] - mu[:, None])
        Rp[cols, idx] = 0.0
        if not np.all(np.isfinite(Rp)):
            raise NumericalFailure("perturbation series requested at a degenerate pole")
        psi = [np.zeros((N, len(cols)))]
        psi[0][cols, idx] = 1.0
        for n in range(1, order + 1):
            vp = np.asarray(Qs @ psi[n - 1])
            E[n, c0 : c0 + chunk] = vp[cols, idx]
            rhs = vp
            for k in range(1, n + 1):
                rhs = rhs - E[k, c0 : c0 + chunk][None, :] * psi[n - k]
            psi.append(Rp * rhs)
    return E


def square_coefficients(E: np.ndarray) -> np.ndarray:
    """Taylor coefficients of lambda(eps)^2 from those of lambda(eps)."""
    order = E.shape[0] - 1
    out = np.zeros_like(E)
    for s in range(order + 1):
        out[s] = np.einsum("an,an->n", E[: s + 1], E[s::-1])
    return out


def residue_from_moment(moment: np.ndarray, s) -> np.ndarray:
    """Res tr(lam X^s) from the s-th coefficient of lambda^2 at the same pole."""
    return moment * s * (-1.0) ** s / 2.0


def residue_series(system: GalerkinSystem, qs, s_max: int) -> np.ndarray:
    """Residues Res_{mu_q} tr(lam X^s), s = 0..s_max (row 0 unused), singleton poles."""
    L2 = square_coefficients(perturbation_coefficients(system, qs, s_max))
    s = np.arange(s_max + 1)[:, None]
    out = residue_from_moment(L2, s)
    out[0] = 0.0
    return out


def residue_closed_form(system: GalerkinSystem, q: int) -> float:
    """Second-order residue at a simple pole mu_q (0-based q)."""
    mu = system.mu
    row = system.Qmat[q]
    mask = np.arange(system.N) != q
    return float(row[q] ** 2 - 2.0 * mu[q] * np.sum(row[mask] ** 2 / (mu[mask] - mu[q])))


def _quadrature_traces(system: GalerkinSystem, lam: np.ndarray, s: int) -> np.ndarray:
    if s == 1:
        return (np.diag(system.Qmat)[None, :] / (system.mu[None, :] - lam[:, None])).sum(axis=1)
    if s == 2:
        D = 1.0 / (system.mu[:, None] - lam[None, :])
        Q2 = system.Qsparse.multiply(system.Qsparse)
        return np.einsum("in,in->n", D, np.asarray(Q2 @ D))
    if system.N <= DENSE_LIMIT:
        return dense_trace_table(system, lam, s)["X"][s - 1]
    return np.array([trace_power(system, l, s) for l in lam])


def residue_quadrature(system: GalerkinSystem, cluster: PoleCluster, s: int, nodes: int = 64, imag_rtol: float = 1e-9):
    contour = ContourSpec(cluster.value, cluster.radius / 2.0, nodes)
    lam = contour.points()
    val, scale = contour.integrate(lam * _quadrature_traces(system, lam, s), lam)
    return _finish(val, scale, imag_rtol, f"residue s={s} at {cluster.value:g}")


def residue_at_pole(system: GalerkinSystem, cluster: PoleCluster, s: int, method: str = "auto") -> float:
    """Res_{lam = cluster} tr(lam (Q R0)^s).

    ``auto`` uses the second-order closed form for simple poles at s = 2 and
    contour quadrature otherwise; ``series`` reads the residue off the
    perturbation series (simple poles only).
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if cluster.radius < 1e-10 * float(np.max(np.abs(system.mu))):
        raise NumericalFailure(f"degenerate gap around pole {cluster.value:g}")
    single = len(cluster.indices) == 1
    if method == "auto":
        method = "closed" if single and s == 2 else "quadrature"
    if method == "closed":
        if not single or s != 2:
            raise ValueError("closed form covers simple poles at s = 2 only")
        return residue_closed_form(system, cluster.indices[0])
    if method == "series":
        if not single:
            raise ValueError("perturbation series covers simple poles only")
        return float(residue_series(system, [cluster.indices[0]], s)[s, 0])
    if method == "quadrature":
        return residue_quadrature(system, cluster, s)
    raise ValueError(f"unknown method {method!r}")


def residue_table(system: GalerkinSystem, n: int, s_max: int, clusters: list[PoleCluster] | None = None) -> np.ndarray:
    """Per-state residues for the first n states, s = 0..s_max (row 0 unused).

    Simple poles use the perturbation series, which yields every order from
    one sweep; degenerate clusters get their quadrature residue split in equal shares
    over their members; n must not split a cluster.
    """
    if clusters is None:
        clusters = cluster_poles(system.mu)
    out = np.zeros((s_max + 1, n))
    singles, multi = [], []
    for c in clusters:
        if c.indices[0] >= n:
            break
        if c.indices[-1] >= n:
            raise ContourError(f"cut at {n} splits the degenerate cluster at {c.value:g}")
        (singles if len(c.indices) == 1 else multi).append(c)
    if singles:
        qs = [c.indices[0] for c in singles]
        out[:, qs] = residue_series(system, qs, s_max)
    for c in multi:
        for s in range(1, s_max + 1):
            share = residue_quadrature(system, c, s) / len(c.indices)
            out[s, list(c.indices)] = share
    return out


def residue_D_ps(residues: np.ndarray, n: int) -> np.ndarray:
    """D_ps = 2 (-1)^s / s * sum_{q <= n} Res_q, s = 1..s_max (index 0 holds s = 1)."""
    s = np.arange(1, residues.shape[0])
    return 2.0 * (-1.0) ** s / s * residues[1:, :n].sum(axis=1)


def remainder_estimate(
    system: GalerkinSystem,
    spectrum: SpectrumResult,
    contour: ContourSpec | None,
    m: int,
    method: str = "auto",
    ring: CouplingRing | None = None,
    residues: np.ndarray | None = None,
    n: int | None = None,
) -> float:
    """D_p^(m) = ((-1)^m / 2 pi i) * contour integral of lam^2 tr(R X^(m+1)).

    ``dense`` builds R from the eigendecomposition at every node; ``ring``
    sums the convergent Neumann tail sum_{t>=0} (-1)^t tr(R0 X^(m+1+t)) from
    the coupling ring; ``residue`` adds the per-pole tails of the same series
    (needs ``residues`` with orders beyond m, from :func:`residue_table`, and
    either the contour or the enclosed count ``n``).
    """
    if contour is not None:
        n = count_inside(contour, system.mu)
        if count_inside(contour, spectrum.values) != n:
            raise ContourError("perturbed and unperturbed counts differ inside the contour")
    elif method != "residue":
        raise ValueError(f"method {method!r} needs a contour")
    if method == "auto":
        method = "dense" if system.N <= DENSE_LIMIT else "ring"
    if method == "dense":
        lam = contour.points()
        table = dense_trace_table(system, lam, 1, spectrum=spectrum, remainder_power=m + 1)
        val, scale = contour.integrate(lam**2 * table["RX"], lam)
        # a remainder below eps * b is invisible next to the ledger sums it corrects
        return _finish((-1) ** m * val, scale, 1e-8, "remainder", np.finfo(float).eps * (abs(contour.center) + contour.radius))
    if method == "ring":
        if ring is None:
            ring = coupling_ring(system, [contour])
        if ring.rho <= 1.0:
            raise NumericalFailure(f"coupling ring radius {ring.rho:.3f} does not reach eps = 1")
        lam = contour.points()
        table = ring.trace_table(lam, 1)
        tail = table["tail"][m + 1 : ring.points // 2].sum(axis=0)
        val, scale = contour.integrate(lam**2 * tail, lam)
        growth = np.sum(ring.rho ** -np.arange(m, ring.points // 2 - 1, dtype=float))
        noise = contour.integrate(np.abs(lam) ** 2 * table["noise"][0] * growth, lam)[1]
        return _finish(val, scale, 1e-8, "remainder", noise)
    if method == "residue":
        if residues is None or residues.shape[0] <= m + 1:
            raise ValueError("residue method needs residues of orders beyond m")
        D = residue_D_ps(residues, n)
        return float(D[m:].sum())
    raise ValueError(f"unknown method {method!r}")
