"""First and second regularized traces: cut selection, partial sums, closed-form limits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigen import SpectrumResult, refined_shifts
from .errors import ConsistencyError, ContourError, NumericalFailure
from .galerkin import GalerkinSystem
from .model import SpectralModel, potential_eval, weyl_exponent
from .resolvent import (
    DENSE_LIMIT,
    cluster_poles,
    make_contour,
    remainder_estimate,
    residue_D_ps,
    residue_table,
)

RHS_TOL = 1e-12
ROUNDOFF = 64.0  # safety factor on eps times the summed magnitudes of a partial sum
TAIL_ORDERS = 24  # extra perturbation orders summed for the residue-route remainder


@dataclass(frozen=True)
class Cut:
    n: int  # number of enclosed states
    b: float
    gap: float


@dataclass(frozen=True)
class Subsequence:
    cuts: tuple[Cut, ...]

    @property
    def n_values(self) -> list[int]:
        return [c.n for c in self.cuts]

    def __len__(self) -> int:
        return len(self.cuts)


def select_subsequence(
    mu: np.ndarray,
    gap_floor: float | None = None,
    safe_fraction: float = 0.5,
    lam: np.ndarray | None = None,
    measure: str = "relative",
    windows: list[tuple[int, int]] | None = None,
) -> Subsequence:
    """One cut per window [2^i, 2^(i+1) - 1] at the largest gap.

    ``measure`` ranks candidates by relative gap (mu[n+1] - mu[n]) / mu[n+1]
    or by the absolute gap; ties go to the largest n.  Candidates must clear
    ``gap_floor`` (default 1e-6 mu_N), keep mu[n+1] <= safe_fraction * mu_N
    and, when ``lam`` is given, keep the circle gap/4 away from every lam.
    Explicit inclusive ``windows`` of n replace the geometric ones.
    """
    mu = np.asarray(mu, dtype=float)
    N = len(mu)
    if windows is None and N < 8:
        raise ContourError(f"need at least 8 eigenvalues to select cuts, got {N}")
    if np.any(np.diff(mu) < 0):
        raise ValueError("mu must be sorted ascending")
    if measure not in ("relative", "absolute"):
        raise ValueError(f"unknown measure {measure!r}")
    if gap_floor is None:
        gap_floor = 1e-6 * abs(mu[-1])
    n = np.arange(1, N)
    gaps = mu[1:] - mu[:-1]
    b = 0.5 * (mu[1:] + mu[:-1])
    ok = (gaps >= gap_floor) & (gaps > 0) & (mu[1:] <= safe_fraction * mu[-1])
    if lam is not None:
        lam = np.asarray(lam, dtype=float)
        dist = np.min(np.abs(np.abs(lam)[None, :] - b[:, None]), axis=1)
        ok &= dist >= gaps / 4
    score = gaps / np.abs(mu[1:]) if measure == "relative" else gaps
    if windows is None:
        windows = []
        lo = 1
        while lo < N:
            windows.append((lo, min(2 * lo - 1, N - 1)))
            lo *= 2
    cuts = []
    for lo, hi in windows:
        if not 1 <= lo <= hi <= N - 1:
            raise ValueError(f"window ({lo}, {hi}) outside 1..{N - 1}")
        idx = np.arange(lo - 1, hi)[ok[lo - 1 : hi]]
        if len(idx):
            best = np.max(score[idx])
            tied = idx[score[idx] >= best * (1 - 1e-12)]
            i = int(tied[-1])
            cuts.append(Cut(int(n[i]), float(b[i]), float(gaps[i])))
    if not cuts:
        raise ContourError("no admissible cut: every gap is below the floor or above the safe fraction")
    return Subsequence(tuple(cuts))


def diag_integrals(system: GalerkinSystem) -> np.ndarray:
    """(1/pi) * integral over [0, pi] of (Q(x) phi_j, phi_j) per basis state: only n = 0 survives."""
    C0 = system.model.potential.coefficient(0)
    return np.diag(C0)[system.j - 1].astype(float)


@dataclass
class TraceLedger:
    """Per-state and per-cut bookkeeping of both trace formulas.

    ``corrections[s - 2, q]`` is 2 (-1)^s / s * Res_q for s = 2..m.
    """

    subsequence: Subsequence
    m: int
    lam: np.ndarray
    mu: np.ndarray
    k: np.ndarray
    j: np.ndarray
    shifts: np.ndarray
    diag_integral: np.ndarray
    corrections: np.ndarray
    lhs1: np.ndarray
    lhs2: np.ndarray
    second_moment: np.ndarray
    d_p1: np.ndarray
    d_p1_expansion: np.ndarray
    remainder: np.ndarray
    remainder_method: str
    roundoff1: np.ndarray
    roundoff2: np.ndarray
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def n_P(self) -> int:
        return self.subsequence.cuts[-1].n


def _remainder_method(system: GalerkinSystem, method: str) -> str:
    # per-pole series tails are cheap at any N; dense and ring stay available as cross-checks
    return "residue" if method == "auto" else method


def build_ledger(
    system: GalerkinSystem,
    spectrum: SpectrumResult,
    subsequence: Subsequence,
    m: int | None = None,
    remainder_method: str = "auto",
    nodes_mult: int = 4,
) -> TraceLedger:
    if m is None:
        m = system.model.constants.m_star
    if m < 2:
        raise ValueError("m must be >= 2")
    n_P = subsequence.cuts[-1].n
    mu = system.mu
    shifts = refined_shifts(spectrum, mu, system.Qmat)
    method = _remainder_method(system, remainder_method)
    orders = m + TAIL_ORDERS if method == "residue" else m
    clusters = cluster_poles(mu)
    res = residue_table(system, n_P, orders, clusters)
    s = np.arange(2, m + 1)[:, None]
    corrections = 2.0 * (-1.0) ** s / s * res[2 : m + 1]
    diag = diag_integrals(system)
    qk = system.k[:n_P]
    qj = system.j[:n_P]
    C = system.model.potential
    osc = np.array([C.coefficient(2 * int(k) + 1)[j - 1, j - 1] for k, j in zip(qk, qj)])

    P = len(subsequence)
    out = {name: np.empty(P) for name in ("lhs1", "lhs2", "second", "dp1", "dp1x", "rem", "rnd1", "rnd2")}
    sq = shifts * (2.0 * mu + shifts)
    ulp = ROUNDOFF * np.finfo(float).eps
    qnorm = system.qnorm2
    for p, cut in enumerate(subsequence.cuts):
        n = cut.n
        out["lhs1"][p] = np.sum(shifts[:n] - diag[:n])
        out["second"][p] = np.sum(sq[:n])
        out["lhs2"][p] = np.sum(sq[:n] - corrections[:, :n].sum(axis=0) - 2.0 * mu[:n] * diag[:n])
        # each refined shift carries an absolute error of order eps * ||Q||
        out["rnd1"][p] = ulp * np.sum(np.abs(shifts[:n]) + qnorm + np.abs(diag[:n]))
        out["rnd2"][p] = ulp * np.sum(
            np.abs(sq[:n]) + 2.0 * mu[:n] * qnorm + np.abs(corrections[:, :n]).sum(axis=0) + np.abs(2.0 * mu[:n] * diag[:n])
        )
        out["dp1"][p] = residue_D_ps(res[:2], n)[0]
        out["dp1x"][p] = np.sum(2.0 * mu[:n] * (diag[:n] + 0.5 * osc[:n]))
        if method == "residue":
            out["rem"][p] = remainder_estimate(system, spectrum, None, m, "residue", residues=res, n=n)
        else:
            contour = make_contour(mu, n, nodes_mult, spectrum.values)
            out["rem"][p] = remainder_estimate(system, spectrum, contour, m, method)
    return TraceLedger(
        subsequence=subsequence,
        m=m,
        lam=spectrum.values[:n_P].copy(),
        mu=mu[:n_P].copy(),
        k=qk.copy(),
        j=qj.copy(),
        shifts=shifts[:n_P].copy(),
        diag_integral=diag[:n_P].copy(),
        corrections=corrections,
        lhs1=out["lhs1"],
        lhs2=out["lhs2"],
        second_moment=out["second"],
        d_p1=out["dp1"],
        d_p1_expansion=out["dp1x"],
        remainder=out["rem"],
        remainder_method=method,
        roundoff1=out["rnd1"],
        roundoff2=out["rnd2"],
        extra={"residues": res},
    )


def _cut_index(ledger: TraceLedger, p: int) -> int:
    if not 0 <= p < len(ledger.subsequence):
        raise IndexError(f"cut index {p} outside 0..{len(ledger.subsequence) - 1}")
    return ledger.subsequence.cuts[p].n


def first_trace_partial(ledger: TraceLedger, p: int) -> float:
    """Sum over q <= n_p of lambda_q - mu_q - diag_integral_q (p is 0-based)."""
    n = _cut_index(ledger, p)
    return float(np.sum(ledger.shifts[:n] - ledger.diag_integral[:n]))


def second_trace_partial(ledger: TraceLedger, p: int, m: int | None = None) -> float:
    """Second-trace left-hand side at cut p with corrections through order m."""
    n = _cut_index(ledger, p)
    m = ledger.m if m is None else m
    if m > ledger.m:
        raise NumericalFailure(f"ledger holds residue corrections through s={ledger.m}, asked for {m}")
    d = ledger.shifts[:n]
    mu = ledger.mu[:n]
    corr = ledger.corrections[: m - 1, :n].sum(axis=0)
    return float(np.sum(d * (2.0 * mu + d) - corr - 2.0 * mu * ledger.diag_integral[:n]))


def _odd_terms(model: SpectralModel):
    return [(n, c) for n, c in model.potential.terms if n % 2 == 1]


def rhs_first(model: SpectralModel) -> float:
    Q = model.potential
    endpoint = 0.25 * (np.trace(potential_eval(Q, 0.0)) - np.trace(potential_eval(Q, math.pi)))
    closed = 0.5 * sum(float(np.trace(c)) for _, c in _odd_terms(model))
    _agree(endpoint, closed, "first-trace right-hand side")
    return float(closed)


def rhs_second(model: SpectralModel) -> float:
    Q = model.potential
    r = model.r
    g = model.gammas()

    def tr_aq(x):
        return float(np.dot(g, np.diag(potential_eval(Q, x))))

    endpoint = (-1) ** r * 2.0 ** (-1 - 2 * r) * (
        np.trace(potential_eval(Q, 0.0, 2 * r)) - np.trace(potential_eval(Q, math.pi, 2 * r))
    ) + 0.5 * (tr_aq(0.0) - tr_aq(math.pi))
    closed = math.fsum(
        w * c[j, j]
        for n, c in _odd_terms(model)
        for j, w in enumerate(2.0 ** (-2 * r) * float(n) ** (2 * r) + g)
    )
    _agree(endpoint, closed, "second-trace right-hand side")
    return float(closed)


def _agree(x: float, y: float, what: str) -> None:
    if abs(x - y) > RHS_TOL * max(1.0, abs(x), abs(y)):
        raise ConsistencyError(f"{what}: endpoint route {x!r} and closed form {y!r} disagree")


def full_spectrum(model: SpectralModel, perturbed: np.ndarray | None = None) -> np.ndarray:
    """Sorted eigenvalues of the untruncated lattice below (K + 1/2)^(2r).

    Components j > T are untouched by Q and keep their unperturbed values;
    when ``perturbed`` is given it replaces the coupled block rank-wise.
    """
    mu_cut = (model.K + 0.5) ** (2 * model.r)
    j_max = int(math.floor((mu_cut / model.a) ** (1.0 / model.alpha))) + 1
    k_max = int(math.floor(mu_cut ** (1.0 / (2 * model.r))))
    k = np.arange(k_max + 1)[:, None]
    j = np.arange(1, j_max + 1)[None, :]
    lattice = (k + 0.5) ** (2 * model.r) + model.a * j.astype(float) ** model.alpha
    keep = lattice <= mu_cut
    if perturbed is not None:
        coupled = keep & (j <= model.T) & (k < model.K)
        n_in = int(np.count_nonzero(coupled))
        values = np.concatenate([lattice[keep & ~coupled], np.sort(perturbed)[:n_in]])
    else:
        values = lattice[keep]
    return np.sort(values)


@dataclass(frozen=True)
class WeylFit:
    slope: float
    d1: float
    lo: int
    hi: int


def fit_weyl_exponent(values: np.ndarray) -> WeylFit:
    """Least-squares slope of log(value) against log(rank) over ranks [N/4, N/2]."""
    values = np.asarray(values, dtype=float)
    N = len(values)
    if N < 64:
        raise ValueError(f"need at least 64 values for a Weyl fit, got {N}")
    lo, hi = N // 4, N // 2
    window = values[lo - 1 : hi]
    if np.any(window <= 0):
        raise ValueError("nonpositive eigenvalues in the fit window")
    ranks = np.arange(lo, hi + 1, dtype=float)
    slope, intercept = np.polyfit(np.log(ranks), np.log(window), 1)
    return WeylFit(float(slope), float(math.exp(intercept)), lo, hi)


def d2_estimate(model: SpectralModel, mu: np.ndarray, subsequence: Subsequence) -> float:
    """Largest d2 for which the gap condition holds at every cut, over the full lattice."""
    beta = weyl_exponent(model.r, model.alpha)
    lattice = full_spectrum(model)
    ranks = np.arange(1, len(lattice) + 1, dtype=float)
    best = math.inf
    for cut in subsequence.cuts:
        n_full = int(np.searchsorted(lattice, mu[cut.n - 1], side="right"))
        if n_full >= len(lattice):
            continue
        ratio = (lattice[n_full:] - lattice[n_full - 1]) / (ranks[n_full:] ** beta - n_full**beta)
        best = min(best, float(np.min(ratio)))
    return best
