"""Verification pipeline behind the CLI: one lazily evaluated run per scenario."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import fourier, resolvent, traces
from .eigen import eigh, refined_shifts
from .errors import HypothesisError, NumericalFailure
from .galerkin import build_system
from .model import validate_scenario, weyl_exponent
from .scenario import RunConfig, Scenario

PROBE_N = 64  # size of the truncated system used for the trace-power form probe
RESIDUE_SAMPLES = 50
IBP_K = 64


@dataclass(frozen=True)
class Check:
    name: str
    deviation: float
    tolerance: float
    passed: bool
    detail: str = ""


def _rel(a: float, b: float, floor: float = 0.0) -> float:
    scale = max(abs(a), abs(b), floor)
    return abs(a - b) / scale if scale > 0 else 0.0


class Run:
    """Everything computed for one scenario; each stage is built on first use."""

    def __init__(self, scenario: Scenario, m: int | None = None, nodes_mult: int | None = None):
        model = scenario.model
        if m is not None:
            if m < 2:
                raise ValueError("m must be >= 2")
            model = dataclasses.replace(model, m_override=m)
        self.model = model
        self.config: RunConfig = scenario.run
        self.nodes_mult = nodes_mult if nodes_mult is not None else self.config.nodes_mult

    @cached_property
    def system(self):
        return build_system(self.model)

    @cached_property
    def spectrum(self):
        return eigh(self.system.full_matrix())

    @cached_property
    def shifts(self) -> np.ndarray:
        return refined_shifts(self.spectrum, self.system.mu, self.system.Qmat)

    @cached_property
    def subsequence(self):
        return traces.select_subsequence(
            self.system.mu, self.config.gap_floor, self.config.safe_fraction, lam=self.spectrum.values
        )

    @cached_property
    def ledger(self):
        return traces.build_ledger(self.system, self.spectrum, self.subsequence, self.model.constants.m_star,
                                   nodes_mult=self.nodes_mult)

    @cached_property
    def contours(self):
        return [
            resolvent.make_contour(self.system.mu, c.n, self.nodes_mult, self.spectrum.values)
            for c in self.subsequence.cuts
        ]

    @cached_property
    def rhs_first(self) -> float:
        return traces.rhs_first(self.model)

    @cached_property
    def rhs_second(self) -> float:
        return traces.rhs_second(self.model)

    @cached_property
    def weyl(self) -> dict[str, traces.WeylFit | str]:
        """Fit per series, or the reason the fit was impossible."""
        series = {
            "mu": lambda: traces.full_spectrum(self.model),
            "lambda": lambda: traces.full_spectrum(self.model, self.spectrum.values),
        }
        out = {}
        for name, values in series.items():
            try:
                out[name] = traces.fit_weyl_exponent(values())
            except ValueError as exc:
                out[name] = str(exc)
        return out

    @cached_property
    def constants(self):
        d2 = traces.d2_estimate(self.model, self.system.mu, self.subsequence)
        fit = self.weyl["mu"]
        d1 = fit.d1 if isinstance(fit, traces.WeylFit) else math.nan
        return dataclasses.replace(self.model.constants, d1_estimate=d1, d2_estimate=d2)

    # ------------------------------------------------------------------ checks

    def check_second_moment(self) -> Check:
        worst = 0.0
        for p, contour in enumerate(self.contours):
            value = resolvent.contour_second_moment(self.system, self.spectrum, contour, self.shifts)
            exact = self.ledger.second_moment[p]
            worst = max(worst, abs(value - exact) / (1.0 + abs(exact)))
        return Check("second-moment contour exactness", worst, 1e-8, worst <= 1e-8)

    def check_theorem1(self) -> Check:
        model = self.model
        if self.system.N > PROBE_N:
            model = model.with_K(max(4, PROBE_N // model.T))
        system = build_system(model)
        mu = system.mu
        spec = eigh(system.full_matrix())
        worst = 0.0
        cuts = [n for n in range(1, system.N) if mu[n] - mu[n - 1] > 1e-9 * mu[-1]][:8]
        for n in cuts:
            contour = resolvent.make_contour(mu, n, self.nodes_mult, spec.values)
            a = resolvent.contour_moments(system, contour, 4, "resolvent", "dense")
            b = resolvent.contour_moments(system, contour, 4, "theorem1", "dense")
            floor = 1e-12 * max(np.max(np.abs(a)), 1e-300)
            worst = max(worst, max(_rel(x, y, floor) for x, y in zip(a, b)))
        detail = f"probe K={model.K}, N={system.N}, {len(cuts)} cuts"
        return Check("trace-power form equivalence", worst, 1e-8, worst <= 1e-8, detail)

    def check_residues(self) -> Check:
        n_P = self.ledger.n_P
        clusters = [c for c in resolvent.cluster_poles(self.system.mu) if c.indices[-1] < n_P and len(c.indices) == 1]
        rng = np.random.default_rng(0)
        pick = rng.choice(len(clusters), size=min(RESIDUE_SAMPLES, len(clusters)), replace=False)
        worst = 0.0
        for i in sorted(pick):
            c = clusters[i]
            closed = resolvent.residue_at_pole(self.system, c, 2, "closed")
            quad = resolvent.residue_at_pole(self.system, c, 2, "quadrature")
            worst = max(worst, _rel(closed, quad))
        return Check("residue closed form", worst, 1e-9, worst <= 1e-9, f"{len(pick)} poles")

    def check_closure(self) -> Check:
        m = self.ledger.m
        dense = self.system.N <= resolvent.DENSE_LIMIT
        ring = None
        route = "dense"
        if not dense:
            ring = resolvent.coupling_ring(self.system, self.contours)
            route = "ring" if ring.rho > 1.0 else "residue"
        worst = 0.0
        for p, contour in enumerate(self.contours):
            total = self.ledger.second_moment[p]
            if route == "residue":
                D = resolvent.residue_D_ps(self.ledger.extra["residues"], self.subsequence.cuts[p].n)[:m]
                rem = self.ledger.remainder[p]
            else:
                D = resolvent.contour_moments(self.system, contour, m, backend=route, ring=ring)
                rem = resolvent.remainder_estimate(self.system, self.spectrum, contour, m, route, ring=ring)
            miss = abs(total - D.sum() - rem)
            worst = max(worst, miss / abs(total) if total else miss)
        return Check("expansion closure", worst, 1e-7, worst <= 1e-7, f"{route} route, m={m}")

    def check_reassembly(self) -> Check:
        L = self.ledger
        worst = 0.0
        for p, cut in enumerate(self.subsequence.cuts):
            n = cut.n
            back = L.lhs2[p] + L.corrections[:, :n].sum() + np.sum(2.0 * L.mu[:n] * L.diag_integral[:n])
            worst = max(worst, abs(back - L.second_moment[p]) / (1.0 + abs(L.second_moment[p])))
        return Check("trace ledger reassembly", worst, 1e-8, worst <= 1e-8)

    def check_first_moment_split(self) -> Check:
        L = self.ledger
        worst = max(abs(a - b) / (1.0 + abs(a)) for a, b in zip(L.d_p1, L.d_p1_expansion))
        return Check("first moment split", worst, 1e-7, worst <= 1e-7)

    def _convergence(self, name: str, lhs: np.ndarray, rhs: float, roundoff: np.ndarray) -> list[Check]:
        err = np.abs(lhs - rhs)
        dev = float(err[-1] / (1.0 + abs(rhs)))
        out = [Check(f"{name} convergence", dev, 0.01, dev <= 0.01, f"n_P={self.ledger.n_P}")]
        # once both ends sit at round-off level their order carries no information
        floor = float(roundoff[-1])
        ok = bool(err[-1] < err[0]) or err[-1] <= floor
        detail = f"last vs first cut, round-off floor {floor:.1e}"
        out.append(Check(f"{name} error decrease", float(err[-1]), float(max(err[0], floor)), ok, detail))
        return out

    def check_second_trace(self) -> list[Check]:
        return self._convergence("second trace", self.ledger.lhs2, self.rhs_second, self.ledger.roundoff2)

    def check_first_trace(self) -> list[Check]:
        return self._convergence("first trace", self.ledger.lhs1, self.rhs_first, self.ledger.roundoff1)

    def check_remainder_decay(self) -> Check:
        rem = np.abs(self.ledger.remainder)
        ratio = float(rem[-1] / rem[0]) if rem[0] > 0 else 0.0
        return Check("remainder decay", ratio, 0.1, ratio <= 0.1, f"{self.ledger.remainder_method} route")

    def check_ibp(self) -> Check:
        worst = 0.0
        for h in fourier.profiles(self.model):
            for k in range(min(IBP_K, self.model.K)):
                lhs, rhs = fourier.ibp_identity_check(h, k, self.model.r, "quadrature")
                c_lhs, c_rhs = fourier.ibp_identity_check(h, k, self.model.r, "closed")
                worst = max(worst, abs(lhs - rhs) / (1 + abs(lhs)), abs(lhs - c_lhs) / (1 + abs(lhs)),
                            abs(c_lhs - c_rhs) / (1 + abs(c_lhs)))
        return Check("integration by parts identity", worst, 1e-10, worst <= 1e-10)

    def check_series_bound(self) -> Check:
        try:
            series = fourier.theorem2_series(self.model)
        except NumericalFailure as exc:
            return Check("absolute series bound", math.inf, 1.0, False, str(exc))
        odd = [n for n in self.model.potential.frequencies if n % 2 == 1]
        expected = (max(odd) + 1) // 2 if odd else 0
        ratio = float(series.partial_sums[-1] / series.bound) if series.bound > 0 else 0.0
        ok = ratio <= 1.0 and series.stabilization == expected
        return Check("absolute series bound", ratio, 1.0, ok, f"stabilizes after {series.stabilization} terms")

    def check_endpoint(self) -> list[Check]:
        osc = fourier.oscillatory_sum_limit(self.model)
        weighted = fourier.endpoint_weighted_limit(self.model)
        dev = abs(osc - self.rhs_second) / max(1.0, abs(self.rhs_second))
        dev_w = abs(weighted - osc) / max(1.0, abs(osc))
        return [
            Check("endpoint evaluation", dev, 1e-12, dev <= 1e-12),
            Check("endpoint weights consistency", dev_w, 1e-10, dev_w <= 1e-10),
        ]

    def check_weyl(self) -> list[Check]:
        beta = weyl_exponent(self.model.r, self.model.alpha)
        out = []
        for series in ("mu", "lambda"):
            fit = self.weyl[series]
            if isinstance(fit, str):
                out.append(Check(f"weyl exponent ({series})", math.inf, 0.05, False, fit))
                continue
            dev = abs(fit.slope - beta) / beta
            out.append(Check(f"weyl exponent ({series})", dev, 0.05, dev <= 0.05, f"slope {fit.slope:.6f}"))
        return out

    def check_hypothesis_gate(self) -> Check:
        r = self.model.r
        raw = {
            "model": {"r": r, "a": self.model.a, "alpha": 2 * r / (2 * r - 1), "T": self.model.T, "K": self.model.K},
            "potential": {n: c for n, c in self.model.potential.terms},
        }
        try:
            validate_scenario(raw)
        except HypothesisError:
            return Check("hypothesis gate", 0.0, 0.0, True, "alpha = 2r/(2r-1) rejected")
        return Check("hypothesis gate", 1.0, 0.0, False, "alpha = 2r/(2r-1) accepted")

    def checks(self) -> list[Check]:
        out = [
            self.check_second_moment(),
            self.check_theorem1(),
            self.check_residues(),
            self.check_closure(),
            self.check_reassembly(),
            self.check_first_moment_split(),
            *self.check_second_trace(),
            *self.check_first_trace(),
            self.check_remainder_decay(),
            self.check_ibp(),
            self.check_series_bound(),
            *self.check_endpoint(),
            *self.check_weyl(),
            self.check_hypothesis_gate(),
        ]
        return out

    # ------------------------------------------------------------------ report

    def summary(self) -> dict:
        model = self.model
        return {
            "model": {
                "r": model.r,
                "a": model.a,
                "alpha": model.alpha,
                "T": model.T,
                "K": model.K,
                "potential": {str(n): np.asarray(c).tolist() for n, c in model.potential.terms},
            },
            "constants": dataclasses.asdict(self.constants),
            "rhs_first": self.rhs_first,
            "rhs_second": self.rhs_second,
        }

    def cut_table(self) -> list[dict]:
        L = self.ledger
        return [
            {
                "p": p + 1,
                "n_p": cut.n,
                "b_p": cut.b,
                "gap_p": cut.gap,
                "lhs1_p": float(L.lhs1[p]),
                "lhs2_p": float(L.lhs2[p]),
                "remainder_p": float(L.remainder[p]),
                "error1_p": float(L.lhs1[p] - self.rhs_first),
                "error2_p": float(L.lhs2[p] - self.rhs_second),
            }
            for p, cut in enumerate(self.subsequence.cuts)
        ]

    def report(self, checks: list[Check] | None = None) -> dict:
        checks = self.checks() if checks is None else checks
        return {
            "summary": self.summary(),
            "system": self.system.summary(),
            "cuts": self.cut_table(),
            "weyl": {k: dataclasses.asdict(v) if isinstance(v, traces.WeylFit) else v for k, v in self.weyl.items()},
            "checks": [dataclasses.asdict(c) for c in checks],
            "status": "pass" if all(c.passed for c in checks) else "fail",
        }
