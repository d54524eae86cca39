"""Scenario files: bracketed blocks of ``key = value`` lines.

    [model]
    r = 1
    a = 1
    alpha = 3
    T = 2
    K = 512

    [potential]
    C0 = 0.2 0.05; 0.05 -0.1     # row-major, rows separated by ';'

    [run]                        # optional block, every key optional
    m = 22
    gap_floor = 1e-3
    safe_fraction = 0.5
    nodes_mult = 4
    output = out
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .model import SpectralModel, validate_scenario

MODEL_KEYS = ("r", "a", "alpha", "T", "K")
RUN_KEYS = ("m", "gap_floor", "safe_fraction", "nodes_mult", "output")
_TERM = re.compile(r"C(\d+)$")


@dataclass(frozen=True)
class RunConfig:
    m: int | None = None
    gap_floor: float | None = None
    safe_fraction: float = 0.5
    nodes_mult: int = 4
    output: str | None = None


@dataclass(frozen=True)
class Scenario:
    model: SpectralModel
    run: RunConfig = field(default_factory=RunConfig)
    source: str | None = None


def _parse_matrix(text: str, T: int, key: str) -> list[list[float]]:
    rows = [row.split() for row in text.split(";") if row.strip()]
    try:
        mat = [[float(v) for v in row] for row in rows]
    except ValueError as exc:
        raise ScenarioError(f"potential {key}: {exc}") from None
    if len(mat) != T or any(len(row) != T for row in mat):
        raise ScenarioError(f"potential {key} must have {T} rows of {T} values")
    return mat


def parse_scenario(text: str, source: str | None = None) -> Scenario:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), comment_prefixes=("#",), default_section="__none__"
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<scenario>")
    except configparser.Error as exc:
        raise ScenarioError(f"unreadable scenario: {exc}") from None

    unknown = set(parser.sections()) - {"model", "potential", "run"}
    if unknown:
        raise ScenarioError(f"unknown block(s): {', '.join(sorted(unknown))}")
    for name in ("model", "potential"):
        if not parser.has_section(name):
            raise ScenarioError(f"missing [{name}] block")

    model = dict(parser["model"])
    extra = set(model) - set(MODEL_KEYS)
    if extra:
        raise ScenarioError(f"unknown model key(s): {', '.join(sorted(extra))}")
    missing = [k for k in MODEL_KEYS if k not in model]
    if missing:
        raise ScenarioError(f"missing model key(s): {', '.join(missing)}")
    try:
        T = int(model["T"])
    except ValueError:
        raise ScenarioError(f"bad model value T={model['T']!r}") from None

    potential = {}
    for key, value in parser["potential"].items():
        match = _TERM.match(key)
        if not match:
            raise ScenarioError(f"unknown potential key {key!r}; expected C<n>")
        potential[int(match.group(1))] = _parse_matrix(value, T, key)

    run = dict(parser["run"]) if parser.has_section("run") else {}
    extra = set(run) - set(RUN_KEYS)
    if extra:
        raise ScenarioError(f"unknown run key(s): {', '.join(sorted(extra))}")
    try:
        config = RunConfig(
            m=int(run["m"]) if "m" in run else None,
            gap_floor=float(run["gap_floor"]) if "gap_floor" in run else None,
            safe_fraction=float(run.get("safe_fraction", 0.5)),
            nodes_mult=int(run.get("nodes_mult", 4)),
            output=run.get("output"),
        )
    except ValueError as exc:
        raise ScenarioError(f"bad run value: {exc}") from None
    if not 0 < config.safe_fraction <= 1:
        raise ScenarioError(f"safe_fraction must lie in (0, 1], got {config.safe_fraction}")
    if config.nodes_mult < 1:
        raise ScenarioError(f"nodes_mult must be >= 1, got {config.nodes_mult}")

    raw = {"model": model, "potential": potential, "run": {"m": config.m}}
    return Scenario(validate_scenario(raw), config, source)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, str(path))


def _fmt(x: float) -> str:
    return repr(float(x))


def format_scenario(model: SpectralModel, run: RunConfig | None = None) -> str:
    lines = ["[model]"]
    lines += [f"r = {model.r}", f"a = {_fmt(model.a)}", f"alpha = {_fmt(model.alpha)}", f"T = {model.T}", f"K = {model.K}"]
    lines += ["", "[potential]"]
    for n, c in model.potential.terms:
        rows = "; ".join(" ".join(_fmt(v) for v in row) for row in np.asarray(c))
        lines.append(f"C{n} = {rows}")
    run = run or RunConfig(m=model.m_override)
    lines += ["", "[run]"]
    if run.m is not None:
        lines.append(f"m = {run.m}")
    if run.gap_floor is not None:
        lines.append(f"gap_floor = {_fmt(run.gap_floor)}")
    lines.append(f"safe_fraction = {_fmt(run.safe_fraction)}")
    lines.append(f"nodes_mult = {run.nodes_mult}")
    if run.output is not None:
        lines.append(f"output = {run.output}")
    return "\n".join(lines) + "\n"
