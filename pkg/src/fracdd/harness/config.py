"""Scenario configuration read from INI files.

Sections and keys (all optional, defaults reproduce the driven test case)::

    [domain]   Lx Ly fracture_x nx1 nx2 ny
               segments         side:lo:hi:kind:value entries separated by ';'
               fracture_bottom fracture_top endpoint (half_cell | full_cell)
    [physics]  s1 s2 K1 K2 s_gamma Kf_delta delta q1 q2 p0 p0_gamma
    [time]     T M1 M2 M_gamma
    [method]   method (monolithic | gtp_none | gtp_local | gtp_nn | gto_jacobi | gto_gmres)
               scenario (driven | error_to_zero)
               alpha (optimized | <number>) alpha_lo alpha_hi n_eta n_omega
               tol max_iters restart damping
               initial_guess (zero | random) random_distribution (uniform01 | uniform_pm1 | normal)
               seed stop_metric (max | p | u) error_stride
    [output]   dir snapshot_times reference write_fields

Time values such as ``snapshot_times`` accept fractions of ``T``
written ``T/300``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from typing import Optional

from ..geometry import BoundarySegment, DomainSpec

METHODS = ("monolithic", "gtp_none", "gtp_local", "gtp_nn", "gto_jacobi", "gto_gmres")
SCENARIOS = ("driven", "error_to_zero")
DISTRIBUTIONS = ("uniform01", "uniform_pm1", "normal")
SECTIONS = ("domain", "physics", "time", "method", "output")

DEFAULT_SEGMENTS = "left:0:0.2:dirichlet:0; right:0:0.2:dirichlet:1"


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    # domain
    Lx: float = 2.0
    Ly: float = 1.0
    fracture_x: float = 1.0
    nx1: int = 100
    nx2: int = 100
    ny: int = 100
    segments: str = DEFAULT_SEGMENTS
    fracture_bottom: float = 1.0
    fracture_top: float = 0.0
    endpoint: str = "half_cell"
    # physics
    s1: float = 1.0
    s2: float = 1.0
    K1: float = 1.0
    K2: float = 1.0
    s_gamma: float = 1.0
    Kf_delta: float = 1.0
    delta: float = 1e-3
    q1: float = 0.0
    q2: float = 0.0
    p0: float = 0.0
    p0_gamma: float = 0.0
    # time
    T: float = 0.5
    M1: int = 300
    M2: int = 300
    M_gamma: int = 300
    # method
    method: str = "gto_gmres"
    scenario: str = "driven"
    alpha: str = "optimized"
    alpha_lo: Optional[float] = None
    alpha_hi: Optional[float] = None
    n_eta: int = 64
    n_omega: int = 64
    tol: float = 1e-6
    max_iters: int = 500
    restart: Optional[int] = None
    damping: float = 1.0
    initial_guess: str = "zero"
    random_distribution: str = "uniform01"
    seed: int = 0
    stop_metric: str = "max"
    error_stride: int = 1
    # output
    dir: str = "out"
    snapshot_times: str = ""
    reference: str = ""
    write_fields: bool = True

    _section = {
        "domain": ("Lx", "Ly", "fracture_x", "nx1", "nx2", "ny", "segments", "fracture_bottom",
                   "fracture_top", "endpoint"),
        "physics": ("s1", "s2", "K1", "K2", "s_gamma", "Kf_delta", "delta", "q1", "q2", "p0", "p0_gamma"),
        "time": ("T", "M1", "M2", "M_gamma"),
        "method": ("method", "scenario", "alpha", "alpha_lo", "alpha_hi", "n_eta", "n_omega", "tol",
                   "max_iters", "restart", "damping", "initial_guess", "random_distribution", "seed",
                   "stop_metric", "error_stride"),
        "output": ("dir", "snapshot_times", "reference", "write_fields"),
    }

    # derived views -------------------------------------------------------

    @property
    def domain(self) -> DomainSpec:
        return DomainSpec(self.Lx, self.Ly, self.fracture_x, self.nx1, self.nx2, self.ny)

    @property
    def is_gto(self) -> bool:
        return self.method.startswith("gto")

    @property
    def homogeneous(self) -> bool:
        return self.scenario == "error_to_zero"

    def boundary(self) -> list[BoundarySegment]:
        return parse_segments(self.segments)

    def alpha_value(self) -> Optional[float]:
        return None if self.alpha == "optimized" else float(self.alpha)

    def times(self) -> list[float]:
        return [parse_time(tok, self.T) for tok in self.snapshot_times.replace(";", ",").split(",")
                if tok.strip()]

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def validate(self) -> "ScenarioConfig":
        errs = []

        def need(cond, key, msg):
            if not cond:
                errs.append(f"{key}: {msg}")

        for key in ("nx1", "nx2", "ny", "M1", "M2", "M_gamma", "n_eta", "n_omega", "error_stride"):
            need(getattr(self, key) >= 1, key, "must be a positive integer")
        for key in ("Lx", "Ly", "s1", "s2", "K1", "K2", "s_gamma", "Kf_delta", "delta", "T", "tol"):
            need(getattr(self, key) > 0, key, "must be positive")
        need(self.max_iters >= 0, "max_iters", "must be nonnegative")
        need(self.restart is None or self.restart >= 1, "restart", "must be a positive integer")
        need(0 < self.damping <= 2, "damping", "must lie in (0, 2]")
        need(self.method in METHODS, "method", f"must be one of {', '.join(METHODS)}")
        need(self.scenario in SCENARIOS, "scenario", f"must be one of {', '.join(SCENARIOS)}")
        need(self.initial_guess in ("zero", "random"), "initial_guess", "must be zero or random")
        need(self.random_distribution in DISTRIBUTIONS, "random_distribution",
             f"must be one of {', '.join(DISTRIBUTIONS)}")
        need(self.stop_metric in ("max", "p", "u"), "stop_metric", "must be max, p or u")
        need(self.endpoint in ("half_cell", "full_cell"), "endpoint", "must be half_cell or full_cell")
        if self.alpha != "optimized":
            try:
                a = float(self.alpha)
                need(a > 0, "alpha", "must be positive")
            except ValueError:
                errs.append(f"alpha: must be 'optimized' or a number, got {self.alpha!r}")
            if not self.is_gto:
                errs.append(f"alpha: only used by gto_* methods, not {self.method}")
        if self.method == "monolithic":
            need(self.M1 == self.M2 == self.M_gamma, "M_gamma",
                 "monolithic runs need M1 = M2 = M_gamma")
        if self.homogeneous:
            need(self.method != "monolithic", "scenario", "error_to_zero needs an iterative method")
            need(self.initial_guess == "random", "initial_guess", "error_to_zero needs a random guess")
        try:
            self.domain.validate()
        except ValueError as exc:
            errs.append(f"domain: {exc}")
        try:
            self.boundary()
        except ConfigError as exc:
            errs.append(f"segments: {exc}")
        try:
            self.times()
        except ConfigError as exc:
            errs.append(f"snapshot_times: {exc}")
        if errs:
            raise ConfigError("; ".join(errs))
        return self


def parse_time(token: str, T: float) -> float:
    tok = token.strip().replace(" ", "")
    try:
        if tok == "T":
            return T
        if tok.startswith("T/"):
            return T / float(tok[2:])
        if "*T/" in tok:
            num, den = tok.split("*T/")
            return float(num) * T / float(den)
        return float(tok)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot read time value {token!r}") from None


def parse_segments(text: str) -> list[BoundarySegment]:
    out = []
    for entry in text.split(";"):
        entry = entry.strip()
        if not entry:
            continue
        parts = entry.split(":")
        if len(parts) != 5:
            raise ConfigError(f"segment {entry!r} must read side:lo:hi:kind:value")
        side, lo, hi, kind, value = parts
        try:
            out.append(BoundarySegment(side.strip(), float(lo), float(hi), kind.strip(), float(value)))
        except ValueError:
            raise ConfigError(f"segment {entry!r} has a non-numeric field") from None
    return out


def _convert(name: str, raw: str):
    raw = raw.strip()
    types = {f.name: f.type for f in fields(ScenarioConfig)}
    kind = types[name]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        if kind in ("bool", bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if "Optional[int]" in str(kind):
            return None if raw.lower() in ("", "none") else int(raw)
        if "Optional[float]" in str(kind):
            return None if raw.lower() in ("", "none") else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r} as {kind}") from None


def load_config(path: str, overrides: Optional[dict] = None) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return config_from_parser(parser, overrides)


def config_from_string(text: str, overrides: Optional[dict] = None) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_parser(parser, overrides)


def config_from_parser(parser: configparser.ConfigParser, overrides: Optional[dict] = None) -> ScenarioConfig:
    base = ScenarioConfig()
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = ScenarioConfig._section[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            values[key] = _convert(key, raw)
    values.update(overrides or {})
    return replace(base, **values).validate()


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for key in ScenarioConfig._section[section]:
            v = getattr(cfg, key)
            lines.append(f"{key} = {'' if v is None else v}")
        lines.append("")
    return "\n".join(lines)
