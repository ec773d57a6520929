"""INI-style run configuration (``key = value`` lines under ``[section]``
headers, ``#`` comments, comma lists, colon-joined tuples)."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .core import ConeConfig
from .errors import ConfigError
from .skewmap import (CylinderMap, SkewParams, SkewMap, TrigPerturbation, identity_map,
                      random_perturbation, zero_fiber_map)

MAP_KINDS = ("skew", "identity", "zero-fiber")


@dataclass(frozen=True)
class MapConfig:
    kind: str = "skew"
    a: float = 0.1
    b: float = 0.25
    d: int = 16
    arcs: tuple = ((0.05, 0.20), (0.30, 0.45), (0.55, 0.70), (0.80, 0.95))
    eps_arc: float = 0.05
    alpha: float = -0.04
    beta: float = 0.95
    psi1: tuple = (0.925, 0.075)
    psi2: tuple = (0.925, -0.075)
    psi3_slope: float = 0.04
    saturation: float = 0.85
    windows: tuple = (1, 5, 9, 13)


@dataclass(frozen=True)
class ConeSection:
    eta: float = 0.05
    kappa: float = 4.0
    delta: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    samples: int = 1000
    burn_in: int = 1000
    iters: int = 100_000
    grid: tuple = (512, 128)
    check_grid: tuple = (2048, 512)
    threads: int = 1
    out: str = "out"


@dataclass(frozen=True)
class PerturbationConfig:
    terms: tuple = ()  # (component, m, n, amplitude, phase)
    random_norm: float = 0.0
    random_terms: int = 8


@dataclass(frozen=True)
class PullbackConfig:
    theta0: float = 0.0
    y0: float = 0.0
    extent: float = 1e-3


@dataclass(frozen=True)
class EmbedConfig:
    collar: float = 0.1
    points: int = 10_000
    iters: int = 1000


@dataclass(frozen=True)
class BoxConfig:
    instances: tuple = ((2, 0.95, 0.8), (3, 0.95, 0.9), (4, 0.98, 0.93))
    grid: int = 33
    eps: float = 0.2
    net_samples: int = 10_000
    fold: tuple = (3, -0.04, 0.95, 0.5)  # (n, alpha, beta', shrink)


@dataclass(frozen=True)
class Config:
    map: MapConfig = field(default_factory=MapConfig)
    cone: ConeSection = field(default_factory=ConeSection)
    run: RunConfig = field(default_factory=RunConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    pullback: PullbackConfig = field(default_factory=PullbackConfig)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    boxcover: BoxConfig = field(default_factory=BoxConfig)

    # -- derived objects ----------------------------------------------------
    def params(self) -> SkewParams:
        mc = self.map
        try:
            cone = ConeConfig(self.cone.eta, self.cone.kappa, self.cone.delta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return SkewParams(a=mc.a, b=mc.b, d=mc.d, arcs=mc.arcs, eps_arc=mc.eps_arc, alpha=mc.alpha,
                          beta=mc.beta, psi1=mc.psi1, psi2=mc.psi2, psi3_slope=mc.psi3_slope,
                          saturation=mc.saturation, cone=cone, windows=mc.windows)

    def perturbation_field(self) -> TrigPerturbation | None:
        pc = self.perturbation
        pert = TrigPerturbation.from_terms(pc.terms)
        if pc.random_norm > 0:
            rng = np.random.default_rng(self.run.seed)
            pert = pert + random_perturbation(rng, pc.random_norm, pc.random_terms)
        return pert if len(pert) else None

    def build_map(self) -> CylinderMap:
        p = self.params()
        kind = self.map.kind
        if kind == "skew":
            return SkewMap(p, self.perturbation_field())
        if kind == "identity":
            return identity_map(p)
        if kind == "zero-fiber":
            return zero_fiber_map(p)
        raise ConfigError(f"unknown map kind {kind!r}")


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def _fmt_scalar(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt(name: str, v) -> str:
    if name.endswith("grid") and isinstance(v, tuple):
        return "x".join(str(x) for x in v)
    if isinstance(v, tuple):
        return ", ".join(":".join(_fmt_scalar(x) for x in item) if isinstance(item, tuple) else _fmt_scalar(item)
                         for item in v)
    return _fmt_scalar(v)


def _num(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    # perturbation terms mix a component name with numbers
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_grid(text: str) -> tuple:
    parts = text.lower().replace(" ", "").split("x")
    if len(parts) != 2:
        raise ConfigError(f"grid {text!r} is not of the form RxC")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"grid {text!r} is not of the form RxC") from exc


def _parse(name: str, text: str, default):
    if name.endswith("grid") and isinstance(default, tuple):
        return parse_grid(text)
    if isinstance(default, tuple):
        items = [s.strip() for s in text.split(",") if s.strip()]
        if name in ("instances", "arcs", "terms") or (default and isinstance(default[0], tuple)):
            return tuple(tuple(_num(x, None) for x in it.split(":")) for it in items)
        same = default and all(type(x) is type(default[0]) for x in default)
        proto = default[0] if same else None
        return tuple(_num(x, proto) for x in items)
    if isinstance(default, str):
        return text.strip()
    return _num(text, default)


def _section_from(cls, items: dict, section: str):
    base = cls()
    known = {f.name for f in fields(cls)}
    updates = {}
    for key, text in items.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        try:
            updates[key] = _parse(key, text, getattr(base, key))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {text!r}") from exc
    return replace(base, **updates)


def parse_config(text: str) -> Config:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    sections = {f.name: f.default_factory for f in fields(Config)}
    kw = {}
    for sec in cp.sections():
        if sec not in sections:
            raise ConfigError(f"unknown section [{sec}]")
        kw[sec] = _section_from(sections[sec], dict(cp[sec]), sec)
    cfg = Config(**kw)
    if cfg.map.kind not in MAP_KINDS:
        raise ConfigError(f"map.kind must be one of {', '.join(MAP_KINDS)}")
    return cfg


def load_config(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def emit_config(cfg: Config) -> str:
    lines = []
    for sf in fields(Config):
        sec = getattr(cfg, sf.name)
        lines.append(f"[{sf.name}]")
        for f in fields(sec):
            lines.append(f"{f.name} = {_fmt(f.name, getattr(sec, f.name))}")
        lines.append("")
    return "\n".join(lines)
