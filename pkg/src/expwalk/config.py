"""Flat ``key = value`` experiment configuration with dotted key groups."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .steps import ExpTilted, Gaussian, Lattice, Reflected, ShiftedPareto, StepModel, TwoPoint
from .tilt import FSpec

__all__ = ["ConfigError", "Config", "parse_text", "load", "build_model", "build_f", "SCHEMA",
           "REFERENCE_CONFIG"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


# key -> (parser, default); ``None`` defaults are optional keys
SCHEMA: dict[str, tuple[Callable[[str], object], object]] = {
    "step.kind": (_choice("lattice", "twopoint", "gaussian", "pareto", "exptilted", "reflected"),
                  "lattice"),
    "step.spacing": (float, 1.0),
    "step.offsets": (_ints, (-1, 1)),
    "step.probs": (_floats, (0.5, 0.5)),
    "step.up": (float, None),
    "step.down": (float, None),
    "step.p_up": (float, None),
    "step.mu": (float, None),
    "step.sigma": (float, None),
    "step.beta": (float, None),
    "step.scale": (float, None),
    "step.shift": (float, None),
    "step.lam": (float, None),
    "f.K0": (float, 1.0),
    "f.theta": (float, 1.0),
    "f.c0": (float, 1.0),
    "mc.seed": (int, 20240601),
    "mc.nsim": (int, 100_000),
    "mc.workers": (int, 1),
    "mc.eps": (float, 1e-6),
    "mc.cap": (int, 100_000),
    "mc.method": (_choice("auto", "exact", "plain", "tilted", "bigjump"), "auto"),
    "regime.n0": (int, 64),
    "regime.rungs": (int, 4),
    "regime.k_max": (int, 512),
    "regime.jumps": (int, 8),
    "renewal.flavor": (_choice("descending", "ascending"), "descending"),
    "renewal.x_max": (float, 32.0),
    "renewal.points": (int, 64),
    "renewal.chains": (int, 4000),
}

# keys that change how work is scheduled but never the numbers produced
_UNHASHED = frozenset({"mc.workers"})

REFERENCE_CONFIG = """\
# symmetric +-1 walk with F(x) = 1 / (1 + x)
step.kind = lattice
step.spacing = 1
step.offsets = -1,1
step.probs = 0.5,0.5
f.K0 = 1
f.theta = 1
f.c0 = 1
mc.seed = 20240601
mc.nsim = 20000
regime.n0 = 64
regime.rungs = 4
"""


def _render(value: object) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Config:
    """Validated configuration; unset optional keys are absent from ``values``."""

    values: Mapping[str, object]

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        if key not in self.values:
            raise ConfigError(f"missing config key {key!r}")
        return self.values[key]

    def get(self, key: str, default=None):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values.get(key, default)

    def canonical(self) -> str:
        """Sorted ``key=value`` lines of every hashed key."""
        return "".join(f"{k}={_render(self.values[k])}\n" for k in sorted(self.values)
                       if k not in _UNHASHED)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def lines(self) -> list[str]:
        return [f"{k}={_render(v)}" for k, v in sorted(self.values.items())]


def _pairs(text: str, source: str) -> Iterable[tuple[str, str]]:
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        yield key, value


def _check_key(key: str) -> None:
    if key.count(".") != 1:
        raise ConfigError(f"config key {key!r} must have exactly one dot")
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")


def parse_text(text: str, overrides: Iterable[str] = (), source: str = "<config>") -> Config:
    """Parse config text plus ``key=value`` overrides (later wins)."""
    raw: dict[str, str] = {}
    for key, value in _pairs(text, source):
        _check_key(key)
        raw[key] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        _check_key(key)
        raw[key] = value
    values: dict[str, object] = {k: d for k, (_, d) in SCHEMA.items() if d is not None}
    for key, text_value in raw.items():
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(text_value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    cfg = Config(values)
    build_model(cfg)
    build_f(cfg)
    if cfg["mc.nsim"] < 1 or cfg["mc.workers"] < 1 or cfg["regime.n0"] < 1 or cfg["regime.rungs"] < 1:
        raise ConfigError("mc.nsim, mc.workers, regime.n0 and regime.rungs must be positive")
    return cfg


def load(path: str | Path | None, overrides: Iterable[str] = ()) -> Config:
    if path is None:
        return parse_text(REFERENCE_CONFIG, overrides, "<reference>")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, overrides, str(path))


_REQUIRED = {
    "lattice": ("step.spacing", "step.offsets", "step.probs"),
    "twopoint": ("step.up", "step.down", "step.p_up"),
    "gaussian": ("step.mu", "step.sigma"),
    "pareto": ("step.beta", "step.scale", "step.shift"),
    "exptilted": ("step.beta", "step.scale", "step.shift", "step.lam"),
    "reflected": ("step.beta", "step.scale", "step.shift"),
}


def build_model(cfg: Config) -> StepModel:
    kind = cfg["step.kind"]
    for key in _REQUIRED[kind]:
        if cfg.get(key) is None:
            raise ConfigError(f"missing config key {key!r} for step.kind={kind}")
    g = cfg.get
    try:
        if kind == "lattice":
            return Lattice(g("step.spacing"), g("step.offsets"), g("step.probs"))
        if kind == "twopoint":
            return TwoPoint(g("step.up"), g("step.down"), g("step.p_up"))
        if kind == "gaussian":
            return Gaussian(g("step.mu"), g("step.sigma"))
        base = ShiftedPareto(g("step.beta"), g("step.scale"), g("step.shift"))
        if kind == "pareto":
            return base
        if kind == "exptilted":
            return ExpTilted(base, g("step.lam"))
        lam = g("step.lam")
        return Reflected(base if lam is None else ExpTilted(base, lam))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid step.* parameters: {exc}") from None


def build_f(cfg: Config) -> FSpec:
    try:
        return FSpec(cfg["f.K0"], cfg["f.theta"], cfg["f.c0"])
    except ValueError as exc:
        raise ConfigError(f"invalid f.* parameters: {exc}") from None
