"""Experiment configuration: ``key = value`` lines grouped under ``[section]`` headers.

Keys before the first header belong to ``[run]``. Parsing is strict: an
unknown section or key is an error, and every error names the offending
``section.key`` path. :func:`dump_config` writes the canonical form, which
parses back to an identical :class:`ExperimentConfig`.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .linear import FAMILIES, PROBES, EstimateSpec, estimate_violations

MODES = {
    "simulate": "Simulate",
    "probe-linear": "ProbeLinear",
    "probelinear": "ProbeLinear",
    "sweep-alpha": "SweepAlpha",
    "sweepalpha": "SweepAlpha",
    "radial": "Radial",
    "verify": "Verify",
}
SUBCOMMANDS = {"Simulate": "simulate", "ProbeLinear": "probe-linear", "SweepAlpha": "sweep-alpha", "Radial": "radial", "Verify": "verify"}


def _mode(value):
    key = value.strip().lower()
    if key not in MODES:
        raise ValueError(f"unknown mode {value!r}; expected one of {sorted(set(MODES.values()))}")
    return MODES[key]


def _bool(value):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _floats(value):
    return tuple(float(x) for x in value.split(",") if x.strip())


def _words(value):
    return tuple(x.strip() for x in value.split(",") if x.strip())


def _float(value):
    v = float(value)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


_PARSERS = {"float": _float, "int": int, "bool": _bool, "str": str.strip, "floats": _floats, "words": _words, "mode": _mode}


def _opt(default, kind, **meta):
    return field(default=default, metadata={"kind": kind, **meta})


@dataclass(frozen=True)
class RunSection:
    mode: str = _opt("Simulate", "mode")
    seed: int = _opt(0, "int")


@dataclass(frozen=True)
class GridSection:
    dim: int = _opt(2, "int")
    points: int = _opt(64, "int")
    box_length: float = _opt(2.0 * math.pi, "float")


@dataclass(frozen=True)
class ParamsSection:
    alpha: float = _opt(0.8, "float")
    K_F: float = _opt(1.0, "float")
    g: float = _opt(1.0, "float")
    initial: str = _opt("blob", "str")
    mass: float = _opt(10.0, "float")
    width: float = _opt(0.6, "float")
    background: float = _opt(0.0, "float")
    fluid: bool = _opt(True, "bool")


@dataclass(frozen=True)
class NumericsSection:
    dt: float = _opt(1e-3, "float")
    T: float = _opt(10.0, "float")
    output_every: int = _opt(10, "int")
    cfl: float = _opt(0.5, "float")
    adaptive: bool = _opt(True, "bool")


@dataclass(frozen=True)
class EstimateSection:
    p: float = _opt(4.0, "float")
    q: float = _opt(16.0, "float")
    r: float = _opt(6.0, "float")
    theta: float = _opt(0.8, "float")
    beta: float = _opt(0.6, "float")
    eta: float = _opt(0.05, "float")
    theta_init: float = _opt(0.9, "float")
    probes: tuple = _opt(PROBES, "words")


@dataclass(frozen=True)
class ForcingSection:
    family: str = _opt("MovingGaussian", "str")
    width: float = _opt(1.0, "float")
    mass: float = _opt(1.0, "float")
    speed: tuple = _opt((1.0, 0.5, 0.25), "floats")


@dataclass(frozen=True)
class SweepSection:
    amplitudes: tuple = _opt((0.0, 1.0, 5.0, 25.0, 125.0, 625.0), "floats")
    alphas: tuple = _opt((0.3, 0.45, 0.55, 0.8), "floats")
    tolerance: float = _opt(0.1, "float")


@dataclass(frozen=True)
class RadialSection:
    R: float = _opt(1.0, "float")
    cells: int = _opt(200, "int")
    mass: float = _opt(40.0, "float")
    concentration: float = _opt(80.0, "float")
    T: float = _opt(10.0, "float")
    dt_max: float = _opt(1e-3, "float")
    growth_factor: float = _opt(10.0, "float")
    dt_floor: float = _opt(1e-10, "float")


@dataclass(frozen=True)
class OutputSection:
    directory: str = _opt("runs", "str")
    formats: tuple = _opt(("csv", "checkpoint"), "words")


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    grid: GridSection = field(default_factory=GridSection)
    params: ParamsSection = field(default_factory=ParamsSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    estimate: EstimateSection = field(default_factory=EstimateSection)
    forcing: ForcingSection = field(default_factory=ForcingSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    radial: RadialSection = field(default_factory=RadialSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def mode(self):
        return self.run.mode

    def estimate_spec(self):
        e = self.estimate
        return EstimateSpec(e.p, e.q, e.r, e.theta, e.beta, e.eta, e.theta_init, e.probes)

    def replace(self, **sections):
        return dataclasses.replace(self, **sections)


SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(section, key, raw):
    cls = SECTIONS[section]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ConfigError(f"{section}.{key}", f"unknown key (allowed: {', '.join(fields)})")
    kind = fields[key].metadata["kind"]
    try:
        return _PARSERS[kind](raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r} as {kind}: {exc}") from None


def _starts_with_header(text):
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith(("#", ";")):
            return stripped.startswith("[")
    return False


def _raw_sections(text):
    cp = configparser.ConfigParser(
        interpolation=None, strict=True, empty_lines_in_values=False, comment_prefixes=("#", ";"), default_section="\x00"
    )
    cp.optionxform = str
    try:
        cp.read_string(text if _starts_with_header(text) else "[run]\n" + text)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(exc.section, "section appears twice") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{exc.section}.{exc.option}", "key appears twice") from None
    except configparser.Error as exc:
        raise ConfigError("<document>", f"malformed config: {exc.message.splitlines()[0]}") from None
    out = {}
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(name, f"unknown section (allowed: {', '.join(SECTIONS)})")
        out[name] = dict(cp[name])
    return out


def apply_overrides(raw, overrides):
    """Merge ``section.key=value`` strings into a raw section dict."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        path, value = item.split("=", 1)
        path = path.strip()
        if "." not in path:
            raise ConfigError(path, "override key must be qualified as section.key")
        section, key = path.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(section, f"unknown section (allowed: {', '.join(SECTIONS)})")
        raw.setdefault(section, {})[key] = value.strip()
    return raw


def parse_config(text, overrides=None):
    """Parse, fill defaults and validate; raises :class:`ConfigError`."""
    raw = apply_overrides(_raw_sections(text), overrides)
    sections = {}
    for name, factory in SECTIONS.items():
        values = {k: _parse_value(name, k, v) for k, v in raw.get(name, {}).items()}
        sections[name] = factory().__class__(**values) if values else factory()
    cfg = ExperimentConfig(**sections)
    validate(cfg)
    return cfg


def load_config(path, overrides=None):
    return parse_config(Path(path).read_text(), overrides)


def validate(cfg):
    """Check every cross-module invariant; the first violation is raised."""
    g = cfg.grid
    if g.dim not in (2, 3):
        raise ConfigError("grid.dim", f"must be 2 or 3 (got {g.dim})")
    if g.points < 4 or g.points % 2:
        raise ConfigError("grid.points", f"must be an even integer >= 4 (got {g.points})")
    if not g.box_length > 0:
        raise ConfigError("grid.box_length", "must be positive")
    p = cfg.params
    if not p.alpha > 0:
        raise ConfigError("params.alpha", f"limiter exponent must be positive (got {p.alpha})")
    if not p.K_F > 0:
        raise ConfigError("params.K_F", "must be positive")
    if p.initial not in ("blob", "homogeneous"):
        raise ConfigError("params.initial", "must be 'blob' or 'homogeneous'")
    if not p.mass > 0:
        raise ConfigError("params.mass", "must be positive")
    if not p.width > 0:
        raise ConfigError("params.width", "must be positive")
    if p.background < 0:
        raise ConfigError("params.background", "must be nonnegative")
    n = cfg.numerics
    if not n.dt > 0:
        raise ConfigError("numerics.dt", "must be positive")
    if not n.T >= 0:
        raise ConfigError("numerics.T", "must be nonnegative")
    if n.output_every < 1:
        raise ConfigError("numerics.output_every", "must be at least 1")
    if not 0 < n.cfl <= 1:
        raise ConfigError("numerics.cfl", "must lie in (0, 1]")
    e = cfg.estimate
    for name in e.probes:
        if name not in PROBES:
            raise ConfigError("estimate.probes", f"unknown probe {name!r} (allowed: {', '.join(PROBES)})")
    for key, reason in estimate_violations(e.p, e.q, e.r, e.theta, e.beta, e.eta, e.theta_init, e.probes):
        raise ConfigError(f"estimate.{key}", reason)
    f = cfg.forcing
    if f.family not in FAMILIES:
        raise ConfigError("forcing.family", f"must be one of {', '.join(FAMILIES)}")
    if not f.width > 0:
        raise ConfigError("forcing.width", "must be positive")
    if not f.mass > 0:
        raise ConfigError("forcing.mass", "mass bound must be positive")
    s = cfg.sweep
    if any(a < 0 for a in s.amplitudes):
        raise ConfigError("sweep.amplitudes", "amplitudes must be nonnegative")
    if any(b <= a for a, b in zip(s.amplitudes, s.amplitudes[1:])):
        raise ConfigError("sweep.amplitudes", "amplitudes must be strictly increasing")
    if any(not 0 < a <= 1 for a in s.alphas):
        raise ConfigError("sweep.alphas", "every alpha must lie in (0, 1]")
    if not s.tolerance >= 0:
        raise ConfigError("sweep.tolerance", "must be nonnegative")
    r = cfg.radial
    for key in ("R", "mass", "concentration", "dt_max"):
        if not getattr(r, key) > 0:
            raise ConfigError(f"radial.{key}", "must be positive")
    if r.cells < 2:
        raise ConfigError("radial.cells", "must be at least 2")
    if not r.T >= 0:
        raise ConfigError("radial.T", "must be nonnegative")
    if not r.growth_factor > 1:
        raise ConfigError("radial.growth_factor", "must exceed 1")
    if r.dt_floor < 0:
        raise ConfigError("radial.dt_floor", "must be nonnegative")
    for fmt in cfg.output.formats:
        if fmt not in ("csv", "checkpoint"):
            raise ConfigError("output.formats", f"unknown format {fmt!r} (allowed: csv, checkpoint)")
    return cfg


def _emit(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_emit(v) for v in value)
    return str(value)


def dump_config(cfg):
    """Canonical text: every section and key, defaults included, in schema order."""
    lines = []
    for name in SECTIONS:
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {_emit(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def shipped_config_path(name):
    """Path of a config bundled with the package, e.g. ``"dichotomy"``."""
    path = resources.files("kslab") / "configs" / f"{name}.ini"
    if not path.is_file():
        raise ConfigError("<document>", f"no bundled config named {name!r}")
    return Path(str(path))


def shipped_config(name, overrides=None):
    return load_config(shipped_config_path(name), overrides)
