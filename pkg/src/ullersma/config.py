"""INI-style run configuration.

Layout::

    [geometry]   kind = layered1d | homogeneous3d | planewave, length, points, ...
    [medium]     rho, omega0, alpha (scalar or one value per layer), layer_edges
    [reservoir]  kind = discrete: omega, beta | beta_layers
                 kind = continuum: cutoff, amplitude, omega_max, smear_n
    [run]        command parameters, seed, out
    [tolerances] per-check overrides, e.g. green = 1e-8
"""
import configparser
import hashlib
from dataclasses import dataclass, field

from .errors import ConfigurationError

SCHEMA = {
    "geometry": {"kind", "length", "points", "box", "m_max", "q"},
    "medium": {"rho", "omega0", "alpha", "layer_edges"},
    "reservoir": {"kind", "omega", "beta", "beta_layers", "cutoff", "amplitude",
                  "omega_max", "smear_n", "family"},
    "run": None,  # free-form, validated by each command
    "tolerances": None,
}
REQUIRED = {"geometry": {"kind"}, "medium": {"rho", "omega0", "alpha"}}

_MISSING = object()


@dataclass
class Section:
    name: str
    values: dict

    def has(self, key):
        return key in self.values

    def get(self, key, default=_MISSING):
        if key in self.values:
            return self.values[key]
        if default is _MISSING:
            raise ConfigurationError("missing required key", f"{self.name}.{key}")
        return default

    def _convert(self, key, conv, default):
        raw = self.get(key, default)
        if raw is default and default is not _MISSING:
            return default
        try:
            return conv(raw)
        except (TypeError, ValueError):
            raise ConfigurationError(f"cannot parse {raw!r}", f"{self.name}.{key}") from None

    def float(self, key, default=_MISSING):
        return self._convert(key, float, default)

    def int(self, key, default=_MISSING):
        return self._convert(key, int, default)

    def bool(self, key, default=_MISSING):
        def conv(v):
            s = str(v).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)
        return self._convert(key, conv, default)

    def floats(self, key, default=_MISSING):
        def conv(v):
            if isinstance(v, (list, tuple)):
                return [float(x) for x in v]
            s = str(v).strip()
            return [float(x) for x in s.split(",")] if s else []
        return self._convert(key, conv, default)


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)
    source: str = ""

    def section(self, name):
        return Section(name, self.sections.get(name, {}))

    def seed(self, override=None):
        if override is not None:
            return int(override)
        run = self.section("run")
        if not run.has("seed"):
            raise ConfigurationError("a seed is mandatory for stochastic runs", "run.seed")
        return run.int("seed")

    def tolerance(self, name, default, scale=1.0):
        return self.section("tolerances").float(name, default) * scale

    def digest(self):
        return hashlib.sha256(self.source.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        sections = {k: {kk: (vv if isinstance(vv, (list, tuple)) else str(vv))
                        for kk, vv in v.items()} for k, v in d.items()}
        text = "\n".join(f"[{k}]\n" + "\n".join(f"{kk} = {vv}" for kk, vv in v.items())
                         for k, v in sorted(sections.items()))
        cfg = cls(sections, text)
        validate(cfg)
        return cfg


def validate(cfg):
    for name, keys in cfg.sections.items():
        if name not in SCHEMA:
            raise ConfigurationError("unknown section", name)
        allowed = SCHEMA[name]
        if allowed is None:
            continue
        for k in keys:
            if k not in allowed:
                raise ConfigurationError("unknown key", f"{name}.{k}")
    for name, keys in REQUIRED.items():
        for k in keys:
            if k not in cfg.sections.get(name, {}):
                raise ConfigurationError("missing required key", f"{name}.{k}")


def parse_config(text):
    # only '#' starts an inline comment; ';' separates beta_layers rows
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed configuration: {exc}") from None
    sections = {s: dict(parser[s]) for s in parser.sections()}
    cfg = RunConfig(sections, text)
    validate(cfg)
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


REFERENCE_CONFIGS = ("vacuum", "homogeneous_n0", "homogeneous_n3", "two_layer_n2",
                     "smeared_n128")


def reference_config(name):
    """One of the shipped configurations in ``ullersma/configs``."""
    from importlib import resources
    if name not in REFERENCE_CONFIGS:
        raise ConfigurationError(f"no shipped configuration named {name!r}")
    text = resources.files("ullersma").joinpath("configs", f"{name}.ini").read_text()
    return parse_config(text)
