"""INI experiment records: one section per concern, flat keys, validated on load."""
from __future__ import annotations

import configparser
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

KINDS = ("verify-algebra", "decay", "nonlinear-decay", "scale-collapse", "green", "harnack",
         "export-matrix")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list:
    return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]


def _ints(text: str) -> list:
    return [int(v) for v in re.split(r"[,\s]+", text.strip()) if v]


def _scalar_or_list(text: str, conv):
    vals = [conv(v) for v in re.split(r"[,\s]+", text.strip()) if v]
    return vals[0] if len(vals) == 1 else vals


@dataclass
class ExperimentConfig:
    kind: str = "decay"
    case: str = "I"
    seed: int = 0
    out: str = "out"
    domain: dict = field(default_factory=lambda: {"dim": 3, "L": 3.0, "N": 48, "boundary": "periodic",
                                                  "singular_set": "tube"})
    profile: dict = field(default_factory=lambda: {"kind": "constant_gap", "lambda0": 1.0, "c2": 1.0})
    eps: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    mode: str = "inhomogeneous"
    tol: float = 1e-12
    kernel_tol: float = 1e-6
    coupling: float = 0.01
    condition_c2: float = 0.1
    lambda_c: float = 200.0
    r2_min: float = 0.99
    band: float = 0.25
    collapse_max: float = 0.10
    collapse_range: list = field(default_factory=lambda: [1.0, 4.0])
    ratio_margin: float = 1.0
    green_R0: float = 0.125
    green_N: int = 64
    masses: list = field(default_factory=lambda: [10.0, 20.0])
    kappas: list = field(default_factory=lambda: [0.0, 0.1])
    harnack_R0: float = 1.0
    harnack_spread: float = 2.0
    cases: list = field(default_factory=lambda: ["I", "II", "III", "IV"])
    samples: int = 1000
    algebra_tol: float = 1e-12
    corrupt: bool = False
    export_eps: float | None = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        for name in ("tol", "kernel_tol", "algebra_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if any(e <= 0 for e in self.eps):
            raise ConfigError("eps values must be positive")
        if len(set(self.eps)) != len(self.eps):
            raise ConfigError("eps values must be distinct")
        if not 0 < self.condition_c2 < 0.125:
            raise ConfigError(f"condition threshold c2 = {self.condition_c2} must lie in (0, 1/8)")
        if self.export_eps is not None and self.export_eps <= 0:
            raise ConfigError("export eps must be positive")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


# (section, key) -> (attribute, converter); domain and profile keys are handled separately
_FIELDS = {
    ("experiment", "kind"): ("kind", str),
    ("experiment", "case"): ("case", str),
    ("experiment", "seed"): ("seed", int),
    ("experiment", "out"): ("out", str),
    ("experiment", "mode"): ("mode", str),
    ("sweep", "eps"): ("eps", _floats),
    ("solver", "tol"): ("tol", float),
    ("solver", "kernel_tol"): ("kernel_tol", float),
    ("nonlinear", "coupling"): ("coupling", float),
    ("thresholds", "c2"): ("condition_c2", float),
    ("thresholds", "lambda_c"): ("lambda_c", float),
    ("thresholds", "r2_min"): ("r2_min", float),
    ("thresholds", "band"): ("band", float),
    ("thresholds", "collapse_max"): ("collapse_max", float),
    ("thresholds", "collapse_range"): ("collapse_range", _floats),
    ("thresholds", "ratio_margin"): ("ratio_margin", float),
    ("thresholds", "harnack_spread"): ("harnack_spread", float),
    ("thresholds", "algebra_tol"): ("algebra_tol", float),
    ("green", "R0"): ("green_R0", float),
    ("green", "N"): ("green_N", int),
    ("green", "masses"): ("masses", _floats),
    ("green", "kappas"): ("kappas", _floats),
    ("harnack", "R0"): ("harnack_R0", float),
    ("algebra", "cases"): ("cases", lambda t: [c for c in re.split(r"[,\s]+", t.strip()) if c]),
    ("algebra", "samples"): ("samples", int),
    ("algebra", "corrupt"): ("corrupt", lambda t: t.strip().lower() in ("1", "true", "yes", "on")),
    ("export", "eps"): ("export_eps", float),
}

_DOMAIN_KEYS = {"dim": int, "L": lambda t: _scalar_or_list(t, float), "N": lambda t: _scalar_or_list(t, int),
                "boundary": str, "R0": float, "kappa": float, "metric": str, "singular_set": str}
_PROFILE_KEYS = {"kind": str, "lambda0": float, "c2": float, "amplitude": float}


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return no
    return None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = ExperimentConfig()

    def fail(section, key, msg):
        line = _line_of(text, section, key)
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: [{section}] {key}: {msg}")

    for section in parser.sections():
        for key, raw in parser.items(section):
            try:
                if section == "domain":
                    if key not in _DOMAIN_KEYS:
                        fail(section, key, "unknown key")
                    cfg.domain[key] = _DOMAIN_KEYS[key](raw)
                elif section == "profile":
                    if key not in _PROFILE_KEYS:
                        fail(section, key, "unknown key")
                    cfg.profile[key] = _PROFILE_KEYS[key](raw)
                elif (section, key) in _FIELDS:
                    attr, conv = _FIELDS[(section, key)]
                    setattr(cfg, attr, conv(raw))
                else:
                    fail(section, key, "unknown key")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                fail(section, key, f"bad value {raw!r} ({exc})")
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))
