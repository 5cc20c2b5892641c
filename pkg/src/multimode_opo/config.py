"""Experiment configuration: TOML with explicit unit suffixes.

Dimensional values are strings such as ``"30 mm"`` or ``"4.7 MHz"``; bare
numbers are accepted only for dimensionless fields. Every problem is reported
as a :class:`ConfigError` naming the offending ``section.field``.
"""
from __future__ import annotations

import hashlib
import logging
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cavity import CavityGeometry, losses_from_finesse, self_imaging_lengths
from .coupling import DEFAULT_CUTOFF, CrystalParams, PumpProfile
from .modes import ModeIndex
from .squeezing import EfficiencyChain

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "REFERENCE_CONFIG",
    "config_hash",
    "load_config",
    "parse_quantity",
    "resolved_toml",
]

log = logging.getLogger(__name__)

REFERENCE_CONFIG = Path(__file__).with_name("data") / "reference.toml"

UNITS = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "μm": 1e-6, "nm": 1e-9},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "power": {"W": 1.0, "mW": 1e-3, "uW": 1e-6},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "wavenumber": {"1/m": 1.0, "rad/m": 1.0, "1/mm": 1e3},
    "level": {"dB": 1.0},
}
BASE_UNIT = {"length": "m", "frequency": "Hz", "power": "W", "time": "s", "wavenumber": "1/m", "level": "dB"}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def parse_quantity(value: Any, kind: str, name: str) -> float:
    """Convert a config value to SI. ``kind`` is a key of ``UNITS`` or
    ``"number"`` for dimensionless values."""
    if isinstance(value, bool):
        raise ConfigError(name, f"expected a {kind} value, got a boolean")
    if kind == "number":
        if isinstance(value, (int, float)):
            return float(value)
        match = _QUANTITY.match(str(value))
        if match and not match.group(2):
            return float(match.group(1))
        raise ConfigError(name, f"expected a dimensionless number, got {value!r}")
    if isinstance(value, (int, float)):
        raise ConfigError(name, f"missing unit; write e.g. '{value} {BASE_UNIT[kind]}'")
    match = _QUANTITY.match(str(value))
    if not match:
        raise ConfigError(name, f"cannot parse {value!r} as a {kind}")
    number, unit = match.groups()
    if not unit:
        raise ConfigError(name, f"missing unit; write e.g. '{number} {BASE_UNIT[kind]}'")
    scale = UNITS[kind].get(unit)
    if scale is None:
        raise ConfigError(name, f"unit {unit!r} is not a {kind} unit (expected one of {sorted(UNITS[kind])})")
    return float(number) * scale


@dataclass(frozen=True)
class CavitySection:
    focal_length: float
    mirror_radius: float
    L1: float
    L2: float
    output_transmission: float
    extra_loss: float
    include_crystal_optical_path: bool = False


@dataclass(frozen=True)
class CrystalSection:
    length: float
    signal_index: float
    phase_mismatch: float = 0.0
    gain_scale: float = 1.0


@dataclass(frozen=True)
class PumpSection:
    wavelength: float
    waist: float
    power: float = 1.0
    waist_position: float = 0.0
    ratio_to_threshold: float = 0.5


@dataclass(frozen=True)
class BasisSection:
    truncation: int | None = 20
    waist: float | None = None
    z_nodes: int = 33


@dataclass(frozen=True)
class SqueezingSection:
    analysis_frequency: float = 3e6
    propagation_efficiency: float = 1.0
    detector_efficiency: float = 1.0
    homodyne_visibility: float = 1.0
    target_db: float | None = None
    target_mode: int = 0
    cutoff: float = DEFAULT_CUTOFF
    report_modes: int = 10
    spectrum_max_frequency: float = 15e6
    spectrum_points: int = 31


@dataclass(frozen=True)
class HomodyneSection:
    lo_modes: tuple[ModeIndex, ...] = (ModeIndex(0, 0), ModeIndex(1, 0), ModeIndex(0, 1))
    lo_waist: float | None = None
    seed: int = 0
    window: int = 10_000
    sample_rate: float = 10e6
    duration: float = 4.0
    sweeps: int = 10
    bins: int = 36
    calibration_fraction: float = 0.1


@dataclass(frozen=True)
class DesignSection:
    dL1_min: float = -1e-3
    dL1_max: float = 1e-3
    dL1_points: int = 5
    dL2_min: float = -1e-3
    dL2_max: float = 1e-3
    dL2_points: int = 21
    max_order: int = 4


@dataclass(frozen=True)
class ModesSection:
    count: int = 7
    grid_points: int = 64
    extent: float = 3.0


@dataclass(frozen=True)
class ExperimentConfig:
    cavity: CavitySection
    crystal: CrystalSection
    pump: PumpSection
    signal_wavelength: float
    basis: BasisSection = field(default_factory=BasisSection)
    squeezing: SqueezingSection = field(default_factory=SqueezingSection)
    homodyne: HomodyneSection = field(default_factory=HomodyneSection)
    design: DesignSection = field(default_factory=DesignSection)
    modes: ModesSection = field(default_factory=ModesSection)

    def cavity_geometry(self) -> CavityGeometry:
        c = self.cavity
        return CavityGeometry(
            c.focal_length,
            c.mirror_radius,
            c.L1,
            c.L2,
            c.output_transmission,
            c.extra_loss,
            crystal_length=self.crystal.length,
            crystal_index=self.crystal.signal_index,
            include_crystal_optical_path=c.include_crystal_optical_path,
        )

    def crystal_params(self) -> CrystalParams:
        c = self.crystal
        return CrystalParams(c.length, c.signal_index, c.phase_mismatch, c.gain_scale)

    def pump_profile(self) -> PumpProfile:
        p = self.pump
        return PumpProfile(p.waist, p.wavelength, p.power, p.waist_position)

    def efficiency(self) -> EfficiencyChain:
        s = self.squeezing
        escape = self.cavity.output_transmission / (self.cavity.output_transmission + self.cavity.extra_loss)
        return EfficiencyChain(escape, s.propagation_efficiency, s.detector_efficiency, s.homodyne_visibility)


class _Section:
    """Reads typed values out of one TOML table and rejects unknown keys."""

    def __init__(self, data: dict, name: str, required: bool = False):
        raw = data.get(name)
        if raw is None:
            if required:
                raise ConfigError(name, "section is required")
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(name, "must be a table")
        self.raw = raw
        self.name = name
        self.used: set[str] = set()

    def has(self, key):
        return key in self.raw

    def get(self, key, kind, default=..., positive=False, fraction=False, nonnegative=False):
        self.used.add(key)
        name = f"{self.name}.{key}"
        if key not in self.raw:
            if default is ...:
                raise ConfigError(name, "is required")
            return default
        value = parse_quantity(self.raw[key], kind, name)
        if positive and not value > 0:
            raise ConfigError(name, f"must be positive, got {value:g}")
        if nonnegative and value < 0:
            raise ConfigError(name, f"must be nonnegative, got {value:g}")
        if fraction and not 0 < value <= 1:
            raise ConfigError(name, f"must lie in (0, 1], got {value:g}")
        return value

    def integer(self, key, default=..., minimum=None):
        self.used.add(key)
        name = f"{self.name}.{key}"
        if key not in self.raw:
            if default is ...:
                raise ConfigError(name, "is required")
            return default
        value = self.raw[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise ConfigError(name, f"must be at least {minimum}, got {value}")
        return value

    def flag(self, key, default):
        self.used.add(key)
        value = self.raw.get(key, default)
        if not isinstance(value, bool):
            raise ConfigError(f"{self.name}.{key}", f"expected true or false, got {value!r}")
        return value

    def auto(self, key):
        return self.raw.get(key) == "auto"

    def finish(self):
        unknown = sorted(set(self.raw) - self.used)
        if unknown:
            raise ConfigError(f"{self.name}.{unknown[0]}", "unknown key")


def _cavity(data) -> CavitySection:
    s = _Section(data, "cavity", required=True)
    f = s.get("focal_length", "length", positive=True)
    R = s.get("mirror_radius", "length", positive=True)
    L1_deg, L2_deg = self_imaging_lengths(f, R)
    lengths = []
    for key, deg in (("L1", L1_deg), ("L2", L2_deg)):
        if s.raw.get(key, "self-imaging") == "self-imaging":
            s.used.add(key)
            lengths.append(deg)
        else:
            lengths.append(s.get(key, "length", positive=True))
    by_finesse = s.has("finesse") or s.has("escape_efficiency")
    by_loss = s.has("output_transmission") or s.has("extra_loss")
    if by_finesse and by_loss:
        raise ConfigError("cavity.finesse", "give either finesse/escape_efficiency or output_transmission/extra_loss")
    if by_loss:
        t_out = s.get("output_transmission", "number", nonnegative=True)
        loss = s.get("extra_loss", "number", 0.0, nonnegative=True)
    else:
        finesse = s.get("finesse", "number", positive=True)
        escape = s.get("escape_efficiency", "number", 1.0, fraction=True)
        t_out, loss = losses_from_finesse(finesse, escape)
    if not t_out < 1:
        raise ConfigError("cavity.output_transmission", "must be below 1")
    if not 0 <= loss < 1:
        raise ConfigError("cavity.extra_loss", "must lie in [0, 1)")
    if t_out + loss <= 0:
        raise ConfigError("cavity.output_transmission", "cavity must have nonzero loss")
    include = s.flag("include_crystal_optical_path", False)
    s.finish()
    return CavitySection(f, R, lengths[0], lengths[1], t_out, loss, include)


def _modes_list(value, name) -> tuple[ModeIndex, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(name, "expected a list of [m, n] pairs")
    out = []
    for item in value:
        if (
            not isinstance(item, list)
            or len(item) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in item)
        ):
            raise ConfigError(name, f"bad mode index {item!r}; expected [m, n] with m, n >= 0")
        out.append(ModeIndex(*item))
    return tuple(out)


def build_config(data: dict) -> ExperimentConfig:
    known = {"cavity", "crystal", "pump", "signal", "basis", "squeezing", "homodyne", "design", "modes"}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown section")

    sig = _Section(data, "signal", required=True)
    signal_wavelength = sig.get("wavelength", "length", positive=True)
    sig.finish()

    s = _Section(data, "crystal", required=True)
    crystal = CrystalSection(
        s.get("length", "length", positive=True),
        s.get("signal_index", "number"),
        s.get("phase_mismatch", "wavenumber", 0.0),
        s.get("gain_scale", "number", 1.0, positive=True),
    )
    if not crystal.signal_index > 1:
        raise ConfigError("crystal.signal_index", f"must exceed 1, got {crystal.signal_index:g}")
    s.finish()

    cavity = _cavity(data)

    s = _Section(data, "pump", required=True)
    pump = PumpSection(
        s.get("wavelength", "length", signal_wavelength / 2.0, positive=True),
        s.get("waist", "length", positive=True),
        s.get("power", "power", 1.0, nonnegative=True),
        s.get("waist_position", "length", 0.0),
        s.get("ratio_to_threshold", "number", 0.5),
    )
    if not 0 <= pump.ratio_to_threshold <= 1:
        raise ConfigError("pump.ratio_to_threshold", "must lie in [0, 1]")
    if abs(pump.waist_position) > 0.5 * crystal.length:
        raise ConfigError("pump.waist_position", "pump waist must lie inside the crystal")
    s.finish()
    if abs(pump.wavelength - signal_wavelength / 2.0) > 1e-6 * signal_wavelength:
        log.warning(
            "pump wavelength %.6g m is not half the signal wavelength %.6g m (non-degenerate operation)",
            pump.wavelength, signal_wavelength,
        )

    s = _Section(data, "basis")
    if s.auto("truncation"):
        s.used.add("truncation")
        truncation = None
    else:
        truncation = s.integer("truncation", 20, minimum=0)
    if s.auto("waist"):
        s.used.add("waist")
        basis_waist = None
    else:
        basis_waist = s.get("waist", "length", None, positive=True)
    basis = BasisSection(truncation, basis_waist, s.integer("z_nodes", 33, minimum=1))
    s.finish()

    s = _Section(data, "squeezing")
    target = s.get("target_db", "level", None)
    if target is not None and target > 0:
        raise ConfigError("squeezing.target_db", "squeezing target must be <= 0 dB")
    squeezing = SqueezingSection(
        s.get("analysis_frequency", "frequency", 3e6, nonnegative=True),
        s.get("propagation_efficiency", "number", 1.0, fraction=True),
        s.get("detector_efficiency", "number", 1.0, fraction=True),
        s.get("homodyne_visibility", "number", 1.0, fraction=True),
        target,
        s.integer("target_mode", 0, minimum=0),
        s.get("cutoff", "number", DEFAULT_CUTOFF),
        s.integer("report_modes", 10, minimum=1),
        s.get("spectrum_max_frequency", "frequency", 15e6, positive=True),
        s.integer("spectrum_points", 31, minimum=2),
    )
    if not 0 < squeezing.cutoff < 1:
        raise ConfigError("squeezing.cutoff", "must lie in (0, 1)")
    s.finish()

    s = _Section(data, "homodyne")
    lo_modes = HomodyneSection.lo_modes
    if s.has("lo_modes"):
        s.used.add("lo_modes")
        lo_modes = _modes_list(s.raw["lo_modes"], "homodyne.lo_modes")
    if s.auto("lo_waist"):
        s.used.add("lo_waist")
        lo_waist = None
    else:
        lo_waist = s.get("lo_waist", "length", None, positive=True)
    homodyne = HomodyneSection(
        lo_modes,
        lo_waist,
        s.integer("seed", 0, minimum=0),
        s.integer("window", 10_000, minimum=100),
        s.get("sample_rate", "frequency", 10e6, positive=True),
        s.get("duration", "time", 4.0, positive=True),
        s.integer("sweeps", 10, minimum=2),
        s.integer("bins", 36, minimum=1),
        s.get("calibration_fraction", "number", 0.1, fraction=True),
    )
    if homodyne.calibration_fraction >= 1:
        raise ConfigError("homodyne.calibration_fraction", "must be below 1")
    s.finish()

    s = _Section(data, "design")
    design = DesignSection(
        s.get("dL1_min", "length", -1e-3),
        s.get("dL1_max", "length", 1e-3),
        s.integer("dL1_points", 5, minimum=1),
        s.get("dL2_min", "length", -1e-3),
        s.get("dL2_max", "length", 1e-3),
        s.integer("dL2_points", 21, minimum=1),
        s.integer("max_order", 4, minimum=0),
    )
    s.finish()

    s = _Section(data, "modes")
    modes = ModesSection(
        s.integer("count", 7, minimum=1),
        s.integer("grid_points", 64, minimum=2),
        s.get("extent", "number", 3.0, positive=True),
    )
    s.finish()

    return ExperimentConfig(cavity, crystal, pump, signal_wavelength, basis, squeezing, homodyne, design, modes)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"TOML parse error: {exc}") from exc
    return build_config(data)


_KINDS = {
    "cavity": {"focal_length": "length", "mirror_radius": "length", "L1": "length", "L2": "length"},
    "crystal": {"length": "length", "phase_mismatch": "wavenumber"},
    "pump": {"wavelength": "length", "waist": "length", "power": "power", "waist_position": "length"},
    "basis": {"waist": "length"},
    "squeezing": {"analysis_frequency": "frequency", "target_db": "level", "spectrum_max_frequency": "frequency"},
    "homodyne": {"lo_waist": "length", "sample_rate": "frequency", "duration": "time"},
    "design": {"dL1_min": "length", "dL1_max": "length", "dL2_min": "length", "dL2_max": "length"},
}


def _echo(section: str, obj) -> dict:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        kind = _KINDS.get(section, {}).get(f.name)
        if value is None:
            value = "auto"
        elif isinstance(value, tuple):
            value = [[i.m, i.n] for i in value]
        elif kind is not None:
            value = f"{float(value)!r} {BASE_UNIT[kind]}"
        elif isinstance(value, float):
            value = float(value)
        out[f.name] = value
    return out


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """Every resolved value in SI, in a form :func:`build_config` accepts."""
    out = {
        "signal": {"wavelength": f"{cfg.signal_wavelength!r} m"},
        "cavity": _echo("cavity", cfg.cavity),
        "crystal": _echo("crystal", cfg.crystal),
        "pump": _echo("pump", cfg.pump),
        "basis": _echo("basis", cfg.basis),
        "squeezing": _echo("squeezing", cfg.squeezing),
        "homodyne": _echo("homodyne", cfg.homodyne),
        "design": _echo("design", cfg.design),
        "modes": _echo("modes", cfg.modes),
    }
    if cfg.squeezing.target_db is None:
        del out["squeezing"]["target_db"]
    return out


def resolved_toml(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(resolved_dict(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(resolved_toml(cfg).encode("utf-8")).hexdigest()
