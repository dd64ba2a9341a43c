"""Scenario files: INI parsing, validation, and reference defaults.

A scenario is a versioned INI file.  validate_config collects every
violation it can find and reports them together instead of stopping at
the first one.  The tunable-susceptance model either comes precomputed
from a [model] section or is fitted from the [circuit] constants over
the signal band.
"""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, replace

from .channel import FrequencyGrid, PathlossModel
from .circuit import (
    FrequencyBand,
    LinearSusceptanceModel,
    VaractorCircuit,
    fit_linear_model,
)
from .network import FOREST, GROUP, QuantizedSet, RisTopology
from .optimize import ContinuousSolverConfig

FORMAT_VERSION = 1
DEFAULT_SIGMA2_DBM = -80.0
DEFAULT_POWER_SWEEP_DBM = (20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)
DEFAULT_Y0 = 0.02  # siemens, 50 ohm reference
ENUMERATION_BIT_CEILING = 20

logger = logging.getLogger(__name__)

_REQUIRED = object()


class ConfigError(ValueError):
    """Invalid scenario file; .violations lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ArchitecturePoint:
    """One surface configuration to evaluate: architecture plus group size."""

    architecture: str
    group_size: int

    def label(self) -> str:
        return f"{self.architecture}:{self.group_size}"


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully validated experiment description."""

    name: str
    grid: FrequencyGrid
    pathloss: PathlossModel
    tap_counts: tuple[int, int, int]
    elements: int
    y0: float
    points: tuple[ArchitecturePoint, ...]
    mode: str
    bits: int | None
    block_size: int | None
    power_sweep_dbm: tuple[float, ...]
    sigma2_dbm: float
    trials: int
    base_seed: int
    model: LinearSusceptanceModel
    solver: ContinuousSolverConfig
    max_sweeps: int
    frequency_independent: bool

    @property
    def sigma2_watt(self) -> float:
        return dbm_to_watt(self.sigma2_dbm)

    def topology(self, point: ArchitecturePoint) -> RisTopology:
        return RisTopology(point.architecture, self.elements, point.group_size)

    def quantization(self) -> QuantizedSet | None:
        if self.mode != "discrete":
            return None
        return QuantizedSet(
            self.bits, self.model.susceptance_min, self.model.susceptance_max
        )


class _Reader:
    """Typed access to a ConfigParser that records problems instead of raising."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.errors: list[str] = []

    def get(self, section, key, cast=str, default=_REQUIRED, notice=None):
        if not self.parser.has_option(section, key):
            if default is _REQUIRED:
                self.errors.append(f"[{section}] missing required key '{key}'")
                return None
            if notice is not None:
                logger.info(notice)
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return cast(raw)
        except (TypeError, ValueError):
            self.errors.append(
                f"[{section}] {key} = {raw!r} is not a valid {cast.__name__}"
            )
            return None

    def complain(self, message: str) -> None:
        self.errors.append(message)


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _parse_floats(raw: str) -> tuple[float, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ValueError(raw)
    return tuple(float(p) for p in parts)


def _parse_points(raw: str) -> tuple[ArchitecturePoint, ...]:
    points = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        arch, _, size = chunk.partition(":")
        arch = arch.strip().lower()
        if arch not in (GROUP, FOREST) or not size.strip().isdigit():
            raise ValueError(chunk)
        points.append(ArchitecturePoint(arch, int(size)))
    if not points:
        raise ValueError(raw)
    return tuple(points)


def validate_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario; raises ConfigError listing all violations."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc
    r = _Reader(parser)

    for section in ("scenario", "grid", "surface", "channel"):
        if not parser.has_section(section):
            r.complain(f"missing section [{section}]")
    if r.errors:
        raise ConfigError(r.errors)

    version = r.get("scenario", "format_version", int)
    if version is not None and version != FORMAT_VERSION:
        r.complain(
            f"[scenario] format_version {version} unsupported "
            f"(expected {FORMAT_VERSION})"
        )
    name = r.get("scenario", "name", str, default="unnamed")
    trials = r.get("scenario", "trials", int, default=20)
    base_seed = r.get("scenario", "base_seed", int, default=1)
    mode = r.get("scenario", "mode", str, default="continuous")
    freq_independent = r.get(
        "scenario", "frequency_independent", _parse_bool, default=False
    )

    carrier = r.get("grid", "carrier_hz", float)
    bandwidth = r.get("grid", "bandwidth_hz", float)
    subcarriers = r.get("grid", "subcarriers", int)

    elements = r.get("surface", "elements", int)
    y0 = r.get("surface", "y0", float, default=DEFAULT_Y0)
    points = r.get("surface", "points", _parse_points)

    pathloss_args = {}
    for key, cast in (
        ("reference_gain_db", float),
        ("distance_rt", float),
        ("distance_ri", float),
        ("distance_it", float),
        ("exponent_rt", float),
        ("exponent_ri", float),
        ("exponent_it", float),
    ):
        pathloss_args[key] = r.get("channel", key, cast)
    taps = tuple(
        r.get("channel", f"taps_{link}", int, default=16) for link in ("rt", "ri", "it")
    )

    if parser.has_section("power"):
        sweep = r.get("power", "sweep_dbm", _parse_floats, default=DEFAULT_POWER_SWEEP_DBM)
        sigma2_dbm = r.get(
            "power",
            "sigma2_dbm",
            float,
            default=DEFAULT_SIGMA2_DBM,
            notice=f"sigma2_dbm not set; defaulting to {DEFAULT_SIGMA2_DBM} dBm",
        )
    else:
        logger.info(
            "no [power] section; defaulting sweep to %s dBm and sigma2 to %s dBm",
            DEFAULT_POWER_SWEEP_DBM,
            DEFAULT_SIGMA2_DBM,
        )
        sweep = DEFAULT_POWER_SWEEP_DBM
        sigma2_dbm = DEFAULT_SIGMA2_DBM

    bits = None
    block_size = None
    if mode == "discrete":
        if parser.has_section("quantization"):
            bits = r.get("quantization", "bits", int)
            block_size = r.get("quantization", "block_size", int, default=None)
        else:
            r.complain("mode = discrete requires a [quantization] section")
    elif mode != "continuous":
        r.complain(f"[scenario] mode must be continuous or discrete, got {mode!r}")

    solver = ContinuousSolverConfig()
    max_sweeps = 30
    if parser.has_section("solver"):
        solver_args = {}
        for key, cast in (
            ("max_iterations", int),
            ("convergence_tol", float),
            ("restarts", int),
        ):
            value = r.get("solver", key, cast, default=None)
            if value is not None:
                solver_args[key] = value
        max_sweeps = r.get("solver", "max_sweeps", int, default=30)
        try:
            solver = replace(solver, **solver_args)
        except ValueError as exc:
            r.complain(f"[solver] {exc}")

    model = _resolve_model(r, parser, carrier, bandwidth)

    # Everything below is semantic validation on successfully parsed values.
    if carrier is not None and carrier <= 0:
        r.complain("[grid] carrier_hz must be positive")
    if bandwidth is not None and (bandwidth <= 0 or (carrier and bandwidth >= 2 * carrier)):
        r.complain("[grid] bandwidth_hz must be positive and below twice the carrier")
    if subcarriers is not None and subcarriers < 1:
        r.complain("[grid] subcarriers must be >= 1")
    if elements is not None and elements < 1:
        r.complain("[surface] elements must be >= 1")
    if y0 is not None and y0 <= 0:
        r.complain("[surface] y0 must be positive")
    if points and elements:
        for point in points:
            if point.group_size < 1 or elements % point.group_size != 0:
                r.complain(
                    f"[surface] group size {point.group_size} does not divide "
                    f"elements {elements}"
                )
    if None not in pathloss_args.values():
        for key in ("distance_rt", "distance_ri", "distance_it"):
            if pathloss_args[key] <= 0:
                r.complain(f"[channel] {key} must be positive")
    if any(t is not None and t < 1 for t in taps):
        r.complain("[channel] tap counts must be >= 1")
    if subcarriers and any(t and t > subcarriers for t in taps):
        r.complain("[channel] tap counts must not exceed subcarriers")
    if trials is not None and trials < 1:
        r.complain("[scenario] trials must be >= 1")
    if bits is not None:
        if bits < 1:
            r.complain("[quantization] bits must be >= 1")
        else:
            if block_size is None:
                block_size = max(1, 4 // bits)
            if block_size < 1:
                r.complain("[quantization] block_size must be >= 1")
            elif bits * block_size > ENUMERATION_BIT_CEILING:
                r.complain(
                    f"[quantization] bits*block_size = {bits * block_size} exceeds "
                    f"the enumeration ceiling of {ENUMERATION_BIT_CEILING}"
                )

    if r.errors:
        raise ConfigError(r.errors)

    return ScenarioConfig(
        name=name,
        grid=FrequencyGrid(carrier, bandwidth, subcarriers),
        pathloss=PathlossModel(**pathloss_args),
        tap_counts=taps,
        elements=elements,
        y0=y0,
        points=points,
        mode=mode,
        bits=bits,
        block_size=block_size,
        power_sweep_dbm=tuple(sweep),
        sigma2_dbm=sigma2_dbm,
        trials=trials,
        base_seed=base_seed,
        model=model,
        solver=solver,
        max_sweeps=max_sweeps,
        frequency_independent=freq_independent,
    )


def _resolve_model(r, parser, carrier, bandwidth):
    """Model from [model] constants if present, else fitted from [circuit]."""
    if carrier is None or bandwidth is None:
        return None
    omega_c = 2 * math.pi * carrier
    if parser.has_section("model"):
        args = {}
        for key in (
            "f1_slope",
            "f1_intercept",
            "f2_slope",
            "f2_intercept",
            "susceptance_min",
            "susceptance_max",
        ):
            args[key] = r.get("model", key, float)
        if None in args.values():
            return None
        try:
            return LinearSusceptanceModel(omega_c=omega_c, **args)
        except ValueError as exc:
            r.complain(f"[model] {exc}")
            return None
    if not parser.has_section("circuit"):
        r.complain("need either a [model] or a [circuit] section")
        return None
    circuit, band = _read_circuit_band(r, carrier, bandwidth)
    if circuit is None or band is None:
        return None
    try:
        return fit_linear_model(circuit, omega_c, band)
    except ValueError as exc:
        r.complain(f"[circuit] fit failed: {exc}")
        return None


def _read_circuit_band(r, carrier, bandwidth):
    """Read the varactor constants and fit band from the [circuit] section."""
    args = {}
    for key in ("l1", "l2", "c_min", "c_max"):
        args[key] = r.get("circuit", key, float)
    band_lo = r.get("circuit", "band_lo_hz", float, default=carrier - bandwidth / 2)
    band_hi = r.get("circuit", "band_hi_hz", float, default=carrier + bandwidth / 2)
    samples = r.get("circuit", "band_samples", int, default=61)
    if None in args.values() or band_lo is None or band_hi is None or samples is None:
        return None, None
    try:
        circuit = VaractorCircuit(**args)
        band = FrequencyBand(band_lo, band_hi, samples)
    except ValueError as exc:
        r.complain(f"[circuit] {exc}")
        return None, None
    return circuit, band


def load_fit_inputs(text: str):
    """Circuit, fit band, and center omega for the fit-circuit command."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc
    r = _Reader(parser)
    for section in ("grid", "circuit"):
        if not parser.has_section(section):
            r.complain(f"missing section [{section}]")
    if r.errors:
        raise ConfigError(r.errors)
    carrier = r.get("grid", "carrier_hz", float)
    bandwidth = r.get("grid", "bandwidth_hz", float)
    if r.errors:
        raise ConfigError(r.errors)
    circuit, band = _read_circuit_band(r, carrier, bandwidth)
    if r.errors or circuit is None:
        raise ConfigError(r.errors or ["[circuit] section incomplete"])
    return circuit, band, 2 * math.pi * carrier


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return validate_config(fh.read())


EXAMPLE_CONFIG = """\
; BD-RIS wideband OFDM scenario, format version 1.
[scenario]
format_version = 1
name = reference-defaults
trials = 20
base_seed = 1
mode = continuous
frequency_independent = true

[grid]
carrier_hz = 2.4e9
bandwidth_hz = 300e6
subcarriers = 64

[surface]
elements = 36
y0 = 0.02
points = group:1, group:3, group:6, forest:3

[channel]
reference_gain_db = -30
distance_rt = 33
distance_ri = 5
distance_it = 30
exponent_rt = 3.8
exponent_ri = 2.2
exponent_it = 2.5
taps_rt = 16
taps_ri = 16
taps_it = 16

[power]
sweep_dbm = 20 25 30 35 40 45 50
sigma2_dbm = -80

[circuit]
l1 = 2.5e-9
l2 = 0.7e-9
c_min = 0.2e-12
c_max = 3e-12
band_lo_hz = 2.25e9
band_hi_hz = 2.55e9
"""
