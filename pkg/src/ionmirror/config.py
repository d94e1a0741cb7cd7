"""Run configuration: TOML file with strict keys, paper-valued defaults.

Every physical quantity carries its unit in the key name.  Unknown sections
or keys are rejected with the full key path, so typos fail loudly instead of
silently running defaults.  The built-in defaults reproduce the published
experiment; ``--preset paper`` on the command line is an explicit way of
requesting them.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import radiometry
from .protocol import (
    SIGMA_MINUS_BEAM,
    SIGMA_PLUS_BEAM,
    ChainStage,
    DetectionChain,
    PulseSequence,
    Stage,
)
from .radiometry import ApertureGeometry, PolarizerSetting, TransitionKind


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


DEFAULTS: dict = {
    "run": {
        "seed": 1,
        "out_dir": "out",
    },
    "geometry": {
        "width_um": 80.0,
        "length_um": 127.0,
        "ion_height_um": 59.6,
        "quantization_axis_deg": 45.0,  # angle to the length axis, in plane
        "iris_na": 0.0,  # 0 disables the iris
    },
    "optics": {
        "wavelength_nm": 370.0,
        "focal_length_um": 59.6,
        "reflectivity": 0.92,
        "levels": 4,
        "zone_period_threshold_nm": 0.0,  # 0 = solve for 50% design efficiency
        "as_built_steps": False,
        "pitch_nm": 100.0,
        "grid": 2048,
        "pad": 4.0,
        "apodization": "emission",
    },
    "protocol": {
        "trials": 184000,
        "scattering_rate_mhz": 50.0,
        "p_dark": 0.005,
        "repump": "stage",
        "laser_impurity": 0.0,
        "record": "detected",
        "cool_ns": 500.0,
        "pump_ns": 500.0,
        "wait_ns": 750.0,
        "gate_ns": 1000.0,
        "pulse_start_ns": 250.0,
        "pulse_ns": 250.0,
        "reset_ns": 500.0,
    },
    "chain": {
        "collection_mode": "paper",  # "paper": quoted fractions + iris stage; "radiometry": computed
        "pi_collection": 0.174,
        "sigma_collection": 0.113,
        "diffraction": 0.333,
        "iris_transmission": 0.50,
        "other_optics": 0.76,
        "detector_qe": 0.19,
        "polarizer_mode": "ideal",  # "ideal", "radiometry", "none"
        "background_cps": 0.0,
    },
    "correlation": {
        "bin_width_ns": 25.0,
        "window_ns": 17875.0,  # 5.5 periods of the default 3250 ns cycle
        "n_side_peaks": 5,
        "peak_window_ns": 1000.0,
    },
    "fiber": {
        "waist_nm": 1750.0,
        "transmission": 0.80,
        "throughput_measured": 0.57,
    },
    "budget": {
        "measured_counts": 770,
        "protocol_trials": 184000,
        "iris_transmission": 0.50,
        "iris_rel_uncertainty": 0.10,
        "detector_qe": 0.19,
        "other_optics": 0.76,
        "pi_collection": 0.174,
        "fiber_throughput": 0.57,
        "fiber_throughput_rel_uncertainty": 0.07,
        "fiber_transmission": 0.80,
        "other_optics_fiber": 0.917,  # 8.3% losses variant of the total
        "previous_best": 0.014,
        "spatial_overlap": 0.98,
        "m2_h": 1.36,
        "m2_v": 1.54,
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration tree plus the file it came from (if any)."""

    data: dict
    source: str | None = None

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    @property
    def seed(self) -> int:
        return int(self.data["run"]["seed"])

    @property
    def out_dir(self) -> str:
        return self.data["run"]["out_dir"]


def _merge_checked(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{here} must be a table")
            out[key] = _merge_checked(base[key], val, here)
        else:
            if isinstance(val, dict):
                raise ConfigError(f"{here} must be a value, not a table")
            out[key] = val
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, overlaid by a TOML file, overlaid by programmatic overrides."""
    data = copy.deepcopy(DEFAULTS)
    source = None
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            with open(p, "rb") as fh:
                user = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        data = _merge_checked(data, user)
        source = str(p)
    if overrides:
        data = _merge_checked(data, overrides)
    _validate(data)
    return RunConfig(data=data, source=source)


def _validate(data: dict):
    g = data["geometry"]
    for key in ("width_um", "length_um", "ion_height_um"):
        if g[key] <= 0:
            raise ConfigError(f"geometry.{key} must be positive")
    if not 0.0 <= g["iris_na"] <= 1.0:
        raise ConfigError("geometry.iris_na must be in [0, 1]")
    o = data["optics"]
    if o["apodization"] not in ("emission", "uniform"):
        raise ConfigError("optics.apodization must be 'emission' or 'uniform'")
    if o["levels"] < 2:
        raise ConfigError("optics.levels must be >= 2")
    p = data["protocol"]
    if p["repump"] not in ("stage", "cycle"):
        raise ConfigError("protocol.repump must be 'stage' or 'cycle'")
    if p["record"] not in ("detected", "eligible", "all", "none"):
        raise ConfigError("protocol.record mode unknown")
    if p["pulse_start_ns"] + p["pulse_ns"] > p["gate_ns"]:
        raise ConfigError("protocol pulse must fit inside the gate")
    c = data["chain"]
    if c["collection_mode"] not in ("paper", "radiometry"):
        raise ConfigError("chain.collection_mode must be 'paper' or 'radiometry'")
    if c["polarizer_mode"] not in ("ideal", "radiometry", "none"):
        raise ConfigError("chain.polarizer_mode unknown")
    corr = data["correlation"]
    if corr["bin_width_ns"] <= 0 or corr["window_ns"] <= 0:
        raise ConfigError("correlation bins and window must be positive")


# ---------------------------------------------------------------------------
# Builders wiring config sections to module objects
# ---------------------------------------------------------------------------


def build_aperture(cfg: RunConfig, iris_na: float | None = None) -> ApertureGeometry:
    g = cfg["geometry"]
    ang = math.radians(g["quantization_axis_deg"])
    na = iris_na if iris_na is not None else (g["iris_na"] or None)
    return ApertureGeometry(
        width_um=g["width_um"],
        length_um=g["length_um"],
        ion_height_um=g["ion_height_um"],
        quantization_axis=(math.sin(ang), math.cos(ang), 0.0),
        iris_na=na,
    )


def build_sequence(cfg: RunConfig) -> PulseSequence:
    p = cfg["protocol"]
    return PulseSequence(
        stages=(
            Stage("cool", p["cool_ns"], frozenset({SIGMA_PLUS_BEAM, SIGMA_MINUS_BEAM})),
            Stage("pump", p["pump_ns"], frozenset({SIGMA_MINUS_BEAM})),
            Stage("wait", p["wait_ns"]),
            Stage(
                "detect",
                p["gate_ns"],
                frozenset({SIGMA_PLUS_BEAM}),
                detection_gate=True,
                beam_window_ns=(p["pulse_start_ns"], p["pulse_start_ns"] + p["pulse_ns"]),
            ),
            Stage("reset", p["reset_ns"]),
        )
    )


def build_chain(cfg: RunConfig) -> DetectionChain:
    """Detection chain from config, optionally computing the polarization and
    iris-restricted collection factors from the emission geometry."""
    c = cfg["chain"]
    pi, sig = TransitionKind.PI, TransitionKind.SIGMA_PLUS
    stages: list[ChainStage] = []
    if c["collection_mode"] == "radiometry":
        aperture = build_aperture(cfg)
        stages.append(
            ChainStage(
                "collection",
                {
                    pi: radiometry.collection_fraction(pi, aperture),
                    sig: radiometry.collection_fraction(sig, aperture),
                },
            )
        )
        stages.append(ChainStage("diffraction", c["diffraction"]))
    else:
        stages.append(ChainStage("collection", {pi: c["pi_collection"], sig: c["sigma_collection"]}))
        stages.append(ChainStage("diffraction", c["diffraction"]))
        stages.append(ChainStage("iris", c["iris_transmission"]))
    stages.append(ChainStage("other_optics", c["other_optics"]))
    stages.append(ChainStage("detector_qe", c["detector_qe"]))
    if c["polarizer_mode"] == "ideal":
        stages.append(ChainStage("polarizer", {pi: 1.0, sig: 0.0}))
    elif c["polarizer_mode"] == "radiometry":
        aperture = build_aperture(cfg)
        pol = radiometry.pi_aligned_polarizer(aperture)
        stages.append(
            ChainStage(
                "polarizer",
                {
                    pi: radiometry.polarizer_transmission(pi, aperture, pol),
                    sig: radiometry.polarizer_transmission(sig, aperture, pol),
                },
            )
        )
    return DetectionChain(stages=tuple(stages), background_rate_cps=c["background_cps"])


def build_polarizer(cfg: RunConfig) -> PolarizerSetting:
    return radiometry.pi_aligned_polarizer(build_aperture(cfg))
