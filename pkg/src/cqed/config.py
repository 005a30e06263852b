"""Structured text configuration (INI sections, key = value).

All frequency-like keys are ordinary frequencies in MHz and are
converted to angular rad/us here, at the boundary.  Environment
variables named CQED_<SECTION>_<KEY> override file values; command-line
flags override both.

Sections and keys:

  [system]      g_mhz, kappa_mhz, gamma_mhz, eps_over_kappa,
                delta_c_mhz, delta_a_mhz, n_atoms
  [mode]        waist_um, wavelength_um, box_halfwidth_x_um,
                box_halfwidth_y_um, z_extent_um
  [beam]        n_eff, detuning_jitter_kappa, zeeman_offset_mhz,
                zeeman_coupling, realizations, seed, contrast
  [trajectory]  duration_us, efficiency, background_per_us, split_ratio
  [correlator]  bin_width_ns, tau_max_us, mode
"""

from __future__ import annotations

import configparser
import hashlib
import os
from pathlib import Path

from .correlator import CorrelatorConfig
from .ensemble import BeamConfig, ModeGeometry
from .errors import InvalidParamsError
from .model import RateParams, mhz_to_angular
from .trajectories import TrajectoryConfig

DEFAULTS = {
    "system": {
        "g_mhz": "3.2",
        "kappa_mhz": "4.5",
        "gamma_mhz": "6.0",
        "eps_over_kappa": "0.05",
        "delta_c_mhz": "0.0",
        "delta_a_mhz": "0.0",
        "n_atoms": "1.0",
    },
    "mode": {
        "waist_um": "25.0",
        "wavelength_um": "0.78",
        "box_halfwidth_x_um": "50.0",
        "box_halfwidth_y_um": "50.0",
        "z_extent_um": "1.56",
    },
    "beam": {
        "n_eff": "1.0",
        "detuning_jitter_kappa": "2.5",
        "zeeman_offset_mhz": "5.0",
        "zeeman_coupling": "1.0",
        "realizations": "200",
        "seed": "1",
        "contrast": "1.0",
    },
    "trajectory": {
        "duration_us": "100000",
        "efficiency": "0.30",
        "background_per_us": "0.0",
        "split_ratio": "0.5",
    },
    "correlator": {
        "bin_width_ns": "20",
        "tau_max_us": "1.0",
        "mode": "cross",
    },
}


class Config:
    """Merged view of defaults, a config file, and environment overrides."""

    def __init__(self, path: str | None = None):
        parser = configparser.ConfigParser()
        parser.read_dict(DEFAULTS)
        self.path = None
        self.raw_text = ""
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise InvalidParamsError(f"config file not found: {p}")
            self.raw_text = p.read_text()
            try:
                parser.read_string(self.raw_text)
            except configparser.Error as exc:
                raise InvalidParamsError(f"bad config file {p}: {exc}")
            self.path = p
        self._apply_env(parser)
        self.parser = parser

    @staticmethod
    def _apply_env(parser):
        for section in parser.sections():
            for key in parser[section]:
                env = f"CQED_{section.upper()}_{key.upper()}"
                if env in os.environ:
                    parser[section][key] = os.environ[env]

    def get(self, section: str, key: str) -> str:
        try:
            return self.parser[section][key]
        except KeyError:
            raise InvalidParamsError(f"missing config key [{section}] {key}")

    def getfloat(self, section: str, key: str) -> float:
        try:
            return float(self.get(section, key))
        except ValueError:
            raise InvalidParamsError(f"[{section}] {key} is not a number")

    def getint(self, section: str, key: str) -> int:
        try:
            return int(self.get(section, key))
        except ValueError:
            raise InvalidParamsError(f"[{section}] {key} is not an integer")

    def content_hash(self) -> str:
        blob = "\n".join(
            f"{s}.{k}={v}" for s in self.parser.sections()
            for k, v in sorted(self.parser[s].items())
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- typed views ----------------------------------------------------
    def rate_params(self, **overrides) -> RateParams:
        vals = {
            "g_mhz": self.getfloat("system", "g_mhz"),
            "kappa_mhz": self.getfloat("system", "kappa_mhz"),
            "gamma_mhz": self.getfloat("system", "gamma_mhz"),
            "eps_over_kappa": self.getfloat("system", "eps_over_kappa"),
            "delta_c_mhz": self.getfloat("system", "delta_c_mhz"),
            "delta_a_mhz": self.getfloat("system", "delta_a_mhz"),
        }
        vals.update({k: v for k, v in overrides.items() if v is not None})
        return RateParams.from_mhz(**vals)

    @property
    def n_atoms(self) -> float:
        return self.getfloat("system", "n_atoms")

    def mode_geometry(self) -> ModeGeometry:
        return ModeGeometry(
            waist_um=self.getfloat("mode", "waist_um"),
            wavelength_um=self.getfloat("mode", "wavelength_um"),
            half_x_um=self.getfloat("mode", "box_halfwidth_x_um"),
            half_y_um=self.getfloat("mode", "box_halfwidth_y_um"),
            z_extent_um=self.getfloat("mode", "z_extent_um"),
        )

    def beam_config(self, seed: int | None = None, n_eff: float | None = None) -> BeamConfig:
        return BeamConfig(
            n_eff=self.getfloat("beam", "n_eff") if n_eff is None else n_eff,
            detuning_jitter_kappa=self.getfloat("beam", "detuning_jitter_kappa"),
            zeeman_offset=mhz_to_angular(self.getfloat("beam", "zeeman_offset_mhz")),
            zeeman_coupling=self.getfloat("beam", "zeeman_coupling"),
            realizations=self.getint("beam", "realizations"),
            seed=self.getint("beam", "seed") if seed is None else seed,
            contrast=self.getfloat("beam", "contrast"),
        )

    def trajectory_config(self, seed: int | None = None, duration_us: float | None = None) -> TrajectoryConfig:
        return TrajectoryConfig(
            duration_us=self.getfloat("trajectory", "duration_us")
            if duration_us is None
            else duration_us,
            efficiency=self.getfloat("trajectory", "efficiency"),
            background_per_us=self.getfloat("trajectory", "background_per_us"),
            split_ratio=self.getfloat("trajectory", "split_ratio"),
            seed=0 if seed is None else seed,
        )

    def correlator_config(self, mode: str | None = None) -> CorrelatorConfig:
        return CorrelatorConfig(
            bin_width_ns=self.getfloat("correlator", "bin_width_ns"),
            tau_max_us=self.getfloat("correlator", "tau_max_us"),
            mode=mode or self.get("correlator", "mode"),
        )

    def echo_sidecar(self, out_path) -> Path:
        """Write the merged configuration next to an output file."""
        out = Path(str(out_path) + ".config.ini")
        with out.open("w") as fh:
            self.parser.write(fh)
        return out
