"""Experiment configuration: INI-style files plus command-line overrides.

Example file::

    [model]
    photon_energy = 8.27
    kappa = 0.01

    [run]
    n_trajectories = 500
    master_seed = 7
    duration = 250
    curves = surrogate

    [sweep]
    n_values = 0, 2, 8
    gamma_values = default

Keys in ``[model]`` are the :class:`~moltc.hamiltonian.ModelParams` fields
(except ``n_emitters`` and ``gamma``, which come from the sweep lists or from
``[run]``).  ``gamma_values = default`` selects 24 log-spaced rates between
1e-3 and 1.26 1/fs plus zero.
"""
from __future__ import annotations

import configparser
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .hamiltonian import ModelParams

log = logging.getLogger(__name__)

GAMMA_WARN = 1.26
PAPER_N_VALUES = (0, 1, 2, 3, 5, 8, 13, 22, 36, 60)

PROFILES = {
    "desk": dict(n_trajectories=200, duration=100.0, n_values=(0, 2, 8), n_gamma=4),
    "paper": dict(n_trajectories=2500, duration=500.0, n_values=PAPER_N_VALUES, n_gamma=24),
}

_MODEL_KEYS = ("photon_energy", "emitter_energy", "mu_a", "field_base", "reduced_mass", "kappa", "dt")


def default_gamma_grid(n_points: int = 24) -> tuple:
    """Zero plus ``n_points`` log-spaced rates in [1e-3, 1.26] 1/fs."""
    return (0.0,) + tuple(float(g) for g in np.geomspace(1e-3, GAMMA_WARN, n_points))


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams = field(default_factory=ModelParams)
    curves: str = "surrogate"
    n_values: tuple = (0, 2, 8)
    gamma_values: tuple = field(default_factory=lambda: default_gamma_grid(4))
    n_trajectories: int = 200
    master_seed: int = 0
    workers: int | None = None
    output: str = "moltc-output"
    profile: str = "desk"
    stride: int = 100
    engine: str = "exact"

    def __post_init__(self):
        if not self.n_values or not self.gamma_values:
            raise ConfigurationError("sweep lists must not be empty")
        if any(int(n) != n or n < 0 for n in self.n_values):
            raise ConfigurationError("N values must be non-negative integers")
        if any(not np.isfinite(g) or g < 0 for g in self.gamma_values):
            raise ConfigurationError("dephasing rates must be finite and non-negative")
        if any(g > GAMMA_WARN for g in self.gamma_values):
            log.warning("dephasing rates above %.2f 1/fs exceed 10%% of the cavity frequency", GAMMA_WARN)
        if self.n_trajectories < 1:
            raise ConfigurationError("n_trajectories must be at least 1")
        if self.master_seed < 0:
            raise ConfigurationError("master_seed must be non-negative")
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.profile not in PROFILES:
            raise ConfigurationError(f"unknown profile {self.profile!r}")
        if self.stride < 1:
            raise ConfigurationError("stride must be at least 1")

    def replace(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)

    def echo(self) -> list:
        """``key = value`` lines describing everything that affects results.

        The worker count and output directory are left out on purpose: they
        never change the numbers, and keeping them out keeps files from runs
        with different worker counts byte-identical.
        """
        lines = [f"model.{k} = {v!r}" for k, v in asdict(self.model).items()
                 if k not in ("n_emitters", "gamma")]
        for f in fields(self):
            if f.name in ("model", "workers", "output"):
                continue
            lines.append(f"{f.name} = {getattr(self, f.name)!r}")
        return lines


def _floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.replace(";", ",").split(",") if x.strip())


def profile_defaults(profile: str) -> dict:
    if profile not in PROFILES:
        raise ConfigurationError(f"unknown profile {profile!r}")
    p = PROFILES[profile]
    return dict(n_trajectories=p["n_trajectories"], n_values=tuple(p["n_values"]),
                gamma_values=default_gamma_grid(p["n_gamma"]), profile=profile,
                model=ModelParams(duration=p["duration"]))


def read_config_file(path) -> dict:
    """Parse an INI file into keyword overrides for :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser()
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} not found")
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    known = {"model", "run", "sweep"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigurationError(f"unknown config sections: {', '.join(sorted(unknown))}")
    out: dict = {"model": {}}
    try:
        if parser.has_section("model"):
            for key, value in parser.items("model"):
                if key not in _MODEL_KEYS + ("duration",):
                    raise ConfigurationError(f"unknown [model] key {key!r}")
                out["model"][key] = float(value)
        if parser.has_section("run"):
            for key, value in parser.items("run"):
                if key in ("n_trajectories", "master_seed", "workers", "stride"):
                    out[key] = int(value)
                elif key in ("curves", "output", "profile", "engine"):
                    out[key] = value.strip()
                elif key == "duration":
                    out["model"]["duration"] = float(value)
                elif key == "n_emitters":
                    out["n_values"] = (int(value),)
                elif key == "gamma":
                    out["gamma_values"] = (float(value),)
                else:
                    raise ConfigurationError(f"unknown [run] key {key!r}")
        if parser.has_section("sweep"):
            for key, value in parser.items("sweep"):
                if key == "n_values":
                    out["n_values"] = _ints(value)
                elif key == "gamma_values":
                    out["gamma_values"] = (default_gamma_grid() if value.strip() == "default"
                                           else _floats(value))
                else:
                    raise ConfigurationError(f"unknown [sweep] key {key!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad value in {path}: {exc}") from exc
    return out


def build_config(profile: str = "desk", file_overrides: dict | None = None,
                 overrides: dict | None = None) -> ExperimentConfig:
    """Profile defaults, then file values, then command-line values."""
    file_overrides = dict(file_overrides or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    profile = overrides.get("profile", file_overrides.get("profile", profile))
    base = profile_defaults(profile)
    model_kw = asdict(base.pop("model"))
    model_kw.update(file_overrides.pop("model", {}))
    model_kw.update(overrides.pop("model", {}))
    merged = {**base, **file_overrides, **overrides}
    model = ModelParams(**model_kw)
    return ExperimentConfig(model=model, **merged)
