"""Experiment configuration read from TOML files.

Example::

    model = "bm3"
    x0 = [0.0, 0.0, 0.0]
    n_paths = 2000
    master_seed = 12345
    output = "runs/bm3"

    [sim]
    h = 0.01
    t_max = 50.0

    [params]
    f = "inv-quartic"

``[sim]`` takes any SimConfig field except ``seed`` (derived from
``master_seed`` and the component label); ``[params]`` holds
command-specific options.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli

from ..rng import derive_seed
from ..sde import SimConfig

SIM_FIELDS = {f.name for f in dataclasses.fields(SimConfig)} - {"seed", "path_index"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: Optional[str] = None
    x0: Optional[list] = None
    n_paths: int = 1000
    master_seed: int = 20240607
    output: str = "runs/out"
    sim: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.sim) - SIM_FIELDS
        if unknown:
            raise ConfigError(f"unknown [sim] keys: {sorted(unknown)}")
        if int(self.n_paths) < 1:
            raise ConfigError("n_paths must be >= 1")
        self.n_paths = int(self.n_paths)
        self.master_seed = int(self.master_seed)

    def sim_config(self, label: str, **overrides) -> SimConfig:
        kw = dict(self.sim)
        kw.update(overrides)
        if "level_radii" in kw and kw["level_radii"] is not None:
            kw["level_radii"] = tuple(kw["level_radii"])
        if "checkpoints" in kw:
            kw["checkpoints"] = tuple(kw["checkpoints"])
        for k in ("t_max", "r_trunc", "max_step"):
            if isinstance(kw.get(k), str):
                kw[k] = float(kw[k])
        return SimConfig(seed=derive_seed(self.master_seed, label), **kw)

    def to_dict(self) -> dict:
        sim = {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in sorted(self.sim.items())}
        return {"model": self.model, "x0": self.x0, "n_paths": self.n_paths, "master_seed": self.master_seed,
                "output": self.output, "sim": sim, "params": dict(sorted(self.params.items()))}


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    return ExperimentConfig(**raw)


def config_from_json(path) -> ExperimentConfig:
    """Re-create a config from a ``config.json`` written by a previous run."""
    raw = json.loads(Path(path).read_text())
    raw["sim"] = {k: (math.inf if v == "inf" else v) for k, v in raw.get("sim", {}).items()}
    return ExperimentConfig(**raw)
