"""JSON run configuration shared by every CLI command.

Unknown keys anywhere in the file are rejected so typos fail loudly. The
manifest a run writes embeds :meth:`RunConfig.to_dict`, which parses back
into an equivalent configuration.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .errors import ConfigError, ValidationError
from .evaluation import ExperimentSpec
from .features import METHODS
from .fleet import (
    DomainScenario,
    FleetSpec,
    fleet_spec_from_dict,
    fleet_spec_to_dict,
    make_paper_scenarios,
    scenario_from_dict,
    scenario_to_dict,
)
from .gfsk import GfskConfig
from .nn import NetworkConfig, desk_preset, full_preset, tiny_preset

PRESETS = {"desk": desk_preset, "full": full_preset, "tiny": tiny_preset}
NN_FIELDS = {f.name for f in dataclasses.fields(NetworkConfig)} - {"n_classes"}

# Named experiment families: train scenarios, test scenarios, methods.
EXPERIMENT_PRESETS = {
    "channel": (["wired-ch1"], ["wired-ch1", "wired-ch2", "wired-ch14", "wired-ch32"], list(METHODS)),
    "environment": (["wired-ch1"], ["wired-ch1", "loc1", "loc2", "loc3", "loc4"], list(METHODS)),
    "receiver": (["rx1"], ["rx1", "rx2"], ["TPD", "TP", "MBED"]),
}


def _strict(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    return d


@dataclass
class ExperimentSettings:
    train_scenarios: List[str] = field(default_factory=lambda: ["wired-ch1"])
    test_scenarios: List[str] = field(default_factory=lambda: ["wired-ch1", "wired-ch2", "wired-ch14", "wired-ch32"])
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    frames_per_device_train: int = 200
    frames_per_device_test: int = 100
    device_counts: List[int] = field(default_factory=lambda: [2, 4, 6, 8, 10])
    timing_runs: int = 3
    timing_epochs: int = 10


@dataclass
class RunConfig:
    seed: int = 0
    threads: int = 1
    gfsk: GfskConfig = field(default_factory=GfskConfig)
    fleet: FleetSpec = field(default_factory=FleetSpec)
    nn: Dict = field(default_factory=lambda: {"preset": "desk"})
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    noiseless: bool = False
    scenarios: Dict[str, DomainScenario] = field(default_factory=dict)

    def scenario_map(self) -> Dict[str, DomainScenario]:
        out = make_paper_scenarios(noiseless=self.noiseless)
        out.update(self.scenarios)
        return out

    def network(self, n_classes: int) -> NetworkConfig:
        opts = dict(self.nn)
        preset = opts.pop("preset", "desk")
        opts.setdefault("seed", self.seed)
        for key in ("conv_blocks", "fc_blocks"):
            if key in opts:
                opts[key] = tuple(tuple(b) for b in opts[key])
        return PRESETS[preset](n_classes, **opts)

    def experiment_spec(self, train_scenario: Optional[str] = None) -> ExperimentSpec:
        e = self.experiment
        return ExperimentSpec(
            fleet=self.fleet,
            train_scenario=train_scenario or e.train_scenarios[0],
            test_scenarios=tuple(e.test_scenarios),
            methods=tuple(e.methods),
            nn_config=self.network(self.fleet.n_devices),
            frames_per_device_train=e.frames_per_device_train,
            frames_per_device_test=e.frames_per_device_test,
            seed=self.seed,
            gfsk=self.gfsk,
            scenarios=self.scenario_map(),
            threads=self.threads,
        )

    def to_dict(self) -> dict:
        g = dataclasses.asdict(self.gfsk)
        g["preamble_bits"] = "".join(str(b) for b in self.gfsk.preamble_bits)
        return {
            "seed": self.seed,
            "threads": self.threads,
            "gfsk": g,
            "fleet": fleet_spec_to_dict(self.fleet),
            "nn": dict(self.nn),
            "experiment": dataclasses.asdict(self.experiment),
            "noiseless": self.noiseless,
            "scenarios": {k: scenario_to_dict(v) for k, v in self.scenarios.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _strict(d, {f.name for f in dataclasses.fields(cls)}, "config")
        try:
            cfg = cls()
            cfg.seed = int(d.get("seed", 0))
            cfg.threads = int(d.get("threads", 1))
            if "gfsk" in d:
                g = dict(_strict(d["gfsk"], {f.name for f in dataclasses.fields(GfskConfig)}, "gfsk"))
                if isinstance(g.get("preamble_bits"), str):
                    g["preamble_bits"] = tuple(int(c) for c in g["preamble_bits"])
                cfg.gfsk = GfskConfig(**g)
            if "fleet" in d:
                cfg.fleet = fleet_spec_from_dict(d["fleet"])
            if "nn" in d:
                nn = dict(_strict(d["nn"], NN_FIELDS | {"preset"}, "nn"))
                if nn.setdefault("preset", "desk") not in PRESETS:
                    raise ConfigError(f"unknown nn preset {nn['preset']!r}")
                cfg.nn = nn
            if "experiment" in d:
                e = dict(_strict(d["experiment"], {f.name for f in dataclasses.fields(ExperimentSettings)},
                                 "experiment"))
                cfg.experiment = ExperimentSettings(**e)
            cfg.noiseless = bool(d.get("noiseless", False))
            cfg.scenarios = {k: scenario_from_dict({**v, "name": k}) for k, v in d.get("scenarios", {}).items()}
            cfg.network(cfg.fleet.n_devices)
        except ConfigError:
            raise
        except (ValidationError, TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(data)


def apply_experiment_preset(cfg: RunConfig, name: str) -> RunConfig:
    if name not in EXPERIMENT_PRESETS:
        raise ConfigError(f"unknown experiment preset {name!r}; choose from {sorted(EXPERIMENT_PRESETS)}")
    trains, tests, methods = EXPERIMENT_PRESETS[name]
    cfg.experiment = dataclasses.replace(cfg.experiment, train_scenarios=list(trains),
                                         test_scenarios=list(tests), methods=list(methods))
    return cfg
