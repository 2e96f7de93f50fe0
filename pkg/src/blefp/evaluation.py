"""Cross-domain experiments: accuracy grids, confusion matrices, timing."""

from __future__ import annotations

import csv
import dataclasses
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CountExceedsFleet, LengthMismatch, ValidationError
from .features import METHODS, WindowSpec, extract, stack, window_length
from .fleet import DomainScenario, FleetSpec, LabeledDataset, generate_dataset, make_paper_scenarios, sample_fleet
from .gfsk import GfskConfig
from .nn import NetworkConfig, desk_preset, predict, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentSpec:
    fleet: FleetSpec = field(default_factory=FleetSpec)
    train_scenario: str = "wired-ch1"
    test_scenarios: Tuple[str, ...] = ("wired-ch1", "wired-ch32")
    methods: Tuple[str, ...] = METHODS
    nn_config: NetworkConfig = field(default_factory=lambda: desk_preset(2))
    frames_per_device_train: int = 200
    frames_per_device_test: int = 100
    seed: int = 0
    gfsk: GfskConfig = field(default_factory=GfskConfig)
    scenarios: Optional[Dict[str, DomainScenario]] = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "test_scenarios", tuple(dict.fromkeys(self.test_scenarios)))
        object.__setattr__(self, "methods", tuple(m.upper() for m in self.methods))
        if not self.methods:
            raise ValidationError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValidationError(f"unknown methods {bad}")
        known = self.scenario_map()
        for name in (self.train_scenario,) + self.test_scenarios:
            if name not in known:
                raise ValidationError(f"unknown scenario {name!r}")
        if not self.test_scenarios:
            raise ValidationError("at least one test scenario is required")
        if self.frames_per_device_train < 1 or self.frames_per_device_test < 1:
            raise ValidationError("frames per device must be >= 1")

    def scenario_map(self) -> Dict[str, DomainScenario]:
        return self.scenarios if self.scenarios is not None else make_paper_scenarios()

    def network(self, n_classes: int) -> NetworkConfig:
        return dataclasses.replace(self.nn_config, n_classes=n_classes)


@dataclass
class ResultTable:
    train_scenario: str
    n_classes: int
    accuracy: Dict[Tuple[str, str], float] = field(default_factory=dict)
    confusion: Dict[Tuple[str, str], np.ndarray] = field(default_factory=dict)
    timing: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def methods(self) -> List[str]:
        return list(dict.fromkeys(m for m, _ in self.accuracy))

    def scenarios(self) -> List[str]:
        return list(dict.fromkeys(s for _, s in self.accuracy))


def confusion(predictions, labels, n_classes: int) -> np.ndarray:
    """``counts[i, j]`` = number of samples with label i predicted as j."""
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if p.size != y.size:
        raise LengthMismatch(f"{p.size} predictions for {y.size} labels")
    if p.size and (min(p.min(), y.min()) < 0 or max(p.max(), y.max()) >= n_classes):
        raise ValidationError("class index outside [0, n_classes)")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y, p), 1)
    return counts


def accuracy_from_confusion(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def _derived_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(seed), *tags]).generate_state(1)[0])


def _features(frames, method: str, w: WindowSpec, length: Optional[int] = None) -> np.ndarray:
    return stack([extract(f, method, w) for f in frames], length=length if method == "RAWIQ" else None)


def _datasets(spec: ExperimentSpec, fleet) -> Tuple[LabeledDataset, Dict[str, LabeledDataset]]:
    scen = spec.scenario_map()
    train_ds = generate_dataset(fleet, scen[spec.train_scenario], spec.frames_per_device_train, spec.gfsk,
                                _derived_seed(spec.seed, 0), spec.threads)
    tests = {name: generate_dataset(fleet, scen[name], spec.frames_per_device_test, spec.gfsk,
                                    _derived_seed(spec.seed, 1 + j), spec.threads)
             for j, name in enumerate(spec.test_scenarios)}
    seen = set(train_ds.frame_seeds)
    for ds in tests.values():
        if seen.intersection(ds.frame_seeds):
            raise ValidationError("train and test sets share frame seeds")
    return train_ds, tests


def _evaluate(spec: ExperimentSpec, train_ds: LabeledDataset, tests: Dict[str, LabeledDataset],
              n_classes: int) -> ResultTable:
    w = window_length(spec.gfsk)
    table = ResultTable(spec.train_scenario, n_classes)
    cfg = spec.network(n_classes)
    for method in spec.methods:
        t0 = time.perf_counter()
        x_train = _features(train_ds.frames, method, w)
        t1 = time.perf_counter()
        model = train(x_train, train_ds.labels, cfg)
        t2 = time.perf_counter()
        infer = 0.0
        for name, ds in tests.items():
            x_test = _features(ds.frames, method, w, length=x_train.shape[2])
            t3 = time.perf_counter()
            pred = predict(model, x_test)
            infer += time.perf_counter() - t3
            cm = confusion(pred, ds.labels, n_classes)
            table.confusion[(method, name)] = cm
            table.accuracy[(method, name)] = accuracy_from_confusion(cm)
        table.timing[method] = {"preprocess_s": t1 - t0, "train_s": t2 - t1, "inference_s": infer}
        log.info("%s: %s", method, {s: round(a, 3) for (m, s), a in table.accuracy.items() if m == method})
    return table


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Train one model per method on the train scenario, test on each test scenario."""
    fleet = sample_fleet(spec.fleet)
    train_ds, tests = _datasets(spec, fleet)
    return _evaluate(spec, train_ds, tests, len(fleet))


def run_experiment_seeds(spec: ExperimentSpec, seeds: Sequence[int]) -> Dict[Tuple[str, str], float]:
    """Mean accuracy over several experiment seeds (fleet held fixed)."""
    runs = [run_experiment(dataclasses.replace(spec, seed=s)).accuracy for s in seeds]
    return {k: float(np.mean([r[k] for r in runs])) for k in runs[0]}


def scalability_sweep(spec: ExperimentSpec, device_counts: Sequence[int]) -> Dict[int, ResultTable]:
    """Evaluate nested device subsets: each smaller set is a prefix of the larger."""
    counts = list(device_counts)
    if any(c > spec.fleet.n_devices for c in counts):
        raise CountExceedsFleet(f"counts {counts} exceed fleet size {spec.fleet.n_devices}")
    if any(c < 2 for c in counts):
        raise ValidationError("device counts must be >= 2")
    fleet = sample_fleet(spec.fleet)
    train_ds, tests = _datasets(spec, fleet)
    out = {}
    for c in counts:
        ids = range(c)
        out[c] = _evaluate(spec, train_ds.subset(ids), {k: v.subset(ids) for k, v in tests.items()}, c)
    return out


def timing_report(spec: ExperimentSpec, runs: int = 3, epochs: int = 10) -> Dict[str, Dict[str, float]]:
    """Median wall-clock seconds per phase and method.

    ``preprocess_s`` is per frame; ``train_s`` covers ``epochs`` epochs on the
    full training set; ``inference_s`` covers the whole first test set.
    """
    fleet = sample_fleet(spec.fleet)
    train_ds, tests = _datasets(spec, fleet)
    test_ds = tests[spec.test_scenarios[0]]
    w = window_length(spec.gfsk)
    cfg = dataclasses.replace(spec.network(len(fleet)), epochs=epochs)
    report = {}
    for method in spec.methods:
        pre, fit, inf = [], [], []
        for _ in range(runs):
            t0 = time.perf_counter()
            x_train = _features(train_ds.frames, method, w)
            pre.append((time.perf_counter() - t0) / len(train_ds.frames))
            t0 = time.perf_counter()
            model = train(x_train, train_ds.labels, cfg)
            fit.append(time.perf_counter() - t0)
            x_test = _features(test_ds.frames, method, w, length=x_train.shape[2])
            t0 = time.perf_counter()
            predict(model, x_test)
            inf.append(time.perf_counter() - t0)
        report[method] = {"preprocess_s": statistics.median(pre), "train_s": statistics.median(fit),
                          "inference_s": statistics.median(inf)}
    return report


def write_accuracy_grids(tables: Sequence[ResultTable], out_dir) -> List[Path]:
    """One CSV per method: rows are train scenarios, columns test scenarios."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    methods = list(dict.fromkeys(m for t in tables for m in t.methods()))
    for method in methods:
        cols = list(dict.fromkeys(s for t in tables for (m, s) in t.accuracy if m == method))
        path = out_dir / f"accuracy_{method}.csv"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["train_scenario"] + cols)
            for t in tables:
                wr.writerow([t.train_scenario] + [_cell(t.accuracy.get((method, c))) for c in cols])
        paths.append(path)
    return paths


def _cell(v) -> str:
    return "" if v is None else f"{v:.6f}"


def write_confusions(table: ResultTable, out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for (method, scen), cm in table.confusion.items():
        path = out_dir / f"confusion_{method}_{table.train_scenario}_to_{scen}.csv"
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["true\\pred"] + [str(j) for j in range(cm.shape[1])])
            for i, row in enumerate(cm):
                wr.writerow([str(i)] + [str(int(v)) for v in row])
        paths.append(path)
    return paths


def write_timing(timing: Dict[str, Dict[str, float]], path, train_scenario: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["train_scenario", "method", "preprocess_s", "train_s", "inference_s"])
        for method, t in timing.items():
            wr.writerow([train_scenario, method] + [f"{t[k]:.6g}" for k in ("preprocess_s", "train_s", "inference_s")])
    return path


def write_scalability(results: Dict[int, ResultTable], path) -> Path:
    """Long-format CSV: device_count, method, test_scenario, accuracy."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["device_count", "method", "test_scenario", "accuracy"])
        for count, table in results.items():
            for (m, s), a in table.accuracy.items():
                wr.writerow([count, m, s, f"{a:.6f}"])
    return path
