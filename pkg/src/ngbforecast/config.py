"""Run configuration: one YAML or JSON file, resolved against defaults.

Schema (every key is optional; ``seed`` must come from the file or ``--seed``)::

    seed: 7
    out_dir: runs/demo
    data: path/to/series.csv          # or a `synthetic` block
    synthetic: {days: 700, seed: 0, nominal_power: 3.2, extra_noise_features: 0}
    nominal_power: 3.2                # per-unit scaling for CSV input (default: max power)
    model: ngboost                    # ngboost | gp | lube | persistence
    ngboost: {n_stages: 500, learning_rate: 0.01, max_depth: 3, family: normal, score: log}
    baselines: {gp_kernel: rq, gp_steps: 200, gp_max_rows: 1000, lube_width: 20, lube_eta_pen: 50}
    splits: {test_months: ["2019-01", "2019-04", "2019-07", "2019-10"], train_months: 12}
    coverage: [68.27, 95.45, 99.73]   # percent
    forecast: {origin_hour: 12, horizon_hours: 36}
    grid: {ngboost: {max_depth: [3, 4]}}  # per model kind; replaces that kind's default grid
    prune: {threshold: 0.02, explain_rows: 2000}
    explain: {rows: 200, interactions: false}
    n_jobs: 1
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .pipeline import DEFAULT_TEST_MONTHS, MODEL_KINDS, SIGMA_COVERAGES, config_hash

DEFAULT_COVERAGE = tuple(round(100.0 * c, 2) for c in SIGMA_COVERAGES)


@dataclass
class RunConfig:
    seed: int
    out_dir: str = "runs/default"
    data: str | None = None
    synthetic: dict = field(default_factory=dict)
    nominal_power: float | None = None
    model: str = "ngboost"
    ngboost: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)
    splits: dict = field(default_factory=lambda: {"test_months": list(DEFAULT_TEST_MONTHS), "train_months": 12})
    coverage: list = field(default_factory=lambda: list(DEFAULT_COVERAGE))
    forecast: dict = field(default_factory=lambda: {"origin_hour": 12.0, "horizon_hours": 36.0})
    grid: dict | None = None
    prune: dict = field(default_factory=lambda: {"threshold": 0.02, "explain_rows": 2000})
    explain: dict = field(default_factory=lambda: {"rows": 200, "interactions": False})
    n_jobs: int = 1

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a seed is required (config key `seed` or --seed)")
        self.seed = int(self.seed)
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        cov = [float(c) for c in self.coverage]
        if not cov or any(not 0.0 < c < 100.0 for c in cov):
            raise ValueError("coverage levels are percentages strictly between 0 and 100")
        self.coverage = cov

    @property
    def coverages(self) -> tuple:
        return tuple(c / 100.0 for c in self.coverage)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return config_hash(self.to_dict())

    def meta(self) -> dict:
        return {"config_hash": self.digest(), "seed": self.seed}


def read_config_file(path) -> dict:
    text = Path(path).read_text()
    try:
        raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValueError(f"{path}: cannot parse config ({exc})") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return raw


def resolve(path=None, **overrides) -> RunConfig:
    """File values, then non-None overrides, on top of the defaults."""
    raw = read_config_file(path) if path else {}
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "seed" not in raw:
        raise ValueError("a seed is required (config key `seed` or --seed)")
    if raw.get("data") and raw.get("synthetic"):
        raise ValueError("give either `data` or `synthetic`, not both")
    return RunConfig(**raw)
