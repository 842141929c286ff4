"""Run configuration: one JSON file drives the full pipeline.

Unknown keys are rejected, every nested invariant is validated before any work
starts, and scalar fields can be overridden with dotted paths (e.g.
``train.max_epochs=1``). WOPLAB_THREADS overrides the thread count.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .data import (
    REGIME_NAMES,
    SPLIT_NAMES,
    SPLIT_SEED_STRIDE,
    CoefficientSpec,
    InitialConditionSpec,
    SplitManifest,
)
from .errors import ConfigError
from .models import DeepOnetConfig, FnoConfig
from .solver import Grid, make_grid
from .training import TrainConfig


@dataclass
class DataSection:
    master_seed: int = 2026
    counts: dict = field(
        default_factory=lambda: {
            "train": 2000,
            "val": 200,
            "id_test": 200,
            "ood_freq": 200,
            "ood_smooth": 200,
        }
    )
    train_regime: str = "medium"
    ood_smooth_regime: str = "smooth"
    ic_k_min: int = 1
    ic_k_max: int = 6
    ic_amplitude_bound: float = 1.0
    ic_normalize: bool = True
    ood_freq_k_low: int = 8
    ood_freq_k_high: int = 14
    coeff_amplitude_scale: float = 0.1


@dataclass
class EvaluationSection:
    analysis_modes: int = 32
    ablation_modes: list = field(default_factory=lambda: [8, 16, 32])
    representative_indices: list = field(default_factory=lambda: [0])


@dataclass
class RunConfig:
    n_points: int = 128
    cfl_number: float = 0.9
    terminal_time: float = 1.0
    data: DataSection = field(default_factory=DataSection)
    fno: FnoConfig = field(default_factory=FnoConfig)
    deeponet: DeepOnetConfig = field(default_factory=DeepOnetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    threads: int = 1

    def grid(self) -> Grid:
        return make_grid(self.n_points)

    def manifests(self) -> dict[str, SplitManifest]:
        d = self.data
        train_ic = InitialConditionSpec(
            k_min=d.ic_k_min,
            k_max=d.ic_k_max,
            amplitude_bound=d.ic_amplitude_bound,
            normalize=d.ic_normalize,
        )
        ood_ic = InitialConditionSpec(
            k_min=d.ic_k_min,
            k_max=d.ic_k_max,
            amplitude_bound=d.ic_amplitude_bound,
            normalize=d.ic_normalize,
            k_max_low=d.ood_freq_k_low,
            k_max_high=d.ood_freq_k_high,
        )
        train_cs = CoefficientSpec(regime=d.train_regime, amplitude_scale=d.coeff_amplitude_scale)
        smooth_cs = CoefficientSpec(
            regime=d.ood_smooth_regime, amplitude_scale=d.coeff_amplitude_scale
        )
        out = {}
        for index, split in enumerate(SPLIT_NAMES):
            out[split] = SplitManifest(
                split=split,
                count=d.counts[split],
                base_seed=d.master_seed + index * SPLIT_SEED_STRIDE,
                ic_spec=ood_ic if split == "ood_freq" else train_ic,
                coeff_spec=smooth_cs if split == "ood_smooth" else train_cs,
            )
        return out

    def validate(self) -> None:
        if self.n_points < 3:
            raise ConfigError("n_points", "grid needs at least 3 points")
        if not 0 < self.cfl_number:
            raise ConfigError("cfl_number", "must be positive")
        if self.terminal_time <= 0:
            raise ConfigError("terminal_time", "must be positive")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        d = self.data
        if set(d.counts) != set(SPLIT_NAMES):
            raise ConfigError("data.counts", f"must cover exactly {SPLIT_NAMES}")
        for split, count in d.counts.items():
            if not isinstance(count, int) or count < 0:
                raise ConfigError(f"data.counts.{split}", "must be a non-negative integer")
        for name, regime in (
            ("data.train_regime", d.train_regime),
            ("data.ood_smooth_regime", d.ood_smooth_regime),
        ):
            if regime not in REGIME_NAMES:
                raise ConfigError(name, f"must be one of {REGIME_NAMES}")
        limit = (self.n_points - 1) // 2
        if not 1 <= d.ic_k_min <= d.ic_k_max:
            raise ConfigError("data.ic_k_min", "need 1 <= k_min <= k_max")
        if d.ic_k_max > limit:
            raise ConfigError("data.ic_k_max", f"exceeds resolvable limit {limit}")
        if not d.ic_k_min <= d.ood_freq_k_low <= d.ood_freq_k_high:
            raise ConfigError("data.ood_freq_k_low", "bad OOD mode range")
        if d.ood_freq_k_high > limit:
            raise ConfigError("data.ood_freq_k_high", f"exceeds resolvable limit {limit}")
        if d.ic_amplitude_bound <= 0:
            raise ConfigError("data.ic_amplitude_bound", "must be positive")
        if d.coeff_amplitude_scale <= 0:
            raise ConfigError("data.coeff_amplitude_scale", "must be positive")
        try:
            self.fno.validate()
        except ValueError as exc:
            raise ConfigError("fno", str(exc)) from None
        if self.fno.n_points != self.n_points:
            raise ConfigError("fno.n_points", "must match grid n_points")
        try:
            self.deeponet.validate()
        except ValueError as exc:
            raise ConfigError("deeponet", str(exc)) from None
        if self.deeponet.n_points != self.n_points:
            raise ConfigError("deeponet.n_points", "must match grid n_points")
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError("train", str(exc)) from None
        ev = self.evaluation
        if not 1 <= ev.analysis_modes <= limit:
            raise ConfigError("evaluation.analysis_modes", f"must lie in [1, {limit}]")
        if not ev.ablation_modes:
            raise ConfigError("evaluation.ablation_modes", "must be non-empty")
        for m in ev.ablation_modes:
            if not isinstance(m, int) or not 1 <= m <= self.n_points // 2 + 1:
                raise ConfigError("evaluation.ablation_modes", f"bad mode count {m}")

    def to_dict(self) -> dict:
        out = asdict(self)
        return out


_SECTION_TYPES = {
    "data": DataSection,
    "fno": FnoConfig,
    "deeponet": DeepOnetConfig,
    "train": TrainConfig,
    "evaluation": EvaluationSection,
}


def _build_section(cls, payload: dict, path: str):
    allowed = cls.__dataclass_fields__
    unknown = set(payload) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def config_from_dict(payload: dict) -> RunConfig:
    payload = dict(payload)
    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        if section in payload:
            body = payload.pop(section)
            if not isinstance(body, dict):
                raise ConfigError(section, "must be an object")
            if section in ("fno", "deeponet"):
                body.setdefault("n_points", payload.get("n_points", 128))
            kwargs[section] = _build_section(cls, body, section)
    allowed = set(RunConfig.__dataclass_fields__)
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    scalars = {k: v for k, v in payload.items() if k not in _SECTION_TYPES}
    try:
        cfg = RunConfig(**scalars, **kwargs)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None
    # sections not given explicitly still need the grid size threaded through
    if "fno" not in kwargs:
        cfg.fno = FnoConfig(n_points=cfg.n_points)
    if "deeponet" not in kwargs:
        cfg.deeponet = DeepOnetConfig(n_points=cfg.n_points)
    cfg.validate()
    return cfg


def apply_overrides(payload: dict, overrides: list[str]) -> dict:
    """Apply dotted-path assignments like train.max_epochs=1 to a config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = payload
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(path, "path traverses a non-object")
        node[keys[-1]] = value
    return payload


def load_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    """Load and validate a config file; defaults are used when path is None."""
    if path is None:
        payload = {}
    else:
        try:
            with open(path) as f:
                payload = json.load(f)
        except FileNotFoundError:
            raise ConfigError(str(path), "config file not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from None
        if not isinstance(payload, dict):
            raise ConfigError(str(path), "config root must be an object")
    if overrides:
        payload = apply_overrides(payload, list(overrides))
    cfg = config_from_dict(payload)
    env_threads = os.environ.get("WOPLAB_THREADS")
    if env_threads:
        try:
            cfg.threads = int(env_threads)
        except ValueError:
            raise ConfigError("WOPLAB_THREADS", f"not an integer: {env_threads!r}") from None
        if cfg.threads < 1:
            raise ConfigError("WOPLAB_THREADS", "must be >= 1")
    return cfg
