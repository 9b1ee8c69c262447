"""Run and sweep configuration: strict JSON parsing with field-path errors.

Unknown keys are rejected so typos fail loudly, and every run writes back
the fully resolved configuration it actually used.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .generator import GeneratorConfig, GeneratorError
from .losses import LossWeights
from .training import REGULARIZERS, TrainConfig

__all__ = ["ConfigError", "RunConfig", "SweepSpec", "load_run_config", "load_sweep_spec"]

_TRAINING_KEYS = {
    "learning_rate", "phase1_max_epochs", "patience", "phase2_epochs",
    "variant", "seed", "shuffle_policy", "reduction", "hidden_dim",
    "latent_dim", "attribute_only", "corr_on",
}
_WEIGHT_KEYS = {"alpha", "gamma", "beta"}
_BASELINE_KEYS = {"regularizer", "lam", "adcg_weight"}
_EVAL_KEYS = {"contamination"}
_TOP_KEYS = {"generator", "training", "weights", "baseline", "evaluation"}


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.field_path = path


def _require_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected a JSON object")
    return obj


def _reject_unknown(obj: dict, allowed: set, path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")


class RunConfig:
    """One experiment: generator + training + weights + evaluation options."""

    def __init__(self, generator: GeneratorConfig, training: TrainConfig,
                 baseline_regularizer: str = "none", contamination: float | None = None):
        self.generator = generator
        self.training = training
        self.baseline_regularizer = baseline_regularizer
        self.contamination = contamination

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = _require_mapping(raw, "config")
        _reject_unknown(raw, _TOP_KEYS, "config")

        gen_raw = _require_mapping(raw.get("generator", {}), "generator")
        gen_allowed = set(GeneratorConfig.__dataclass_fields__)
        _reject_unknown(gen_raw, gen_allowed, "generator")
        try:
            generator = GeneratorConfig(**gen_raw).validate()
        except GeneratorError as err:
            raise ConfigError(f"generator.{err.field_name or '?'}", str(err)) from err
        except TypeError as err:
            raise ConfigError("generator", str(err)) from err

        weights_raw = _require_mapping(raw.get("weights", {}), "weights")
        _reject_unknown(weights_raw, _WEIGHT_KEYS, "weights")
        try:
            weights = LossWeights(**weights_raw).validate()
        except ValueError as err:
            raise ConfigError("weights", str(err)) from err

        train_raw = _require_mapping(raw.get("training", {}), "training")
        _reject_unknown(train_raw, _TRAINING_KEYS, "training")

        base_raw = _require_mapping(raw.get("baseline", {}), "baseline")
        _reject_unknown(base_raw, _BASELINE_KEYS, "baseline")
        reg = base_raw.get("regularizer", "none")
        if reg not in REGULARIZERS:
            raise ConfigError("baseline.regularizer",
                              f"must be one of {', '.join(REGULARIZERS)}")

        try:
            training = TrainConfig(
                weights=weights,
                baseline_lambda=float(base_raw.get("lam", 1.0)),
                baseline_adcg_weight=float(base_raw.get("adcg_weight", 0.0)),
                **train_raw,
            ).validate()
        except (TypeError, ValueError) as err:
            raise ConfigError("training", str(err)) from err

        eval_raw = _require_mapping(raw.get("evaluation", {}), "evaluation")
        _reject_unknown(eval_raw, _EVAL_KEYS, "evaluation")
        contamination = eval_raw.get("contamination")
        if contamination is not None:
            contamination = float(contamination)
            if not (0.0 <= contamination <= 1.0):
                raise ConfigError("evaluation.contamination", "must lie in [0, 1]")

        return cls(generator, training, reg, contamination)

    def to_dict(self) -> dict:
        t = self.training
        return {
            "generator": self.generator.to_dict(),
            "training": {
                "learning_rate": t.learning_rate,
                "phase1_max_epochs": t.phase1_max_epochs,
                "patience": t.patience,
                "phase2_epochs": t.phase2_epochs,
                "variant": t.variant,
                "seed": t.seed,
                "shuffle_policy": t.shuffle_policy,
                "reduction": t.reduction,
                "hidden_dim": t.hidden_dim,
                "latent_dim": t.latent_dim,
                "attribute_only": t.attribute_only,
                "corr_on": t.corr_on,
            },
            "weights": {"alpha": t.weights.alpha, "gamma": t.weights.gamma,
                        "beta": t.weights.beta},
            "baseline": {"regularizer": self.baseline_regularizer,
                         "lam": t.baseline_lambda,
                         "adcg_weight": t.baseline_adcg_weight},
            "evaluation": {"contamination": self.contamination},
        }

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """New config with dotted-path overrides applied (e.g. weights.beta)."""
        merged = self.to_dict()
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            node = merged
            for part in parts[:-1]:
                if part not in node or not isinstance(node[part], dict):
                    raise ConfigError(dotted, "unknown parameter path")
            # descend again now that structure is known valid
            node = merged
            for part in parts[:-1]:
                node = node[part]
            if parts[-1] not in node:
                raise ConfigError(dotted, "unknown parameter path")
            node[parts[-1]] = value
        return RunConfig.from_dict(merged)


class SweepSpec:
    """A base run plus named parameter axes and a seed list."""

    def __init__(self, base: RunConfig, axes: dict, seeds: list):
        self.base = base
        self.axes = axes
        self.seeds = seeds

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepSpec":
        raw = _require_mapping(raw, "sweep")
        _reject_unknown(raw, {"base", "axes", "seeds"}, "sweep")
        base = RunConfig.from_dict(_require_mapping(raw.get("base", {}), "sweep.base"))
        axes_raw = _require_mapping(raw.get("axes", {}), "sweep.axes")
        axes = {}
        for key, values in axes_raw.items():
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep.axes.{key}", "expected a nonempty list of values")
            base.with_overrides({key: values[0]})  # validates the path
            axes[key] = list(values)
        seeds = raw.get("seeds", list(range(10)))
        if not isinstance(seeds, list) or not all(isinstance(x, int) for x in seeds):
            raise ConfigError("sweep.seeds", "expected a list of integers")
        return cls(base, axes, seeds)

    def points(self) -> list:
        """Cartesian product of the axes as override dicts, in grid order."""
        points = [{}]
        for key, values in self.axes.items():
            points = [{**p, key: v} for p in points for v in values]
        return points


def load_run_config(path) -> RunConfig:
    return RunConfig.from_dict(_load_json(path))


def load_sweep_spec(path) -> SweepSpec:
    return SweepSpec.from_dict(_load_json(path))


def _load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file not found")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(str(path), f"invalid JSON: {err}") from err
