"""Experiment configuration and profile files (JSON, with a schema version)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dist import ConsumerTypeModel, model_from_dict
from .errors import ConfigError, DomainError
from .flex import FlexibilityStructure
from .mechanism import TIE_BREAKS, TypeProfile

SCHEMA_VERSION = 1
PAYMENT_RULES = ("threshold", "reserve")


@dataclass(frozen=True)
class OracleSettings:
    instances: int = 200
    max_consumers: int = 5
    max_goods: int = 5
    max_levels: int = 3
    payment_instances: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    structure: FlexibilityStructure
    models: tuple[ConsumerTypeModel, ...]
    seed: int | None = None
    samples: int = 20_000
    trials: int = 20_000
    grid_points: int = 9
    fine_points: int = 41
    tie_break: str = "index"
    payment_rule: str = "threshold"
    workers: int = 1
    out: str | None = None
    oracle: OracleSettings = field(default_factory=OracleSettings)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("config.seed: a seed is required for stochastic commands (or pass --seed)")
        return self.seed


def load_json(path) -> object:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _int(data, key, default, path, minimum=0):
    value = data.get(key, default)
    if value is None and default is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{path}.{key}: expected an integer >= {minimum}")
    return value


def _choice(data, key, default, options, path):
    value = data.get(key, default)
    if value not in options:
        raise ConfigError(f"{path}.{key}: expected one of {', '.join(options)}")
    return value


def parse_config(data, base_dir: Path | str = ".", path: str = "config") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}.schema_version: unsupported version {version!r}")
    raw_structure = data.get("structure")
    if not isinstance(raw_structure, dict) or "m" not in raw_structure:
        raise ConfigError(f"{path}.structure.m: missing field")
    m = raw_structure["m"]
    if not isinstance(m, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in m):
        raise ConfigError(f"{path}.structure.m: expected a list of integers")
    if "k" in raw_structure and raw_structure["k"] != len(m):
        raise ConfigError(f"{path}.structure.k: {raw_structure['k']} does not match len(m) = {len(m)}")
    try:
        structure = FlexibilityStructure(tuple(m))
    except DomainError as exc:
        raise ConfigError(f"{path}.structure.m: {exc}") from exc

    raw_models = data.get("models")
    if not isinstance(raw_models, list):
        raise ConfigError(f"{path}.models: expected a list of models or model file paths")
    models = []
    for idx, entry in enumerate(raw_models):
        p = f"{path}.models[{idx}]"
        if isinstance(entry, str):
            file = Path(base_dir) / entry
            model = model_from_dict(load_json(file), path=str(file))
        else:
            model = model_from_dict(entry, path=p)
        if model.k != structure.k:
            raise ConfigError(f"{p}.k: model has {model.k} levels, structure has {structure.k}")
        models.append(model)

    raw_oracle = data.get("oracle", {})
    if not isinstance(raw_oracle, dict):
        raise ConfigError(f"{path}.oracle: expected an object")
    op = f"{path}.oracle"
    oracle = OracleSettings(
        instances=_int(raw_oracle, "instances", 200, op, 1),
        max_consumers=_int(raw_oracle, "max_consumers", 5, op, 1),
        max_goods=_int(raw_oracle, "max_goods", 5, op, 1),
        max_levels=_int(raw_oracle, "max_levels", 3, op, 1),
        payment_instances=_int(raw_oracle, "payment_instances", 50, op, 0),
    )
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError(f"{path}.out: expected a path string")
    return ExperimentConfig(
        structure=structure,
        models=tuple(models),
        seed=_int(data, "seed", None, path),
        samples=_int(data, "samples", 20_000, path, 1),
        trials=_int(data, "trials", 20_000, path, 1),
        grid_points=_int(data, "grid_points", 9, path, 2),
        fine_points=_int(data, "fine_points", 41, path, 2),
        tie_break=_choice(data, "tie_break", "index", TIE_BREAKS, path),
        payment_rule=_choice(data, "payment_rule", "threshold", PAYMENT_RULES, path),
        workers=_int(data, "workers", 1, path, 1),
        out=out,
        oracle=oracle,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(load_json(path), base_dir=path.parent, path=str(path))


def parse_profile(data, path: str = "profile") -> TypeProfile:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object with theta and levels")
    theta = data.get("theta")
    levels = data.get("levels")
    if not isinstance(theta, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in theta):
        raise ConfigError(f"{path}.theta: expected a list of numbers")
    if not isinstance(levels, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in levels):
        raise ConfigError(f"{path}.levels: expected a list of integers")
    if len(theta) != len(levels):
        raise ConfigError(f"{path}: theta has {len(theta)} entries, levels has {len(levels)}")
    return TypeProfile(tuple(theta), tuple(levels))


def load_profile(path) -> TypeProfile:
    return parse_profile(load_json(path), path=str(path))


def profile_to_dict(profile: TypeProfile) -> dict:
    return {"theta": list(profile.theta), "levels": list(profile.levels)}
