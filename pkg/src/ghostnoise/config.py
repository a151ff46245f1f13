"""Strict JSON experiment configuration.

A config document has optional sections ``model``, ``train``, ``data``,
``sweep``, ``dist`` and ``verify``.  Section keys mirror dataclass field
names; any unknown key is an error so that a misspelt field can never fall
back to its default silently.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .harness.data import Dataset, load_idx, make_blobs, split_dataset
from .harness.experiment import TrainConfig
from .harness.model import InjectorSpec, MlpSpec
from .tensor import rng_stream

SECTIONS = ("model", "train", "data", "sweep", "dist", "verify")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    kind: str = "blobs"
    n: int = 10_000
    dim: int = 64
    num_classes: int = 10
    class_separation: float = 4.0
    label_noise: float = 0.1
    images: Optional[str] = None
    labels: Optional[str] = None
    limit: Optional[int] = None
    seed: int = 0


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "injector.ghost_size"
    values: tuple = (4, 16, 64, 256)
    seeds: tuple = (0,)


@dataclass(frozen=True)
class DistConfig:
    model: str = "1d"
    ghost_size: int = 32
    spatial_size: int = 1
    sigma_b2: float = 1.0
    sigma_i2: float = 0.0
    batch_size: int = 256
    channels: int = 4
    draws: int = 100_000
    shift_var_tol: float = 0.05
    moment_mean_tol: float = 0.02
    moment_var_tol: float = 0.10
    ks_max: float = 0.02
    bins: int = 50


@dataclass(frozen=True)
class VerifyConfig:
    trials: int = 1000


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    dist: DistConfig = field(default_factory=DistConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def mlp_spec(self, data: Dataset) -> MlpSpec:
        return build_mlp_spec(self.model, data.input_dim, data.num_classes)


def _strict(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _injector(doc, where):
    return _strict(InjectorSpec, doc, where)


def build_mlp_spec(doc: dict, input_dim: int, num_classes: int) -> MlpSpec:
    doc = dict(doc)
    names = {f.name for f in dataclasses.fields(MlpSpec)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"model: unknown key(s) {', '.join(unknown)}")
    inj = doc.get("injector", {})
    if isinstance(inj, list):
        doc["injector"] = tuple(_injector(d, f"model.injector[{i}]") for i, d in enumerate(inj))
    else:
        doc["injector"] = _injector(inj, "model.injector")
    doc.setdefault("input_dim", input_dim)
    doc.setdefault("num_classes", num_classes)
    if isinstance(doc.get("norm"), list):
        doc["norm"] = tuple(doc["norm"])
    try:
        return MlpSpec(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s) {', '.join(unknown)}")
    cfg = ExperimentConfig()
    if "model" in doc:
        if not isinstance(doc["model"], dict):
            raise ConfigError("model: expected an object")
        # validate eagerly with placeholder dimensions
        build_mlp_spec(doc["model"], 1, 2)
        cfg.model = doc["model"]
    for name, cls in (("train", TrainConfig), ("data", DataConfig), ("sweep", SweepConfig),
                      ("dist", DistConfig), ("verify", VerifyConfig)):
        if name in doc:
            setattr(cfg, name, _strict(cls, doc[name], name))
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)


def build_dataset(data: DataConfig, eval_fraction: float = 0.1) -> Dataset:
    rng = rng_stream(data.seed, 0)
    if data.kind == "blobs":
        return make_blobs(data.n, data.dim, data.num_classes, data.class_separation, data.label_noise,
                          rng, eval_fraction)
    if data.kind == "idx":
        if not data.images or not data.labels:
            raise ConfigError("data: kind 'idx' needs 'images' and 'labels' paths")
        for key in ("images", "labels"):
            if not Path(getattr(data, key)).is_file():
                raise ConfigError(f"data.{key}: file not found: {getattr(data, key)}")
        x, y = load_idx(data.images, data.labels)
        if data.limit is not None:
            x, y = x[:data.limit], y[:data.limit]
        return split_dataset(x, y, 10 if y.size == 0 else int(max(y.max() + 1, 2)), rng, eval_fraction)
    raise ConfigError(f"data.kind: expected 'blobs' or 'idx', got {data.kind!r}")
