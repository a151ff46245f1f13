import json

import pytest

from ghostnoise.config import ConfigError, DataConfig, build_dataset, load_config, parse_config
from ghostnoise.harness.data import write_idx
from ghostnoise.harness.model import InjectorSpec

import numpy as np


def test_defaults():
    cfg = parse_config({})
    assert cfg.train.epochs == 20 and cfg.data.kind == "blobs" and cfg.dist.ghost_size == 32


def test_full_document():
    cfg = parse_config({
        "model": {"hidden": [32, 16], "norm": "layer_norm", "injector": {"kind": "gni", "ghost_size": 8}},
        "train": {"epochs": 3, "trace_epochs": [1, -1]},
        "data": {"n": 500},
        "sweep": {"axis": "injector.ghost_size", "values": [4, 8], "seeds": [0, 1]},
        "dist": {"model": "conv", "ghost_size": 8},
        "verify": {"trials": 5},
    })
    data = build_dataset(cfg.data)
    spec = cfg.mlp_spec(data)
    assert spec.hidden == (32, 16) and spec.injector == InjectorSpec("gni", ghost_size=8)
    assert spec.input_dim == 64 and cfg.train.trace_epochs == (1, -1)
    assert cfg.sweep.values == (4, 8)


def test_per_layer_injectors():
    cfg = parse_config({"model": {"injector": [{"kind": "gni"}, {"kind": "none"}]}})
    spec = cfg.mlp_spec(build_dataset(DataConfig(n=100)))
    assert spec.layer_injectors[0].kind == "gni" and spec.layer_injectors[1].kind == "none"


@pytest.mark.parametrize("doc, needle", [
    ({"model": {"injector": {"kind": "gni", "ghost_sise": 4}}}, "ghost_sise"),
    ({"model": {"width": 3}}, "width"),
    ({"train": {"lr": 0.1, "epoch": 3}}, "epoch"),
    ({"trian": {}}, "trian"),
    ({"train": {"lr": -1.0}}, "lr"),
    ({"model": {"norm": "group_norm"}}, "norm"),
    ({"data": "blobs"}, "data"),
])
def test_rejects_bad_fields(doc, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(doc)


def test_load_errors_name_file(tmp_path):
    with pytest.raises(ConfigError, match="missing.json"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="bad.json"):
        load_config(bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"verify": {"trials": 2}}))
    assert load_config(good).verify.trials == 2


def test_idx_dataset(tmp_path):
    images = np.random.default_rng(0).integers(0, 256, size=(50, 4, 4), dtype=np.uint8)
    write_idx(images, np.arange(50) % 10, tmp_path / "img", tmp_path / "lab")
    data = build_dataset(DataConfig(kind="idx", images=str(tmp_path / "img"), labels=str(tmp_path / "lab"),
                                    limit=40))
    assert data.input_dim == 16 and data.num_classes == 10
    assert data.x_train.shape[0] + data.x_val.shape[0] + data.x_test.shape[0] == 40
    with pytest.raises(ConfigError, match="images"):
        build_dataset(DataConfig(kind="idx", images=str(tmp_path / "nope"), labels=str(tmp_path / "lab")))
    with pytest.raises(ConfigError, match="kind"):
        build_dataset(DataConfig(kind="csv"))
