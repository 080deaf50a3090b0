"""Config validation, JSON round trips, deterministic serialization."""

import json
import math

import numpy as np
import pytest

from srcloc.config import (LAM_FLOOR, ConfigError, RunConfig, config_from_dict,
                           default_config, load_config, validate)
from srcloc.serialize import (dumps, read_jsonl, rng_for, sha256_of_dict,
                              write_csv, write_jsonl)


def test_default_config_values():
    cfg = default_config()
    assert cfg.dim == 2
    assert cfg.n_particles == 200
    assert cfg.tau_ess == 0.5
    assert cfg.zeta == 0.05
    assert cfg.horizon == 100
    assert cfg.l_step == 1.0
    assert cfg.episodes == 100
    assert cfg.total_steps == 100000
    assert cfg.reward_mode == "kl"
    assert cfg.stop_source == "teacher"
    assert cfg.theta_dim == 7
    assert cfg.loc_idx == (0, 1)


def test_default_config_3d():
    cfg = default_config(dim=3)
    assert cfg.theta_dim == 9
    assert cfg.loc_idx == (0, 1, 2)
    assert "z" in cfg.priors and "uz" in cfg.priors
    assert len(cfg.start_box) == 3
    assert len(cfg.domain) == 3


def test_prior_bounds_applies_lam_floor():
    cfg = default_config()
    lows, highs = cfg.prior_bounds()
    i = cfg.param_names.index("lam")
    assert cfg.priors["lam"][0] == 0.0
    assert lows[i] == LAM_FLOOR
    assert highs[i] == 8.0


@pytest.mark.parametrize("field,value", [
    ("dim", 4),
    ("episodes", 0),
    ("total_steps", 0),
    ("horizon", 0),
    ("l_step", 0.0),
    ("n_particles", 1),
    ("tau_ess", 1.5),
    ("tau_ess", 0.0),
    ("zeta", 0.0),
    ("zeta", float("inf")),
    ("mh_step", 0.0),
    ("mh_moves", -1),
    ("reward_mode", "sparse"),
    ("clip_window", 0),
    ("clip_q", 1.5),
    ("student_window", 0),
    ("student_hidden", 0),
    ("student_lr", 0.0),
    ("stop_source", "oracle"),
])
def test_validate_names_offending_field(field, value):
    with pytest.raises(ConfigError) as ei:
        default_config(**{field: value})
    assert ei.value.field_name == field
    assert str(ei.value).startswith(field + ":")


def test_validate_seed_type():
    with pytest.raises(ConfigError) as ei:
        default_config(seed=1.5)
    assert ei.value.field_name == "seed"


def test_validate_nested_ppo_field():
    from srcloc.policy import PPOConfig
    with pytest.raises(ConfigError) as ei:
        default_config(ppo=PPOConfig(gamma=1.5))
    assert ei.value.field_name == "ppo.gamma"


def test_validate_boxes():
    with pytest.raises(ConfigError) as ei:
        default_config(start_box=[[0.0, 5.0]])
    assert ei.value.field_name == "start_box"
    with pytest.raises(ConfigError) as ei:
        default_config(domain=[[0.0, 30.0], [30.0, 0.0]])
    assert ei.value.field_name == "domain"


def test_validate_priors():
    cfg = default_config()
    bad = {k: list(v) for k, v in cfg.priors.items()}
    del bad["lam"]
    with pytest.raises(ConfigError) as ei:
        default_config(priors=bad)
    assert ei.value.field_name == "priors.lam"

    extra = {k: list(v) for k, v in cfg.priors.items()}
    extra["z"] = [1.0, 10.0]
    with pytest.raises(ConfigError) as ei:
        default_config(priors=extra)
    assert ei.value.field_name == "priors.z"

    inverted = {k: list(v) for k, v in cfg.priors.items()}
    inverted["q"] = [3000.0, 10.0]
    with pytest.raises(ConfigError) as ei:
        default_config(priors=inverted)
    assert ei.value.field_name == "priors.q"


def test_incompatible_ablation_flags():
    with pytest.raises(ConfigError) as ei:
        default_config(student_only=True, pf_at_test=True)
    assert ei.value.field_name == "pf_at_test"


def test_config_error_is_value_error():
    assert issubclass(ConfigError, ValueError)


def test_config_from_dict_unknown_fields():
    base = default_config().to_dict()
    base["bogus"] = 1
    with pytest.raises(ConfigError) as ei:
        config_from_dict(base)
    assert ei.value.field_name == "bogus"

    base = default_config().to_dict()
    base["sensor"]["bogus"] = 1
    with pytest.raises(ConfigError) as ei:
        config_from_dict(base)
    assert ei.value.field_name == "sensor.bogus"

    base = default_config().to_dict()
    base["ppo"]["bogus"] = 1
    with pytest.raises(ConfigError) as ei:
        config_from_dict(base)
    assert ei.value.field_name == "ppo.bogus"


def test_config_from_dict_invalid_sensor_values():
    base = default_config().to_dict()
    base["sensor"]["p_d"] = 2.0
    with pytest.raises(ConfigError) as ei:
        config_from_dict(base)
    assert ei.value.field_name == "sensor"


def test_round_trip_is_byte_stable():
    cfg = default_config(seed=11, zeta=0.37)
    text = dumps(cfg.to_dict())
    back = config_from_dict(json.loads(text))
    assert dumps(back.to_dict()) == text
    assert back.to_dict() == cfg.to_dict()


def test_load_config_files(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(dumps(default_config(seed=4).to_dict()), encoding="utf-8")
    cfg = load_config(path)
    assert cfg.seed == 4

    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError) as ei:
        load_config(bad)
    assert ei.value.field_name == "<file>"

    arr = tmp_path / "arr.json"
    arr.write_text("[1,2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(arr)

    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")


# --- serialization ---

def test_dumps_float_rendering():
    assert dumps(0.1) == "0.10000000000000001"
    assert dumps(1.0) == "1"
    assert dumps(-2.5) == "-2.5"


def test_dumps_float_round_trip(rng):
    for _ in range(200):
        x = float(rng.normal() * 10.0 ** rng.integers(-12, 12))
        assert float(json.loads(dumps(x))) == x


def test_dumps_sorts_keys():
    assert dumps({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_dumps_handles_numpy_types():
    assert dumps(np.float64(0.5)) == "0.5"
    assert dumps(np.int64(7)) == "7"
    assert dumps(np.array([1.0, 2.0])) == "[1,2]"
    assert dumps((1, 2)) == "[1,2]"
    assert dumps(True) == "true"
    assert dumps(None) == "null"


def test_dumps_rejects_bad_values():
    with pytest.raises(ValueError):
        dumps(float("nan"))
    with pytest.raises(ValueError):
        dumps(float("inf"))
    with pytest.raises(TypeError):
        dumps({1: "x"})
    with pytest.raises(TypeError):
        dumps({"x": {2, 3}})


def test_jsonl_round_trip(tmp_path):
    recs = [{"a": 1, "b": [0.25, "s"]}, {"a": 2, "b": None}]
    path = tmp_path / "r.jsonl"
    write_jsonl(path, recs)
    assert read_jsonl(path) == recs
    # stable bytes on rewrite
    first = path.read_bytes()
    write_jsonl(path, recs)
    assert path.read_bytes() == first


def test_write_csv_rendering(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b", "c"], [{"a": 0.1, "b": True, "c": "x"}])
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == "0.10000000000000001,true,x"


def test_sha256_ignores_key_order():
    assert sha256_of_dict({"a": 1, "b": 2}) == sha256_of_dict({"b": 2, "a": 1})
    assert sha256_of_dict({"a": 1}) != sha256_of_dict({"a": 2})


def test_rng_for_streams():
    a1 = rng_for(3, 1, 5).standard_normal(4)
    a2 = rng_for(3, 1, 5).standard_normal(4)
    assert np.array_equal(a1, a2)
    b = rng_for(3, 1, 6).standard_normal(4)
    c = rng_for(4, 1, 5).standard_normal(4)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
