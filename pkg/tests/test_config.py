import json

import pytest

from schemas.config import (
    DEFAULT_TEST_GRID, DEFAULT_TRAIN_GRID, BacktestConfig, ScreenConfig, SolveConfig, WindowSpec, load_config,
    parse_config,
)
from tools.errors import ConfigError


def test_defaults():
    spec = WindowSpec()
    assert (spec.train_len, spec.test_len, spec.stride) == (220, 15, 15)
    assert spec.gamma == -70.0
    assert spec.survivorship == "full"
    assert spec.shrinkage.sigma0 and spec.shrinkage.sigma1

    screen = ScreenConfig()
    assert (screen.m, screen.d_max, screen.p_threshold) == (6, 15, 0.01)
    assert SolveConfig().variants == ["unconstrained", "constrained"]


def test_stride_defaults_to_test_len():
    assert WindowSpec(train_len=100, test_len=10).stride == 10
    assert WindowSpec(train_len=100, test_len=10, stride=5).stride == 5
    with pytest.raises(ConfigError):
        parse_config(WindowSpec, {"stride": 0})


def test_grid_defaults():
    assert BacktestConfig().grid() == (DEFAULT_TRAIN_GRID, DEFAULT_TEST_GRID)
    assert DEFAULT_TRAIN_GRID[0] == 190 and DEFAULT_TRAIN_GRID[-1] == 250
    assert DEFAULT_TEST_GRID == [10, 11, 12, 13, 14, 15, 16]
    custom = BacktestConfig(train_grid=[100], test_grid=[5, 6])
    assert custom.grid() == ([100], [5, 6])


def test_positive_gamma_is_rejected():
    for model in (ScreenConfig, WindowSpec, BacktestConfig, SolveConfig):
        with pytest.raises(ConfigError, match="gamma must be negative"):
            parse_config(model, {"gamma": 0.5})


def test_every_invalid_field_is_reported():
    with pytest.raises(ConfigError) as exc:
        parse_config(ScreenConfig, {"m": 0, "d_max": 0, "p_threshold": 2.0})
    errors = exc.value.details["errors"]
    assert len(errors) == 3
    assert {e.split(":")[0] for e in errors} == {"m", "d_max", "p_threshold"}


def test_window_lengths_and_extra_keys():
    with pytest.raises(ConfigError, match="train_len > test_len"):
        parse_config(WindowSpec, {"train_len": 10, "test_len": 10})
    with pytest.raises(ConfigError, match="train_len > test_len"):
        parse_config(WindowSpec, {"test_len": 0})
    with pytest.raises(ConfigError, match="trian_len"):
        parse_config(BacktestConfig, {"trian_len": 100})
    with pytest.raises(ConfigError):
        parse_config(ScreenConfig, {"shrinkage": {"sigma2": True}})


def test_load_config_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"m": 2, "d_max": 4}))
    config = load_config(ScreenConfig, str(path))
    assert (config.m, config.d_max) == (2, 4)

    assert load_config(ScreenConfig, None) == ScreenConfig()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(ScreenConfig, str(tmp_path / "missing.json"))

    broken = tmp_path / "broken.json"
    broken.write_text("{\"m\": 2,")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(ScreenConfig, str(broken))

    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(ScreenConfig, str(listed))


def test_window_spec_override_resets_stride():
    config = BacktestConfig(train_len=200, test_len=20, stride=5, m=3, benchmark="SPY")
    assert config.window_spec().stride == 5

    spec = config.window_spec(train_len=150, test_len=10)
    assert (spec.train_len, spec.test_len, spec.stride) == (150, 10, 10)
    assert spec.m == 3
    assert not hasattr(spec, "benchmark")
