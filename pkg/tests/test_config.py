import copy
import json

import numpy as np
import pytest

from dither_lqg.codec import StrategyKind
from dither_lqg.config import SEED_ENV, BitSetting, load_config, parse_config, validate
from dither_lqg.errors import ConfigError

from conftest import SCALAR_CONFIG


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


def _with(**changes):
    data = copy.deepcopy(SCALAR_CONFIG)
    data.update(changes)
    return data


def test_parse_scalar_config():
    config = parse_config(copy.deepcopy(SCALAR_CONFIG))
    assert config.plant.n_states == 1
    np.testing.assert_array_equal(config.plant.A, [[0.9999]])
    assert [float(rc[0, 0]) for rc in config.rc_values] == [1e3, 1.0]
    assert config.strategies == [StrategyKind.I, StrategyKind.II]
    assert config.bits == [BitSetting(3)]
    assert config.tau == 1000 and config.zeta is None
    assert config.zeta_policy == "shared"
    assert (config.simulation.horizon, config.simulation.runs, config.simulation.seed) == (200, 4, 3)
    assert config.simulation.burn_in == 1000
    assert config.trace.horizon == 50 and config.trace.run_index == 0
    assert config.out is None


def test_matrix_rows_are_accepted():
    data = _with(plant={"A": [[0.5, 0.1], [0, 0.8]], "B": [[0], [1]], "C": [[1, 0]], "Q": [[1, 0], [0, 1]], "R": 1})
    data["cost"] = {"Qc": [[1, 0], [0, 1]], "Rc": [2]}
    config = parse_config(data)
    assert config.plant.n_states == 2
    assert config.weights(config.rc_values[0]).Qc.shape == (2, 2)


def test_schema_lists_missing_fields():
    data = copy.deepcopy(SCALAR_CONFIG)
    del data["plant"]["R"]
    with pytest.raises(ConfigError, match="'R' is a required property"):
        validate(data)


@pytest.mark.parametrize(
    "changes",
    [
        {"strategies": ["IV"]},
        {"bits": [{"r": 1}]},
        {"zeta_policy": "sometimes"},
        {"cost": {"Qc": 1}},
        {"plant": {"A": "fast", "B": 1, "C": 1, "Q": 1, "R": 1}},
        {"bits": [{"b": 0}]},
        {"strategies": ["III"], "bits": [{"b": 3, "r": 0}]},
        {"simulation": {"horizon": 0, "runs": 4}},
        {"simulation": {"horizon": 200, "runs": 0}},
    ],
    ids=["strategy", "bits", "policy", "rc", "matrix", "zero-bits", "zero-refinement", "zero-horizon", "zero-runs"],
)
def test_schema_violations(changes):
    with pytest.raises(ConfigError):
        parse_config(_with(**changes))


def test_exactly_one_of_tau_and_zeta():
    both = _with(zeta=5.0)
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(both)
    neither = copy.deepcopy(SCALAR_CONFIG)
    del neither["tau"]
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(neither)


def test_target_ranges():
    with pytest.raises(ConfigError):
        parse_config(_with(tau=0.5))
    explicit = copy.deepcopy(SCALAR_CONFIG)
    del explicit["tau"]
    explicit["zeta"] = -1.0
    with pytest.raises(ConfigError):
        parse_config(explicit)


def test_strategy_iii_needs_refinement_bits():
    with pytest.raises(ConfigError, match="'r'"):
        parse_config(_with(strategies=["III"]))
    config = parse_config(_with(strategies=["III"], bits=[{"b": 3, "r": 1}]))
    assert config.bits == [BitSetting(3, 1)]


@pytest.mark.parametrize("b, r", [(3, 3), (3, 4), (1, 1)])
def test_refinement_bits_must_leave_a_coarse_bit(b, r):
    with pytest.raises(ConfigError):
        parse_config(_with(strategies=["I", "III"], bits=[{"b": b, "r": r}]))


def test_weight_dimensions_are_checked():
    data = _with(cost={"Qc": 1, "Rc": [[[1, 0], [0, 1]]]})
    with pytest.raises(ConfigError, match="Rc"):
        parse_config(data)


class TestSeedPrecedence:
    def test_document_seed(self):
        assert parse_config(copy.deepcopy(SCALAR_CONFIG)).simulation.seed == 3

    def test_environment_beats_document(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "11")
        assert parse_config(copy.deepcopy(SCALAR_CONFIG)).simulation.seed == 11

    def test_override_beats_environment(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "11")
        config = parse_config(copy.deepcopy(SCALAR_CONFIG), seed_override=5)
        assert config.simulation.seed == 5
        assert config.simulation.runs == 4

    def test_bad_environment_seed(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "abc")
        with pytest.raises(ConfigError, match=SEED_ENV):
            parse_config(copy.deepcopy(SCALAR_CONFIG))


def test_load_config(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(SCALAR_CONFIG))
    assert load_config(path).tau == 1000
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(broken)


def test_shipped_configs_parse():
    from dither_lqg.config import PROJECT_ROOT

    paths = sorted((PROJECT_ROOT / "configs").glob("*.json"))
    assert paths
    for path in paths:
        load_config(path)
