import json

import pytest

from tfusplan.config import ConfigError, RunConfig


def test_defaults_carry_protocol_values():
    cfg = RunConfig.defaults().validate()
    assert cfg.extract.threshold_hu == 400.0
    assert cfg.acoustic.c_max == 3100.0 and cfg.acoustic.c_min == 1480.0
    assert cfg.acoustic.rho_max == 2100.0 and cfg.acoustic.rho_min == 1000.0
    assert cfg.acoustic.a0 == 8.1 and cfg.acoustic.b == 1.1
    assert cfg.sim.f0 == 650e3 and cfg.sim.n_cycles == 100
    assert cfg.array.radius_mm == 150.0
    assert cfg.ray.active_angle_deg == 20.0


def test_round_trip_through_json(tmp_path):
    cfg = RunConfig.defaults()
    cfg.threads = 2
    cfg.extract.threshold_hu = 350.0
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    back = RunConfig.from_file(p)
    assert back.threads == 2
    assert back.extract.threshold_hu == 350.0
    assert back.to_dict() == cfg.to_dict()


def test_unknown_keys_rejected_at_any_depth():
    with pytest.raises(ConfigError, match="unknown config key: bogus"):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="extract.bogus"):
        RunConfig.from_dict({"extract": {"bogus": 1}})
    with pytest.raises(ConfigError, match="sim.bogus"):
        RunConfig.from_dict({"sim": {"bogus": 1}})


def test_frozen_sections_rebuilt():
    cfg = RunConfig.from_dict({"sim": {"cfl": 0.25}, "acoustic": {"hu_cap": 1200.0}})
    assert cfg.sim.cfl == 0.25
    assert cfg.sim.f0 == 650e3  # untouched defaults preserved
    assert cfg.acoustic.hu_cap == 1200.0


def test_values_validated_at_load():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"sim": {"cfl": 0.9}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"array": {"tilt_x_deg": 12.0}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"extract": {"dilation_radius_mm": -1.0}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"phantom": {"trabecular_hu": 100.0}})


def test_type_errors_are_informative():
    with pytest.raises(ConfigError, match="threads"):
        RunConfig.from_dict({"threads": "two"})
    with pytest.raises(ConfigError, match="tilt_search.enabled"):
        RunConfig.from_dict({"tilt_search": {"enabled": "yes"}})


def test_sim_grid_accepts_null_and_lists():
    cfg = RunConfig.from_dict({"sim_grid": {"dims": [625, 625, 405], "spacing_mm": [0.5, 0.5, 0.5]}})
    assert cfg.sim_grid.dims == (625, 625, 405)
    cfg2 = RunConfig.from_dict({"sim_grid": {"dims": None}})
    assert cfg2.sim_grid.dims is None
