import json

import pytest

from core.config import ConfigStore, MarketSpec, PricingConfig, check_finess, load_config
from core.errors import ConfigError
from features import presets


def lv1d_job(**overrides):
    data = {"model": "lv1d", "market": {"assets": ["asset1"], "curve": "zero"},
            "payoff": {"kind": "call", "strike": 100.0}, "maturity": 1.0, "steps": 10}
    data.update(overrides)
    return data


@pytest.mark.parametrize("tag", sorted(presets.example_configs()))
def test_examples_parse_and_round_trip(tag):
    data = presets.example_configs()[tag]
    config = PricingConfig.from_dict(data)
    assert config.model == tag
    assert config.name == f"example_{tag}"
    assert PricingConfig.from_dict(config.to_dict()) == config


def test_defaults_fill_in():
    config = PricingConfig.from_dict({"model": "lv2d", "market": {"assets": ["asset1", "asset2"]},
                                      "payoff": {"kind": "bestof", "strike": 90.0}})
    assert config.market.correlation == 0.5
    assert config.grid_finess == (0.5, 0.5)
    assert config.market.curve == "default"
    assert config.steps == 100 and config.maturity == 1.0
    three = PricingConfig.from_dict({"model": "lv3d", "market": {"assets": ["asset1", "asset2", "asset3"]},
                                     "payoff": {"kind": "basket"}})
    assert three.market.correlation == [0.5, 0.5, 0.5]


def test_asset_count_follows_the_market():
    market = MarketSpec.from_dict({"assets": "asset1"})
    assert market.asset_count == 1
    config = PricingConfig.from_dict({"model": "lv3d", "market": {"assets": ["asset1", "asset2", "asset3"]},
                                      "payoff": {"kind": "bestof", "strike": 90.0}})
    assert config.market.asset_count == config.asset_count == 3


def test_unknown_field_names_its_path():
    with pytest.raises(ConfigError) as info:
        PricingConfig.from_dict(lv1d_job(payoff={"kind": "call", "strik": 100.0}))
    assert info.value.field == "payoff.strik"
    assert str(info.value).startswith("payoff.strik: unknown field")


def test_grid_finess_outside_unit_interval():
    with pytest.raises(ConfigError, match=r"grid_finess must lie in \(0, 1\]"):
        PricingConfig.from_dict(lv1d_job(grid_finess=1.7))
    with pytest.raises(ConfigError) as info:
        check_finess([0.5, 0.0], 2)
    assert info.value.field == "grid_finess[1]"
    with pytest.raises(ConfigError):
        check_finess([0.5], 2)


@pytest.mark.parametrize("data,field", [
    ({"model": "sabr"}, "model"),
    (lv1d_job(market={"assets": ["asset1", "asset2"]}), "market.assets"),
    (lv1d_job(payoff={"kind": "basket"}), "payoff.kind"),
    (lv1d_job(payoff={"kind": "call", "strike": -5.0}), "payoff.strike"),
    (lv1d_job(steps=0), "steps"),
    (lv1d_job(steps=2.5), "steps"),
    (lv1d_job(maturity="1y"), "maturity"),
    (lv1d_job(interp="bicubic"), "interp"),
    (lv1d_job(interp="lanczos"), "interp"),
    ({"model": "mc_heston", "payoff": {"kind": "put", "american": True}}, "payoff.american"),
    ({"model": "mc_lv", "mc": {"paths": 1001}}, "mc.paths"),
    ({"model": "lv2d", "market": {"assets": ["asset1", "asset2"]}, "payoff": {"kind": "basket",
                                                                          "weights": [1.0]}}, "payoff.weights"),
    ({"model": "lv3d", "market": {"assets": ["asset1", "asset2", "asset3"]}, "payoff": {"kind": "spread"}},
     "payoff.kind"),
    (lv1d_job(output={"json": "yes"}), "output.json"),
])
def test_invalid_jobs_name_the_field(data, field):
    with pytest.raises(ConfigError) as info:
        PricingConfig.from_dict(data)
    assert info.value.field == field


def test_interp_is_normalized():
    assert PricingConfig.from_dict(lv1d_job(interp="Akima")).interp == "akima"
    lv2d = PricingConfig.from_dict({"model": "lv2d", "market": {"assets": ["asset1", "asset2"]},
                                    "payoff": {"kind": "basket"}, "interp": "keys"})
    assert lv2d.interp == "keys"


def test_inline_market_parameters_are_kept():
    config = PricingConfig.from_dict(lv1d_job(market={"assets": [dict(presets.ASSETS["asset2"])],
                                                      "curve": {"r0": 0.01, "r1": 0.01, "c": 1.0}}))
    assert presets.curve(config.market.curve).zero_rate(3.0) == pytest.approx(0.01)
    assert presets.surface(config.market.assets[0]).v0 == pytest.approx(0.2)


def test_unknown_preset_is_a_config_error():
    with pytest.raises(ConfigError) as info:
        presets.surface("asset9")
    assert info.value.field == "market.assets"
    with pytest.raises(ConfigError):
        presets.curve({"r0": 0.01, "r1": 0.01, "c": -1.0})
    with pytest.raises(ConfigError):
        presets.hull_white({"k": 0.05})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(broken))


def test_store_save_load_delete(tmp_path):
    store = ConfigStore(base_dir=str(tmp_path))
    assert store.list_configs() == []
    assert store.save("atm", lv1d_job())
    assert store.list_configs() == ["atm"]
    loaded = store.load("atm")
    assert loaded.model == "lv1d" and loaded.name == "atm"
    assert store.load("nothing") is None
    assert store.delete("atm")
    assert not store.delete("atm")
    assert store.list_configs() == []


def test_store_import_validates(tmp_path):
    store = ConfigStore(base_dir=str(tmp_path / "store"))
    job = tmp_path / "my_job.json"
    job.write_text(json.dumps(lv1d_job()))
    assert store.import_file(str(job)) == "my_job"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(lv1d_job(grid_finess=2.0)))
    with pytest.raises(ConfigError):
        store.import_file(str(bad), "bad")
    assert store.list_configs() == ["my_job"]


def test_store_rejects_path_names(tmp_path):
    with pytest.raises(ConfigError):
        ConfigStore(base_dir=str(tmp_path)).save("a/b", lv1d_job())


def test_store_defaults_under_home(config_home):
    store = ConfigStore()
    assert store.configs_dir == str(config_home / ".config" / "odgrid" / "configs")
