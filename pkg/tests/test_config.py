import json
import math

import numpy as np
import pytest

from cfmimo.config import (ConfigError, SystemConfig, config_from_dict, dbm_to_watt,
                           expand_adc_bits, hardware_profile, load_config)


def test_defaults_and_anchor():
    cfg = SystemConfig()
    assert (cfg.M, cfg.K, cfg.N, cfg.tau_c, cfg.tau_p) == (16, 8, 2, 50, 4)
    assert cfg.anchor == 5
    assert cfg.adc_bits.shape == (32,)
    assert np.all(np.isinf(cfg.adc_bits))


def test_dbm_boundary_conversion():
    cfg = config_from_dict({"p_max_dbm": 20, "noise_power_dbm": -94, "pilot_power_dbm": 10,
                            "velocities_kmh": 36})
    assert cfg.p_max == pytest.approx(0.1, rel=1e-15)
    assert cfg.noise_power == pytest.approx(10 ** (-12.4), rel=1e-12)
    np.testing.assert_allclose(cfg.pilot_power, 0.01)
    np.testing.assert_allclose(cfg.velocities, 10.0)
    assert dbm_to_watt(30) == pytest.approx(1.0)


@pytest.mark.parametrize("doc, path", [
    ({"M": 0}, "M"),
    ({"tau_p": 50, "tau_c": 50}, "tau_p"),
    ({"kappa_t": -0.1}, "kappa_t"),
    ({"adc_bits": [1, 0]}, "adc_bits"),
    ({"unknown": 1}, ""),
    ({"velocities": [1.0, 2.0]}, "velocities"),
])
def test_invalid_config_reports_field(doc, path):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(doc)
    assert exc.value.path.startswith(path)


def test_adc_expansion_patterns():
    np.testing.assert_array_equal(expand_adc_bits(3, 2, 2), [3, 3, 3, 3])
    np.testing.assert_array_equal(expand_adc_bits([1, 4], 2, 2), [1, 1, 4, 4])
    np.testing.assert_array_equal(expand_adc_bits([1, 2, 3, 4], 2, 2), [1, 2, 3, 4])
    np.testing.assert_array_equal(expand_adc_bits({"ap_groups": [1, 2]}, 4, 1), [1, 1, 2, 2])
    with pytest.raises(ConfigError):
        expand_adc_bits([1, 2, 3], 2, 2)


def test_ideal_marker_from_json():
    cfg = config_from_dict({"M": 2, "N": 2, "adc_bits": ["ideal", 1]})
    assert math.isinf(cfg.adc_bits[0]) and cfg.adc_bits[2] == 1


def test_with_resizes_uniform_arrays():
    cfg = SystemConfig(kappa_t=0.1).with_(K=4, M=3)
    assert cfg.kappa_t.shape == (4,) and cfg.kappa_r.shape == (3,)
    assert cfg.adc_bits.shape == (6,)


def test_load_config_file(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"M": 4, "K": 2, "seed": 9}))
    cfg = load_config(f)
    assert (cfg.M, cfg.K, cfg.seed) == (4, 2, 9)
    f.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(f)


def test_hardware_profiles():
    cfg = SystemConfig(M=4, N=2, K=2)
    dyn = hardware_profile(cfg, "rf_dynamic_adc")
    np.testing.assert_array_equal(dyn.adc_bits, [1, 1, 2, 2, 4, 4, 6, 6])
    assert np.all(hardware_profile(cfg, "one_bit").dac_bits == 1)
    with pytest.raises(ConfigError):
        hardware_profile(cfg, "nope")
