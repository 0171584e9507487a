import shutil

import pytest

from cqedtrap.config import (
    ConfigError,
    data_path,
    load_experiment,
    load_fort,
    load_params,
    load_run_config,
    load_timing,
    parse_kv,
)
from cqedtrap.physics import TWO_PI


def test_shipped_bundle_loads():
    cfg = load_run_config()
    params, species = cfg.params()
    assert params.g0 / TWO_PI == pytest.approx(32e6)
    assert cfg.fort().stark_ground == pytest.approx(-45e6)
    assert cfg.timing().t3_cool_end_probe_on == pytest.approx(35.5e-3)
    exp = cfg.experiment()
    assert exp.master_seed == 20240601
    assert exp.protocol.fort.stark_ground == pytest.approx(-50e6)
    assert exp.protocol.fort.noise_psd is not None
    assert exp.protocol.chain.threshold_fraction == 0.5


def test_parse_kv_comments_and_errors(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("# header\nx = 1  # trailing\n\ny=two\n")
    assert parse_kv(p) == {"x": "1", "y": "two"}
    p.write_text("x = 1\nx = 2\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_kv(p)
    p.write_text("just words\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_kv(p)
    with pytest.raises(ConfigError, match="not found"):
        parse_kv(tmp_path / "missing.cfg")


def test_unknown_key_rejected(tmp_path):
    src = data_path("params.cfg").read_text()
    p = tmp_path / "params.cfg"
    p.write_text(src + "mystery_knob = 3\n")
    with pytest.raises(ConfigError, match="mystery_knob"):
        load_params(p)


def test_bad_value_rejected(tmp_path):
    p = tmp_path / "timing.cfg"
    p.write_text(data_path("timing.cfg").read_text().replace("hold_delay_s = 10e-3", "hold_delay_s = soon"))
    with pytest.raises(ConfigError):
        load_timing(p)


def test_inconsistent_values_rejected(tmp_path):
    p = tmp_path / "timing.cfg"
    p.write_text(data_path("timing.cfg").read_text().replace("t2_cool_rampdown_start_s = 35e-3",
                                                             "t2_cool_rampdown_start_s = 36e-3"))
    with pytest.raises(ConfigError):
        load_timing(p)


def test_fort_psd_reference_resolves_relative_to_file():
    fort = load_fort(data_path("fort_trace.cfg"))
    assert fort.noise_psd is not None
    assert fort.noise_psd(1e3) == pytest.approx(5e-9)


def _copy_bundle(tmp_path):
    for f in data_path().iterdir():
        if f.is_file():
            shutil.copy(f, tmp_path / f.name)
    return tmp_path / "run.cfg"


def test_hash_tracks_every_file(tmp_path):
    run = _copy_bundle(tmp_path)
    h0 = load_run_config(run).config_hash()
    assert load_run_config(run).config_hash() == h0
    # the PSD is read only through the FORT file of the experiment
    psd = tmp_path / "fort_noise_psd.csv"
    psd.write_text(psd.read_text() + "\n")
    assert load_run_config(run).config_hash() != h0


def test_missing_referenced_file(tmp_path):
    run = _copy_bundle(tmp_path)
    (tmp_path / "timing.cfg").unlink()
    with pytest.raises(ConfigError, match="timing_file"):
        load_run_config(run)


def test_experiment_keys_reach_protocol(tmp_path):
    run = _copy_bundle(tmp_path)
    exp_file = tmp_path / "experiment.cfg"
    exp_file.write_text(exp_file.read_text().replace("threshold_fraction = 0.5", "threshold_fraction = 0.45")
                        .replace("trials_per_delay = 200", "trials_per_delay = 60"))
    exp = load_run_config(run).experiment()
    assert exp.protocol.chain.threshold_fraction == 0.45
    assert exp.trials_per_delay == 60
