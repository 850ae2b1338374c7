import json

import numpy as np
import pytest

import restad


def test_metrics_examples():
    assert restad.auc_pr([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(11 / 12, abs=1e-12)
    assert restad.auc_roc([0.1, 0.9], [0, 1]) == 1.0
    assert restad.vus_roc([0.1, 0.9, 0.4], [0, 1, 0], 0) == restad.auc_roc([0.1, 0.9, 0.4], [0, 1, 0])
    delta, flagged = restad.quantile_threshold(np.zeros(1000), 0.01)
    assert int(flagged.sum()) == 10


def test_composite_criteria():
    r, s = [0.0, 1.0], [1.0, 0.0]
    assert list(restad.composite_score(r, s, "r_times_s")) == [0.0, 0.0]
    assert list(restad.composite_score(r, s, "r_plus_s")) == [1.0, 1.0]
    assert list(restad.composite_score(r, None, "r_only")) == [0.0, 1.0]
    with pytest.raises(restad.ConfigError):
        restad.composite_score(r, s, "r_minus_s")


def test_synthetic_and_model_forward():
    spec = restad.default_synth_spec(seed=1, test_length=400, n_spikes=2, n_drifts=2)
    spec["train_length"] = 400
    data = restad.generate_synthetic(spec)
    assert data["train"].shape == (400, 2)
    assert data["test_labels"].sum() == 2 + 2 * 10
    windows, starts, dropped = restad.windowize(data["test"], 20)
    assert windows.shape == (20, 20, 2) and dropped == 0
    m = restad.model({"input_dim": 2, "window_len": 20, "d_model": 8, "ffn_dim": 16, "n_heads": 2, "n_centers": 4})
    recon, z = m.forward(windows[:3])
    assert recon.shape == (3, 20, 2)
    assert z.shape == (3, 20, 4)
    assert np.all((z > 0) & (z <= 1))
    eps_r, eps_s = m.score(windows)
    assert eps_r.shape == (400,) and eps_s.shape == (400,)
    with pytest.raises(restad.ContractError, match=r"\[1, 20, 3\]"):
        m.forward(np.zeros((1, 20, 3)))


def test_train_eval_round_trip(tmp_path):
    spec = restad.default_synth_spec(seed=2, test_length=400, n_spikes=2, n_drifts=2)
    spec["train_length"] = 400
    config = {
        "data": {"synth": spec},
        "model": {"window_len": 20, "d_model": 8, "ffn_dim": 16, "n_heads": 2, "n_centers": 4},
        "train": {"epochs": 1, "batch_size": 8},
        "output_dir": str(tmp_path / "run"),
        "seed": 3,
    }
    written = restad.train(config)
    ckpt = tmp_path / "run" / "checkpoint.json"
    assert str(ckpt) in written
    m = restad.Model.load(str(ckpt))
    assert json.loads(m.config_json())["input_dim"] == 2
    files = restad.evaluate_checkpoint(ckpt, {"synth": spec}, ["r_times_s", "r_only"], out_dir=tmp_path / "eval")
    report = json.loads((tmp_path / "eval" / "report_r_times_s.json").read_text())
    assert 0.0 <= report["auc_roc"] <= 1.0
    assert report["checksum"] == m.checksum()
    assert len(files) == 4

    # Same config, same bytes.
    config["output_dir"] = str(tmp_path / "run2")
    restad.train(config)
    assert (tmp_path / "run2" / "checkpoint.json").read_bytes() == ckpt.read_bytes()


def test_config_errors_name_the_key():
    with pytest.raises(restad.ConfigError, match="epochz"):
        restad.train({"train": {"epochz": 1}})
