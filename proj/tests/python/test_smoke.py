import json

import numpy as np
import pytest

import raftlab


def test_version():
    assert raftlab.__version__ == "0.1.0"


def test_blobs_are_unit_rows():
    x, y = raftlab.make_blobs(dim=5, classes=3, per_class=10, seed=1)
    assert x.shape == (30, 5)
    assert sorted(set(y)) == [0, 1, 2]
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_losses_match_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 4))
    b = rng.normal(size=(6, 4))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    expected = np.mean(np.sum((a - b) ** 2, axis=1))
    assert raftlab.align_loss(a, b) == pytest.approx(expected, rel=1e-12)
    assert raftlab.cross_model_loss(a, b) == pytest.approx(expected, rel=1e-12)

    d2 = np.sum((a[:, None, :] - a[None, :, :]) ** 2, axis=-1)
    off = ~np.eye(6, dtype=bool)
    assert raftlab.uniform_loss(a, 2.0) == pytest.approx(np.log(np.mean(np.exp(-2.0 * d2[off]))), rel=1e-12)


def test_uniformity_of_antipodal_pair():
    z = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert raftlab.uniform_loss(z, 2.0) == pytest.approx(-8.0)


def test_config_errors_name_the_field():
    with pytest.raises(raftlab.RaftlabError, match="loss.objective"):
        raftlab.resolve_config({"loss": {"objective": "simclr"}})
    assert raftlab.resolve_config({})["steps"] == 2000


def test_train_is_deterministic(tmp_path):
    cfg = {"steps": 30, "log_every": 10}
    log_a, ckpts, sum_a = raftlab.train(cfg, str(tmp_path / "a"))
    log_b, _, sum_b = raftlab.train(cfg, str(tmp_path / "b"))
    assert [r["step"] for r in log_a] == [10, 20, 30]
    assert log_a == log_b and sum_a == sum_b
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    report = raftlab.evaluate(ckpts[-1], {"probe": {"epochs": 5}})
    assert 0.0 <= report["probe_accuracy"] <= 1.0
    assert report["uniformity"] <= 0.0


def test_verification_entry_points():
    assert raftlab.upper_bound_sweep(trials=50)["passed"]
    assert raftlab.gradient_correspondence(trials=10)["passed"]
    assert raftlab.trajectory_correspondence(steps=20)["passed"]
    assert raftlab.tangential_trick(trials=10)["passed"]
    with pytest.raises(raftlab.RaftlabError, match="condition ii"):
        raftlab.trajectory_correspondence(steps=5, predictor="mlp")


def test_sylvester_cases():
    eye = np.eye(2)
    assert raftlab.sylvester_null_space(eye, eye, eye)["null_dim"] == 4
    assert raftlab.sylvester_null_space(2 * eye, eye, eye)["null_dim"] == 0
    assert raftlab.sylvester_null_space(np.diag([1.0, 2.0]), eye, eye)["null_dim"] == 2
