import math
import os
import subprocess

import numpy as np
import pytest

import tttm


def test_wasserstein_shift():
    a = np.array([0.0, 1.0, 2.0])
    assert tttm.wasserstein1(a, a + 0.5) == pytest.approx(0.5)
    assert tttm.wasserstein1(a, a) == 0.0


def test_dbscan_two_groups():
    labels = tttm.dbscan(np.array([0.0, 0.1, 0.2, 5.0, 5.1, 5.2]), 0.15, 2)
    assert labels[0] == labels[1] == labels[2]
    assert labels[3] == labels[4] == labels[5]
    assert labels[0] != labels[3]


def test_mann_kendall_and_detrend():
    x = np.arange(30, dtype=float)
    mk = tttm.mann_kendall(x)
    assert mk["reject"] and mk["trend"] == "up"
    resid, degree = tttm.detrend(2.0 * x + 1.0, 1e-8)
    assert 1 <= degree <= 3
    assert np.var(resid) < 1e-10 * np.var(x)


def test_periodogram_matches_numpy():
    rng = np.random.default_rng(3)
    x = rng.normal(size=16)
    got = np.asarray(tttm.periodogram(x, 16))
    want = np.abs(np.fft.rfft(x)) ** 2 / 16
    np.testing.assert_allclose(got[: len(want)], want[: len(got)], rtol=1e-9, atol=1e-12)


def test_graph_distance_union():
    full = np.ones((2, 2)) - np.eye(2)
    d = tttm.graph_edit_distance(["a", "b"], full, ["a", "c"], full, 4.0)
    assert d == pytest.approx(1.0)
    assert tttm.graph_edit_distance(["a", "b"], full, ["a", "b"], full, 4.0) == 0.0


def test_synth_score_and_pipeline(tmp_path):
    spec = {
        "q_tools": 4,
        "n_sensors": 3,
        "points_per_tool": [150],
        "seed": 7,
        "deviations": [{"tool": "T02", "sensors": ["S02"], "kind": "mean_shift", "magnitude": 4.0}],
    }
    csv, truth = tttm.synth(spec)
    assert truth["labels"][0]["sensor"] == "S02"
    path = tmp_path / "fleet.csv"
    path.write_text(csv)

    fleet = tttm.load_tsum(str(path))
    sensors, stamps, values = fleet["T01"]
    assert sensors == ["S01", "S02", "S03"]
    assert values.shape == (3, 150)

    r = tttm.score(str(path), "wd")
    top = r["sensors"][int(np.argmax(r["sensor_scores"]))]
    assert top == "S02"
    assert r["tools"][int(np.argmax(r["tool_scores"]))] == "T02"

    report = tttm.run_pipeline({"method": "dbscan", "input": str(path), "out": str(tmp_path / "out")})
    assert report["tools"] == ["T01", "T02", "T03", "T04"]
    assert (tmp_path / "out" / "sensor_scores.csv").exists()


def test_cli_matches_module(tmp_path):
    cli = os.environ.get("TTTM_CLI")
    if not cli:
        pytest.skip("TTTM_CLI not set")
    csv, _ = tttm.synth({"q_tools": 3, "n_sensors": 2, "points_per_tool": [80], "seed": 1})
    path = tmp_path / "fleet.csv"
    path.write_text(csv)
    subprocess.run([cli, "score-uni", "--method", "dbscan", "--input", str(path), "--out", str(tmp_path / "r")],
                   check=True, capture_output=True)
    lines = (tmp_path / "r" / "sensor_scores.csv").read_text().strip().splitlines()[1:]
    got = {ln.split(",")[0]: float(ln.split(",")[1]) for ln in lines}
    r = tttm.score(str(path), "dbscan")
    for s, v in zip(r["sensors"], r["sensor_scores"]):
        assert math.isclose(got[s], v, rel_tol=1e-5, abs_tol=1e-6)
