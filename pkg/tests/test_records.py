"""Trajectory and summary serialization: byte stability, NaN handling."""

import json
import math

import numpy as np
import pytest

from bpac.core import RouterConfig, ThresholdGrid
from bpac.records import (
    RecordFormatError,
    read_trajectory,
    write_summary_json,
    write_trajectory,
    write_wealth_snapshots,
)
from bpac.simulation import run_replication, uniform_linear


@pytest.fixture(scope="module")
def traj():
    return run_replication("bpac", RouterConfig(), uniform_linear(), 120,
                           seed=17, emit_wealth_every=60)


class TestTrajectoryFiles:
    def test_round_trip_columns(self, traj, tmp_path):
        path = tmp_path / "traj.csv"
        write_trajectory(path, traj)
        back = read_trajectory(path)
        assert back.config_hash == traj.config_hash
        assert back.method == traj.method
        for name in ("t", "xi"):
            np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))
        for name in ("uncertainty", "rho", "pi", "u_hat", "ecp", "tp", "er",
                     "latent_loss", "realized_loss", "deploy_risk"):
            np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))

    def test_nan_columns_survive(self, traj, tmp_path):
        # iid stream leaves weighted_risk NaN throughout
        path = tmp_path / "traj.csv"
        write_trajectory(path, traj)
        back = read_trajectory(path)
        assert np.all(np.isnan(back.weighted_risk))

    def test_rewrite_is_byte_identical(self, traj, tmp_path):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        write_trajectory(first, traj)
        write_trajectory(second, read_trajectory(first))
        assert first.read_bytes() == second.read_bytes()

    def test_header_line_carries_config_hash(self, traj, tmp_path):
        path = tmp_path / "traj.csv"
        write_trajectory(path, traj)
        assert path.read_text().splitlines()[0] == f"# config_hash={traj.config_hash}"

    def test_missing_hash_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,uncertainty\n1,0.5\n")
        with pytest.raises(RecordFormatError, match="config_hash"):
            read_trajectory(path)

    def test_wrong_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# config_hash=abc\nt,foo\n1,2\n")
        with pytest.raises(RecordFormatError, match="columns"):
            read_trajectory(path)


class TestWealthSnapshots:
    def test_long_format_rows(self, traj, tmp_path):
        path = tmp_path / "wealth.csv"
        grid = ThresholdGrid.default().values
        write_wealth_snapshots(path, traj, grid)
        lines = path.read_text().splitlines()
        assert lines[1] == "t,u,log_wealth"
        # two snapshots (t=60, 120) over the 1001-point lattice
        assert len(lines) == 2 + 2 * 1001
        assert lines[2].startswith("60,0.0,")


class TestSummaryJson:
    def test_deterministic_and_sorted(self, tmp_path):
        payload = {"zeta": 1, "alpha": {"b": np.float64(2.5), "a": np.int64(3)}}
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_summary_json(a, payload)
        write_summary_json(b, dict(reversed(payload.items())))
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().endswith("\n")

    def test_nan_becomes_null(self, tmp_path):
        path = tmp_path / "s.json"
        write_summary_json(path, {"x": float("nan"), "arr": np.array([1.0, math.nan])})
        doc = json.loads(path.read_text())
        assert doc["x"] is None
        assert doc["arr"] == [1.0, None]

    def test_numpy_scalars_become_plain(self, tmp_path):
        path = tmp_path / "s.json"
        write_summary_json(path, {"n": np.int64(4), "f": np.float32(0.5),
                                  "tup": (np.int64(1), 2)})
        doc = json.loads(path.read_text())
        assert doc == {"n": 4, "f": 0.5, "tup": [1, 2]}
