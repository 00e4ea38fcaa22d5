import json
import logging
import os

import numpy as np
import pytest

from galpreint import euroc
from galpreint.errors import NonMonotonicTimestamp, ParseError
from galpreint.sim import TrajectoryParams, analytic_state

DATA = os.path.join(os.path.dirname(__file__), "data")
CLEAN = os.path.join(DATA, "euroc_clean")

IMU_HEADER = "#timestamp [ns],w_x,w_y,w_z,a_x,a_y,a_z\n"


def _write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def test_parse_imu_with_header_and_units(tmp_path):
    p = _write(tmp_path / "imu.csv", IMU_HEADER + "1000000000,1,2,3,4,5,6\n1005000000,1,2,3,4,5,6\n")
    imu = euroc.parse_imu_csv(p)
    np.testing.assert_allclose(imu.t, [1.0, 1.005])
    np.testing.assert_array_equal(imu.accel[1], [4, 5, 6])
    assert imu.median_dt == pytest.approx(0.005)


def test_parse_error_reports_line_number(tmp_path):
    p = _write(tmp_path / "imu.csv", IMU_HEADER + "1,0,0,0,0,0,0\n2,0,0,x,0,0,0\n")
    with pytest.raises(ParseError) as exc:
        euroc.parse_imu_csv(p)
    assert exc.value.line == 3 and "line 3" in str(exc.value)
    p = _write(tmp_path / "short.csv", "1,0,0\n")
    with pytest.raises(ParseError):
        euroc.parse_imu_csv(p)


def test_non_monotonic_timestamps(tmp_path):
    p = _write(tmp_path / "imu.csv", "1,0,0,0,0,0,0\n3,0,0,0,0,0,0\n2,0,0,0,0,0,0\n")
    with pytest.raises(NonMonotonicTimestamp) as exc:
        euroc.parse_imu_csv(p)
    assert exc.value.line == 3


def test_gaps_are_flagged(tmp_path, caplog):
    rows = [f"{k * 5_000_000},0,0,0,0,0,0" for k in range(10)] + ["100000000,0,0,0,0,0,0"]
    p = _write(tmp_path / "imu.csv", "\n".join(rows) + "\n")
    with caplog.at_level(logging.WARNING):
        imu = euroc.parse_imu_csv(p)
    assert list(imu.gaps) == [9]
    assert "gap" in caplog.text


def test_groundtruth_quaternions_are_renormalized(tmp_path, caplog):
    row = "1000000000,0,0,0,2,0,0,0,0,0,0,0,0,0,0,0,0\n"
    p = _write(tmp_path / "gt.csv", row)
    with caplog.at_level(logging.WARNING):
        gt = euroc.parse_groundtruth_csv(p)
    np.testing.assert_allclose(gt.quaternion[0], [1, 0, 0, 0])
    assert "quaternion" in caplog.text


def test_missing_layout_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        euroc.find_sequence_files(str(tmp_path))


def test_interpolation_recovers_the_analytic_path():
    p = TrajectoryParams(imu_rate=200.0, duration=2.0)
    t = p.times()
    T, _, _ = analytic_state(p, t)
    q = np.roll(euroc.Rotation.from_matrix(T.R).as_quat(), 1, axis=-1)
    gt = euroc.GroundTruth(t, T.p, q, T.v, np.zeros((len(t), 3)), np.zeros((len(t), 3)))
    tq = t[:-1] + 0.5 * p.dt
    pose, _, ok = euroc.interpolate_groundtruth(gt, tq)
    Tq, _, _ = analytic_state(p, tq)
    assert ok.all()
    np.testing.assert_allclose(pose.p, Tq.p, atol=1e-4)
    np.testing.assert_allclose(pose.R, Tq.R, atol=1e-4)
    _, _, ok = euroc.interpolate_groundtruth(gt, [t[-1] + 1.0])
    assert not ok.any()


def test_clean_fixture_gives_zero_nees():
    table, segments = euroc.evaluate_dataset(CLEAN, sigma0=1e-6)
    for row in table.values():
        for m in ("equivariant", "baseline"):
            assert row[m]["count"] > 0
            assert row[m]["median"] < 1e-12
    assert all(np.isfinite(list(s.nees.values())).all() for s in segments)


def test_segments_are_consecutive_windows():
    imu, gt = euroc.load_sequence(CLEAN)
    starts, n = euroc.segment_indices(imu, gt, 0.5)
    assert n == 100
    assert np.all(np.diff(starts) == n)


def test_summary_statistics():
    s = euroc.summarize([1.0, 2.0, 3.0, 4.0])
    assert s["median"] == 2.5 and s["count"] == 4 and s["q25"] == 1.75
    assert euroc.summarize([])["median"] is None


def test_make_fixture_and_outputs(tmp_path):
    root = tmp_path / "seq"
    euroc.make_fixture(str(root), duration=1.0)
    table, segments = euroc.evaluate_dataset(str(root), dt_list=(0.2,))
    assert table["0.2"]["equivariant"]["count"] == 5
    euroc.write_segments_csv(tmp_path / "s.csv", segments)
    euroc.write_table_json(tmp_path / "t.json", "seq", table)
    assert (tmp_path / "s.csv").read_text().startswith("t_start,dt_ij,method,nees")
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["n"] == 15 and "seq" in doc["table"]
