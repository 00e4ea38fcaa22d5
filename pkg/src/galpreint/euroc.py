"""Sub-trajectory NEES evaluation on EuRoC-format datasets.

A sequence is cut into consecutive windows of ``Dt_ij`` seconds. Every method
starts each window from the ground-truth bias with the same initial covariance,
integrates the IMU samples of the window and is scored with the NEES of its
15-dim error against the ground-truth preintegration matrix at the window end.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from . import baseline as bl
from .errors import NonMonotonicTimestamp, ParseError, SegmentSkipped
from .gal3 import Gal3Element, exp_gal3
from .preintegration import (
    NEES_INDICES,
    ManifoldState,
    NoiseParams,
    PreintState,
    equivariant_error,
    gamma_matrix,
    imu_input,
    initial_state,
    relative_upsilon,
    step,
)
from .se23 import ExtendedPose
from .so3 import EPS_AXIS, rotation_angle

log = logging.getLogger(__name__)

GRAVITY = np.array([0.0, 0.0, -9.81])
# continuous-time densities of the EuRoC ADIS16448 sensor
EUROC_NOISE_DENSITY = {"gyro": 1.6968e-4, "accel": 2.0e-3, "gyro_walk": 1.9393e-5, "accel_walk": 3.0e-3}
DEFAULT_SIGMA0 = 1e-6
MATCH_TOLERANCE = 5e-3
MAX_COND = 1e12
METHODS = ("equivariant", "baseline")
NS = 1e-9


@dataclass(frozen=True, eq=False)
class ImuData:
    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    gaps: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def median_dt(self):
        return float(np.median(np.diff(self.t)))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    t: np.ndarray
    position: np.ndarray
    quaternion: np.ndarray  # w, x, y, z
    velocity: np.ndarray
    gyro_bias: np.ndarray
    accel_bias: np.ndarray

    def __len__(self):
        return len(self.t)


@dataclass
class SegmentResult:
    t_start: float
    Dt_ij: float
    nees: dict


def _read_rows(path, ncols):
    rows, lines = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if len(row) < ncols:
                raise ParseError(f"expected {ncols} columns, found {len(row)}", lineno)
            try:
                rows.append([float(x) for x in row[:ncols]])
            except ValueError:
                # a header without a leading '#'
                if not rows and lineno == 1:
                    continue
                raise ParseError(f"non-numeric field in {row!r}", lineno) from None
            lines.append(lineno)
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    return np.array(rows), np.array(lines)


def _check_increasing(t, lines):
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if len(bad):
        i = bad[0] + 1
        raise NonMonotonicTimestamp(f"timestamp {t[i]!r} does not increase", int(lines[i]))


def parse_imu_csv(path) -> ImuData:
    """Rows of ``timestamp [ns], gyro xyz [rad/s], accel xyz [m/s^2]``."""
    data, lines = _read_rows(path, 7)
    _check_increasing(data[:, 0], lines)
    t = data[:, 0] * NS
    gaps = np.zeros(0, dtype=int)
    if len(t) > 2:
        d = np.diff(t)
        gaps = np.nonzero(d > 3 * np.median(d))[0]
        if len(gaps):
            log.warning("%s: %d IMU gaps longer than 3x the median interval", path, len(gaps))
    return ImuData(t, data[:, 1:4], data[:, 4:7], gaps)


def parse_groundtruth_csv(path) -> GroundTruth:
    """Rows of ``t [ns], p xyz, q wxyz, v xyz, gyro bias xyz, accel bias xyz``."""
    data, lines = _read_rows(path, 17)
    _check_increasing(data[:, 0], lines)
    q = data[:, 4:8]
    norm = np.linalg.norm(q, axis=1)
    if np.any(norm < 0.5):
        i = int(np.argmin(norm))
        raise ParseError("degenerate quaternion", int(lines[i]))
    if np.any(np.abs(norm - 1) > 1e-3):
        log.warning("%s: quaternion norms deviate from 1 by up to %.2e", path, np.max(np.abs(norm - 1)))
    return GroundTruth(data[:, 0] * NS, data[:, 1:4], q / norm[:, None], data[:, 8:11], data[:, 11:14],
                       data[:, 14:17])


def find_sequence_files(root):
    """Locate the IMU and ground-truth CSVs under a dataset directory."""
    for base in (os.path.join(root, "mav0"), root):
        imu = os.path.join(base, "imu0", "data.csv")
        gt = os.path.join(base, "state_groundtruth_estimate0", "data.csv")
        if os.path.isfile(imu) and os.path.isfile(gt):
            return imu, gt
    raise FileNotFoundError(f"no EuRoC layout (mav0/imu0, mav0/state_groundtruth_estimate0) under {root}")


def load_sequence(root):
    imu, gt = find_sequence_files(root)
    return parse_imu_csv(imu), parse_groundtruth_csv(gt)


def _to_scipy(q_wxyz):
    return Rotation.from_quat(np.roll(q_wxyz, -1, axis=-1))


def interpolate_groundtruth(gt: GroundTruth, t, tol=MATCH_TOLERANCE):
    """Ground truth at times ``t``: pose, velocity and (gyro, accel) bias.

    Each time must lie within ``tol`` of a ground-truth record; positions,
    velocities and biases are linear in time and orientation uses slerp.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    idx = np.clip(np.searchsorted(gt.t, t), 1, len(gt) - 1)
    nearest = np.minimum(np.abs(gt.t[idx] - t), np.abs(gt.t[idx - 1] - t))
    if len(gt) == 1:
        nearest = np.abs(gt.t[0] - t)
    ok = (nearest <= tol) & (t >= gt.t[0] - tol) & (t <= gt.t[-1] + tol)
    tc = np.clip(t, gt.t[0], gt.t[-1])

    def lin(x):
        return np.stack([np.interp(tc, gt.t, x[:, i]) for i in range(x.shape[1])], axis=-1)

    if len(gt) > 1:
        R = Slerp(gt.t, _to_scipy(gt.quaternion))(tc).as_matrix()
    else:
        R = np.broadcast_to(_to_scipy(gt.quaternion).as_matrix(), (len(t), 3, 3))
    pose = ExtendedPose(R, lin(gt.velocity), lin(gt.position))
    bias = np.concatenate([lin(gt.gyro_bias), lin(gt.accel_bias)], axis=-1)
    return pose, bias, ok


def _nees_checked(eps, Sigma):
    """NEES via Cholesky solves; NaN where the covariance is ill-conditioned."""
    w = np.linalg.eigvalsh(Sigma)
    ok = (w[:, 0] > 0) & (w[:, -1] < MAX_COND * w[:, 0])
    S = np.where(ok[:, None, None], Sigma, np.eye(Sigma.shape[-1]))
    L = np.linalg.cholesky(S)
    z = np.linalg.solve(L, eps[..., None])[..., 0]
    return np.where(ok, np.sum(z * z, axis=-1), np.nan)


def segment_indices(imu: ImuData, gt: GroundTruth, Dt_ij):
    """Start indices and common sample count of consecutive windows."""
    n = int(round(Dt_ij / imu.median_dt))
    if n < 1:
        raise ValueError("Dt_ij shorter than one IMU interval")
    first = int(np.searchsorted(imu.t, gt.t[0] - MATCH_TOLERANCE))
    last = int(np.searchsorted(imu.t, gt.t[-1] + MATCH_TOLERANCE, side="right")) - 1
    starts = np.arange(first, last - n + 1, n)
    return starts, n


def evaluate_sequence(imu: ImuData, gt: GroundTruth, Dt_ij, methods=METHODS, sigma0=DEFAULT_SIGMA0,
                      noise: NoiseParams | None = None, g=GRAVITY):
    """Per-window NEES for each method and a summary of their distributions."""
    if noise is None:
        noise = euroc_noise(imu.median_dt)
    g = np.asarray(getattr(g, "g", g), dtype=float)
    starts, n = segment_indices(imu, gt, Dt_ij)
    if len(starts) == 0:
        raise ValueError(f"sequence shorter than one window of {Dt_ij} s")
    ends = starts + n
    skipped = 0

    # windows crossing an IMU gap are dropped
    gap_hit = np.zeros(len(starts), dtype=bool)
    for gi in imu.gaps:
        gap_hit |= (starts <= gi) & (gi < ends)
    pose_i, bias_i, ok_i = interpolate_groundtruth(gt, imu.t[starts])
    pose_j, bias_j, ok_j = interpolate_groundtruth(gt, imu.t[ends])
    keep = ok_i & ok_j & ~gap_hit
    skipped += int(np.sum(~keep))
    if not keep.any():
        raise SegmentSkipped("no window has ground truth at both ends")
    starts, ends = starts[keep], ends[keep]
    take = lambda T: ExtendedPose(T.R[keep], T.v[keep], T.p[keep])
    pose_i, pose_j, bias_i, bias_j = take(pose_i), take(pose_j), bias_i[keep], bias_j[keep]
    S = len(starts)

    Dt = imu.t[ends] - imu.t[starts]
    U_true = relative_upsilon(pose_i, pose_j, Dt, g)
    b_true = np.zeros((S, 10))
    b_true[:, :6] = bias_j
    sigma0_20 = _sigma0_matrix(sigma0)
    k_idx = starts[:, None] + np.arange(n)[None, :]
    dts = imu.t[k_idx + 1] - imu.t[k_idx]
    estimates = {}
    if "equivariant" in methods:
        s = initial_state(bias_i, sigma0_20, shape=(S,))
        Q = noise.discrete_covariance()
        for k in range(n):
            i = k_idx[:, k]
            s = step(s, imu_input(imu.gyro[i], imu.accel[i], dts[:, k]), Q, track_bias_jacobian=False)
        estimates["equivariant"] = s
    if "baseline" in methods:
        sb = bl.baseline_initial_state(bias_i, sigma0_20, shape=(S,))
        Q = bl.noise_covariance(noise)
        for k in range(n):
            i = k_idx[:, k]
            sb = bl.baseline_propagate(sb, imu_input(imu.gyro[i], imu.accel[i], dts[:, k]), Q)
        estimates["baseline"] = sb

    # both methods share the mean, so one rotation check covers them
    U_hat = next(iter(estimates.values()))
    U_hat = U_hat.upsilon if hasattr(U_hat, "X_hat") else U_hat.upsilon()
    ok = rotation_angle(U_true.A @ np.swapaxes(U_hat.A, -1, -2)) < np.pi - EPS_AXIS
    U_ok = U_true[ok]
    nees = {}
    for name, est in estimates.items():
        vals = np.full(S, np.nan)
        if name == "equivariant":
            e = equivariant_error(_subset(est, ok), ManifoldState(U_ok, b_true[ok]))
            vals[ok] = _nees_checked(e[:, NEES_INDICES], est.Sigma[ok][:, NEES_INDICES][:, :, NEES_INDICES])
        else:
            e = bl.baseline_error(_subset_baseline(est, ok), ExtendedPose.from_gal3(U_ok), bias_j[ok])
            vals[ok] = _nees_checked(e, est.Sigma15[ok])
        nees[name] = vals
    ill = ~ok
    for v in nees.values():
        ill |= ~np.isfinite(v)
    skipped += int(np.sum(ill))

    segments = [SegmentResult(float(imu.t[starts[i]]), float(Dt_ij), {m: float(nees[m][i]) for m in nees})
                for i in range(S) if not ill[i]]
    summary = {m: summarize(nees[m][~ill]) for m in nees}
    summary["_meta"] = {"segments": int(np.sum(~ill)), "skipped": skipped, "samples_per_segment": n,
                        "sigma0": _sigma0_repr(sigma0)}
    return segments, summary


def _subset(s, mask):
    return PreintState(s.X_hat[mask], s.Sigma[mask], s.J_xi[mask], s.elapsed[mask])


def _subset_baseline(s, mask):
    T = s.DeltaT
    return bl.BaselineState(ExtendedPose(T.R[mask], T.v[mask], T.p[mask]), s.Dt[mask], s.bias6[mask],
                            s.Sigma15[mask])


def summarize(values):
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return {"median": None, "mean": None, "q25": None, "q75": None, "count": 0}
    q25, med, q75 = np.percentile(values, [25, 50, 75])
    return {"median": float(med), "mean": float(np.mean(values)), "q25": float(q25), "q75": float(q75),
            "count": int(len(values))}


def euroc_noise(dt, scale=1.0):
    d = EUROC_NOISE_DENSITY
    return NoiseParams.from_continuous(d["gyro"], d["accel"], d["gyro_walk"], d["accel_walk"], dt).scaled(scale)


def _sigma0_matrix(sigma0):
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.shape == (20, 20):
        return sigma0
    diag = np.zeros(20)
    diag[NEES_INDICES] = np.broadcast_to(sigma0, (15,))
    return np.diag(diag)


def _sigma0_repr(sigma0):
    sigma0 = np.asarray(sigma0, dtype=float)
    return float(sigma0) if sigma0.ndim == 0 else sigma0.tolist()


def evaluate_dataset(root, dt_list=(0.2, 0.5, 1.0), methods=METHODS, sigma0=DEFAULT_SIGMA0, noise=None,
                     g=GRAVITY):
    """Table-shaped results ``{Dt_ij: {method: stats}}`` plus all window results."""
    imu, gt = load_sequence(root)
    table, segments = {}, []
    for dt_ij in dt_list:
        segs, summary = evaluate_sequence(imu, gt, dt_ij, methods, sigma0, noise, g)
        table[f"{dt_ij:g}"] = summary
        segments.extend(segs)
    return table, segments


def write_segments_csv(path, segments):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_start", "dt_ij", "method", "nees"])
        for s in segments:
            for m, v in s.nees.items():
                w.writerow([f"{s.t_start:.9f}", f"{s.Dt_ij:g}", m, repr(v)])


def write_table_json(path, sequence, table, header=None):
    with open(path, "w") as fh:
        json.dump({"report_version": 1, "header": header or {}, "n": 15, "table": {sequence: table}}, fh,
                  indent=2, sort_keys=True)


# Synthetic datasets ------------------------------------------------------------


def make_fixture(out_dir, duration=10.0, rate=200.0, noise: NoiseParams | None = None, seed=0,
                 bias=(0.002, -0.001, 0.003, 0.05, -0.03, 0.02), g=GRAVITY, trajectory=None):
    """Write a synthetic sequence in the EuRoC layout.

    The ground truth is the exact zero-order-hold integration of the true
    inputs, so a noise-free fixture is reproduced exactly by preintegration.
    With ``noise`` the measurements carry white noise and a random-walk bias
    generated from the same parameters the evaluator assumes.
    """
    from .sim import TrajectoryParams, analytic_state

    p = trajectory or TrajectoryParams(duration=duration, imu_rate=rate)
    dt = p.dt
    t = p.times()
    pose0, gyro, accel = analytic_state(p, t, g)
    rng = np.random.default_rng(seed)
    N = len(t)
    b = np.zeros((N, 6))
    b[0] = bias
    white = np.zeros((N, 6))
    if noise is not None:
        sig = np.concatenate([noise.sigma_g, noise.sigma_a])
        walk = np.concatenate([noise.sigma_bg, noise.sigma_ba])
        white = rng.standard_normal((N, 6)) * sig
        steps = rng.standard_normal((N - 1, 6)) * walk * dt
        b[1:] = bias - np.cumsum(steps, axis=0)
    else:
        b[1:] = bias

    # exact propagation of the true pose with the true piecewise-constant inputs
    T = ExtendedPose(pose0.R[0], pose0.v[0], pose0.p[0]).to_gal3()
    Rs, vs, ps = [T.A], [T.a], [T.b]
    x = np.zeros((N, 10))
    x[:, :3], x[:, 3:6], x[:, 9] = gyro, accel, 1.0
    incr = exp_gal3(x * dt)
    G = gamma_matrix(g, dt)
    for k in range(N - 1):
        T = G @ T @ incr[k]
        T = Gal3Element(T.A, T.a, T.b, 0.0)
        Rs.append(T.A)
        vs.append(T.a)
        ps.append(T.b)
    R = np.array(Rs)
    q = Rotation.from_matrix(R).as_quat()
    q_wxyz = np.roll(q, 1, axis=-1)
    q_wxyz *= np.where(q_wxyz[:, :1] < 0, -1.0, 1.0)

    stamps = np.round(t * 1e9).astype(np.int64) + 1_000_000_000
    base = os.path.join(out_dir, "mav0")
    os.makedirs(os.path.join(base, "imu0"), exist_ok=True)
    os.makedirs(os.path.join(base, "state_groundtruth_estimate0"), exist_ok=True)
    meas_g = gyro + b[:, :3] + white[:, :3]
    meas_a = accel + b[:, 3:] + white[:, 3:]
    with open(os.path.join(base, "imu0", "data.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["#timestamp [ns]", "w_RS_S_x [rad s^-1]", "w_RS_S_y [rad s^-1]", "w_RS_S_z [rad s^-1]",
                    "a_RS_S_x [m s^-2]", "a_RS_S_y [m s^-2]", "a_RS_S_z [m s^-2]"])
        for k in range(N):
            w.writerow([int(stamps[k])] + [repr(float(v)) for v in (*meas_g[k], *meas_a[k])])
    with open(os.path.join(base, "state_groundtruth_estimate0", "data.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["#timestamp", "p_x", "p_y", "p_z", "q_w", "q_x", "q_y", "q_z", "v_x", "v_y", "v_z",
                    "bw_x", "bw_y", "bw_z", "ba_x", "ba_y", "ba_z"])
        for k in range(N):
            row = (*ps[k], *q_wxyz[k], *vs[k], *b[k])
            w.writerow([int(stamps[k])] + [repr(float(v)) for v in row])
    return base
