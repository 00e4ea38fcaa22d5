"""Monte-Carlo consistency and linearization-error experiments.

Trajectories are a horizontal circle plus a cosine wave in z, with the body x
axis along the velocity. The simulated truth of every realization is the exact
zero-order-hold integration of the true sampled inputs, so both compared
methods see the same ground truth and the same noise.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baseline as bl
from .gal3 import Gal3Element
from .preintegration import (
    MEDIUM_NOISE,
    NEES_INDICES,
    ImuInput,
    ManifoldState,
    NoiseParams,
    equivariant_error,
    expand_sigma0,
    imu_input,
    initial_state,
    manifold_step,
    step,
    to_pose_error,
)
from .se23 import ExtendedPose
from .so3 import EPS_AXIS, rotation_angle

METHODS = ("equivariant", "baseline")
GRAVITY = np.array([0.0, 0.0, -9.81])
N_EFF = 15
REPORT_VERSION = 1
# realizations per work unit; fixed so results do not depend on the worker count
CHUNK = 50


@dataclass(frozen=True)
class TrajectoryParams:
    radius: float = 2.0
    angular_rate: float = 0.45
    z_amplitude: float = 0.5
    z_frequency: float = 1.0
    duration: float = 10.0
    imu_rate: float = 200.0

    def __post_init__(self):
        if self.imu_rate <= 0 or self.duration <= 0:
            raise ValueError("imu_rate and duration must be positive")
        if self.radius <= 0 or self.angular_rate == 0:
            raise ValueError("the circle needs a positive radius and a nonzero rate")

    @property
    def dt(self):
        return 1.0 / self.imu_rate

    @property
    def n_steps(self):
        return int(round(self.duration * self.imu_rate))

    def times(self):
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class McConfig:
    M: int = 200
    seed: int = 0
    noise: NoiseParams = MEDIUM_NOISE
    lam: float = 1.0
    bias_truth: np.ndarray = field(default_factory=lambda: np.zeros(10))
    # std of the initial bias estimate error (gyro x3, accel x3), scaled by lam
    bias_sigma0: np.ndarray = field(default_factory=lambda: np.array([1e-3] * 3 + [1e-2] * 3))
    random_walk: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        object.__setattr__(self, "bias_truth", np.broadcast_to(np.asarray(self.bias_truth, float), (10,)).copy())
        object.__setattr__(self, "bias_sigma0", np.broadcast_to(np.asarray(self.bias_sigma0, float), (6,)).copy())

    def sigma0(self):
        """Initial 20x20 covariance: exact navigation state, uncertain biases."""
        diag = np.zeros(15)
        diag[9:] = (self.lam * self.bias_sigma0) ** 2
        return expand_sigma0(diag)


def _unit(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _unit_rate(x, xdot):
    """Derivative of ``x / |x|``."""
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    u = x / n
    return (xdot - np.sum(xdot * u, axis=-1, keepdims=True) * u) / n


def analytic_kinematics(p: TrajectoryParams, t):
    """Position, velocity, acceleration and jerk of the path in the world frame."""
    t = np.asarray(t, dtype=float)
    r, w, A, f = p.radius, p.angular_rate, p.z_amplitude, p.z_frequency
    c, s = np.cos(w * t), np.sin(w * t)
    cz, sz = np.cos(f * t), np.sin(f * t)
    pos = np.stack([r * c, r * s, A * cz], axis=-1)
    vel = np.stack([-r * w * s, r * w * c, -A * f * sz], axis=-1)
    acc = np.stack([-r * w**2 * c, -r * w**2 * s, -A * f**2 * cz], axis=-1)
    jerk = np.stack([r * w**3 * s, -r * w**3 * c, A * f**3 * sz], axis=-1)
    return pos, vel, acc, jerk


def analytic_state(p: TrajectoryParams, t, g=GRAVITY):
    """Pose at ``t`` and the true body-frame angular rate and specific force."""
    pos, vel, acc, jerk = analytic_kinematics(p, t)
    ez = np.broadcast_to([0.0, 0.0, 1.0], vel.shape)
    x = _unit(vel)
    xd = _unit_rate(vel, acc)
    q = np.cross(ez, x)
    y = _unit(q)
    yd = _unit_rate(q, np.cross(ez, xd))
    z = np.cross(x, y)
    zd = np.cross(xd, y) + np.cross(x, yd)
    R = np.stack([x, y, z], axis=-1)
    omega_world = 0.5 * (np.cross(x, xd) + np.cross(y, yd) + np.cross(z, zd))
    Rt = np.swapaxes(R, -1, -2)
    omega_body = np.einsum("...ij,...j->...i", Rt, omega_world)
    accel_body = np.einsum("...ij,...j->...i", Rt, acc - np.asarray(g))
    return ExtendedPose(R, vel, pos), omega_body, accel_body


@dataclass(frozen=True, eq=False)
class ImuStream:
    """Sampled IMU data with the noise and bias that produced it.

    ``bias[k]`` is the true (gyro, accel) bias during ``[t_k, t_k+1)``, and
    ``eta`` holds the 12 noise samples (gyro, accel, gyro walk, accel walk).
    """

    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    bias: np.ndarray
    eta: np.ndarray


def synth_imu(p: TrajectoryParams, noise: NoiseParams = MEDIUM_NOISE, lam=1.0, seed=0, bias=None,
              random_walk=False, g=GRAVITY, rng=None) -> ImuStream:
    """Measurement = truth + bias + white noise of std ``lam * sigma``.

    The bias walks as ``b_{k+1} = b_k - dt * eta_tau`` when ``random_walk``.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    t = p.times()
    n = len(t)
    _, gyro, accel = analytic_state(p, t, g)
    sig = lam * np.concatenate([noise.sigma_g, noise.sigma_a, noise.sigma_bg, noise.sigma_ba])
    eta = rng.standard_normal((n, 12)) * sig
    if not random_walk:
        eta[:, 6:] = 0.0
    b0 = np.zeros(6) if bias is None else np.asarray(bias, dtype=float)[:6]
    walk = np.concatenate([np.zeros((1, 6)), np.cumsum(-eta[:-1, 6:] * p.dt, axis=0)])
    b = b0 + walk
    return ImuStream(t, gyro + b[:, :3] + eta[:, :3], accel + b[:, 3:] + eta[:, 3:6], b, eta)


def sigma_c_to_discrete(sigma_c, dt):
    return np.asarray(sigma_c) / np.sqrt(dt)


def nees(eps, Sigma, rel_tol=1e-12):
    """``eps^T Sigma^-1 eps`` per batch entry; NaN where Sigma is numerically singular."""
    w, V = np.linalg.eigh(Sigma)
    ok = w[..., 0] > rel_tol * np.abs(w[..., -1])
    w = np.where(ok[..., None], w, 1.0)
    proj = np.einsum("...ji,...j->...i", V, eps)
    out = np.sum(proj**2 / w, axis=-1)
    return np.where(ok, out, np.nan)


def _twelve_to_twenty(eta):
    out = np.zeros(eta.shape[:-1] + (20,))
    out[..., 0:6] = eta[..., 0:6]
    out[..., 10:16] = eta[..., 6:12]
    return out


def _realization_inputs(cfg: McConfig, p: TrajectoryParams, idx, g):
    """Measurements, noise and initial bias estimates for realizations ``idx``."""
    streams, b0_hat = [], []
    for i in idx:
        rng = np.random.default_rng([cfg.seed, int(i)])
        b0_hat.append(cfg.bias_truth[:6] + rng.standard_normal(6) * cfg.lam * cfg.bias_sigma0)
        streams.append(synth_imu(p, cfg.noise, cfg.lam, bias=cfg.bias_truth, random_walk=cfg.random_walk,
                                 g=g, rng=rng))
    stack = lambda name: np.stack([getattr(s, name) for s in streams], axis=1)
    return stack("gyro"), stack("accel"), stack("bias"), stack("eta"), np.array(b0_hat)


def _run_chunk(cfg: McConfig, p: TrajectoryParams, methods, idx, g):
    gyro, accel, bias, eta, b0_hat = _realization_inputs(cfg, p, idx, g)
    m = len(idx)
    n = p.n_steps
    dt = np.full(m, p.dt)
    sigma0 = cfg.sigma0()
    Q20 = cfg.noise.scaled(cfg.lam).discrete_covariance()
    Q12 = bl.noise_covariance(cfg.noise.scaled(cfg.lam))

    truth_bias = np.zeros((m, 10))
    truth_bias[:, :6] = bias[0]
    truth_bias[:, 6:] = cfg.bias_truth[6:]
    truth = ManifoldState(Gal3Element.identity((m,)), truth_bias.copy())

    eq = initial_state(b0_hat, sigma0, shape=(m,))
    base = bl.baseline_initial_state(b0_hat, sigma0, shape=(m,))
    out = {k: np.full((n, m), np.nan) for k in methods}
    ale = {k: np.full((n, m), np.nan) for k in methods}
    alive = np.ones(m, dtype=bool)
    diverged_at = np.full(m, -1)

    eps_eq = equivariant_error(eq, truth)
    eps_bl = bl.baseline_error(base, ExtendedPose.identity((m,)), truth_bias)
    for k in range(n):
        u = imu_input(gyro[k], accel[k], dt)
        eta20 = _twelve_to_twenty(eta[k])
        # the truth integrates the noise-free input with the true bias
        truth_bias[:, :6] = bias[k]
        truth = manifold_step(ManifoldState(truth.upsilon, truth_bias), ImuInput(u.w - eta20[:, :10], 0.0, dt))
        truth_bias[:, :6] = bias[k + 1]
        truth = ManifoldState(truth.upsilon, truth_bias.copy())
        Dt = (k + 1) * p.dt

        if "equivariant" in methods:
            eq, A, B = step(eq, u, Q20, track_bias_jacobian=False, return_matrices=True)
        if "baseline" in methods:
            base, Ab, Bb = bl.baseline_propagate(base, u, Q12, return_matrices=True)

        Rerr = truth.upsilon.A @ np.swapaxes(eq.upsilon.A if "equivariant" in methods else base.DeltaT.R, -1, -2)
        bad = rotation_angle(Rerr) > np.pi - 10 * EPS_AXIS
        newly = bad & alive
        diverged_at[newly] = k
        alive &= ~bad
        if not alive.any():
            break
        safe_truth = _mask_truth(truth, alive, eq, base, methods)

        if "equivariant" in methods:
            e = equivariant_error(eq, safe_truth)
            pred = np.einsum("...ij,...j->...i", A, eps_eq) + np.einsum("...ij,...j->...i", B, eta20)
            out["equivariant"][k] = np.where(alive, nees(e[:, NEES_INDICES], eq.Sigma[:, NEES_INDICES][:, :, NEES_INDICES]), np.nan)
            d = to_pose_error(e, np.full(m, Dt)) - to_pose_error(pred, np.full(m, Dt))
            ale["equivariant"][k] = np.where(alive, np.linalg.norm(d, axis=-1), np.nan)
            eps_eq = e
        if "baseline" in methods:
            T = ExtendedPose.from_gal3(safe_truth.upsilon)
            e = bl.baseline_error(base, T, safe_truth.bias)
            pred = np.einsum("...ij,...j->...i", Ab, eps_bl) + np.einsum("...ij,...j->...i", Bb, eta[k])
            out["baseline"][k] = np.where(alive, nees(e, base.Sigma15), np.nan)
            ale["baseline"][k] = np.where(alive, np.linalg.norm(e[:, :9] - pred[:, :9], axis=-1), np.nan)
            eps_bl = e
    return out, ale, diverged_at


def _mask_truth(truth, alive, eq, base, methods):
    """Replace diverged realizations by the estimate so the logarithm stays defined."""
    if alive.all():
        return truth
    if "equivariant" in methods:
        est = eq.estimate
        U_est, b_est = est.upsilon, est.bias
    else:
        U_est = base.upsilon()
        b_est = np.zeros(base.bias6.shape[:-1] + (10,))
        b_est[..., :6] = base.bias6
    keep = alive[:, None]
    U = Gal3Element(
        np.where(keep[..., None], truth.upsilon.A, U_est.A),
        np.where(keep, truth.upsilon.a, U_est.a),
        np.where(keep, truth.upsilon.b, U_est.b),
        np.where(alive, truth.upsilon.c, U_est.c),
    )
    return ManifoldState(U, np.where(keep, truth.bias, b_est))


@dataclass
class ConsistencyReport:
    times: np.ndarray
    anees: dict
    ale: dict
    excluded: dict
    degenerate: dict
    nees_samples: dict
    config: dict

    def summary(self, after=0.0):
        sel = self.times > after
        rows = {}
        for k in self.anees:
            rows[k] = {
                "mean_anees": float(np.nanmean(self.anees[k][sel])) if not self.degenerate[k] else None,
                "final_anees": _finite_or_none(self.anees[k][-1]),
                "mean_ale": float(np.nanmean(self.ale[k][sel])),
                "final_ale": _finite_or_none(self.ale[k][-1]),
                "excluded": int(self.excluded[k]),
                "degenerate": bool(self.degenerate[k]),
            }
        return rows

    def to_json(self):
        return {
            "report_version": REPORT_VERSION,
            "config": self.config,
            "n": N_EFF,
            "summary": self.summary(),
        }

    def write(self, csv_path=None, json_path=None):
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["time", "method", "anees", "ale", "excluded_count"])
                for k in self.anees:
                    for i, t in enumerate(self.times):
                        w.writerow([f"{t:.6f}", k, _fmt(self.anees[k][i]), _fmt(self.ale[k][i]), int(self.excluded[k])])
        if json_path is not None:
            with open(json_path, "w") as fh:
                json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def _fmt(x):
    return "nan" if not np.isfinite(x) else repr(float(x))


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


def _config_dict(cfg: McConfig, p: TrajectoryParams, methods):
    noise = {k: v.tolist() for k, v in asdict(cfg.noise).items()}
    return {
        "M": cfg.M,
        "seed": cfg.seed,
        "lambda": cfg.lam,
        "noise": noise,
        "bias_truth": cfg.bias_truth.tolist(),
        "bias_sigma0": cfg.bias_sigma0.tolist(),
        "random_walk": cfg.random_walk,
        "trajectory": asdict(p),
        "methods": list(methods),
    }


def run_monte_carlo(cfg: McConfig, p: TrajectoryParams = TrajectoryParams(), methods=METHODS, workers=1,
                    g=GRAVITY) -> ConsistencyReport:
    """ANEES and ALE over ``cfg.M`` realizations for each method."""
    methods = tuple(methods)
    for k in methods:
        if k not in METHODS:
            raise ValueError(f"unknown method {k!r}")
    chunks = [np.arange(i, min(i + CHUNK, cfg.M)) for i in range(0, cfg.M, CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, *zip(*[(cfg, p, methods, c, g) for c in chunks])))
    else:
        results = [_run_chunk(cfg, p, methods, c, g) for c in chunks]

    samples = {k: np.concatenate([r[0][k] for r in results], axis=1) for k in methods}
    lin = {k: np.concatenate([r[1][k] for r in results], axis=1) for k in methods}
    diverged = np.concatenate([r[2] for r in results])
    excluded = int(np.sum(diverged >= 0))

    anees, ale, degenerate = {}, {}, {}
    for k in methods:
        valid = np.isfinite(samples[k])
        count = valid.sum(axis=1)
        with np.errstate(invalid="ignore"):
            anees[k] = np.where(count > 0, np.nansum(samples[k], axis=1) / (np.maximum(count, 1) * N_EFF), np.nan)
            n_lin = np.isfinite(lin[k]).sum(axis=1)
            ale[k] = np.where(n_lin > 0, np.nansum(lin[k], axis=1) / np.maximum(n_lin, 1), np.nan)
        degenerate[k] = bool(np.all(~np.isfinite(anees[k])))
    times = p.times()[1:]
    return ConsistencyReport(times, anees, ale, {k: excluded for k in methods}, degenerate, samples,
                             _config_dict(cfg, p, methods))
