"""Right-invariant SE_2(3) x R^6 preintegration used as a comparison method.

The mean is propagated with the same Galilean recursion as the equivariant
method. Only the error definition differs:

    eps = (log(DeltaT DeltaT_hat^-1), b - b_hat)

and the covariance Jacobians are obtained numerically by central differences
of the exact error recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gal3 import exp_gal3
from .preintegration import ImuInput, NoiseParams, NEES_INDICES, SCHEMA_VERSION, propagate_covariance
from .se23 import ExtendedPose, exp_se23, log_se23

FD_STEP = 1e-6
N_ERR = 15
N_NOISE = 12


@dataclass(frozen=True, eq=False)
class BaselineState:
    DeltaT: ExtendedPose
    Dt: np.ndarray
    bias6: np.ndarray
    Sigma15: np.ndarray

    @property
    def shape(self):
        return np.shape(self.Dt)

    def upsilon(self):
        return self.DeltaT.to_gal3(self.Dt)


def noise_covariance(noise: NoiseParams):
    """12x12 covariance of ``(eta_g, eta_a, eta_bg, eta_ba)``."""
    return np.diag(np.concatenate([noise.sigma_g, noise.sigma_a, noise.sigma_bg, noise.sigma_ba]) ** 2)


def baseline_initial_state(bias0, sigma0=None, shape=None) -> BaselineState:
    bias0 = np.asarray(bias0, dtype=float)[..., :6]
    shape = bias0.shape[:-1] if shape is None else tuple(shape)
    if sigma0 is None:
        S = np.zeros((N_ERR, N_ERR))
    else:
        sigma0 = np.asarray(sigma0, dtype=float)
        if sigma0.shape == (20, 20):
            S = sigma0[np.ix_(NEES_INDICES, NEES_INDICES)]
        elif sigma0.shape == (N_ERR, N_ERR):
            S = sigma0.copy()
        else:
            S = np.diag(np.broadcast_to(sigma0, (N_ERR,)))
    return BaselineState(
        ExtendedPose.identity(shape),
        np.zeros(shape),
        np.broadcast_to(bias0, shape + (6,)).copy(),
        np.broadcast_to(S, shape + (N_ERR, N_ERR)).copy(),
    )


def _increment(gyro_accel_minus_bias, dt):
    x = np.zeros(gyro_accel_minus_bias.shape[:-1] + (10,))
    x[..., :6] = gyro_accel_minus_bias
    x[..., 9] = 1.0
    return exp_gal3(x * dt[..., None])


def propagate_mean(s: BaselineState, u: ImuInput) -> BaselineState:
    U = s.upsilon() @ _increment(u.w[..., :6] - s.bias6, u.dt)
    return BaselineState(ExtendedPose.from_gal3(U), U.c, s.bias6, s.Sigma15)


def error_recursion(s: BaselineState, u: ImuInput, eps, eta, est_next=None):
    """Exact next error given the current error ``eps`` and noise ``eta``.

    The estimate is ``s``; the true state is reconstructed from ``eps`` and the
    true input is the measurement minus ``eta``. ``est_next`` may carry the
    already propagated estimate as an ExtendedPose.
    """
    T = exp_se23(eps[..., :9]) @ s.DeltaT
    b = s.bias6 + eps[..., 9:15]
    true_next = T.to_gal3(s.Dt) @ _increment(u.w[..., :6] - eta[..., :6] - b, u.dt)
    if est_next is None:
        est_next = propagate_mean(s, u).DeltaT
    e_T = log_se23(ExtendedPose.from_gal3(true_next) @ est_next.inverse())
    e_b = eps[..., 9:15] - eta[..., 6:12] * u.dt[..., None]
    return np.concatenate([e_T, e_b], axis=-1)


def _repeat(x, core, n):
    """Insert a batch axis of length ``n`` in front of the ``core`` trailing axes."""
    x = np.asarray(x)
    axis = x.ndim - core
    x = np.expand_dims(x, axis)
    return np.broadcast_to(x, x.shape[:axis] + (n,) + x.shape[axis + 1:])


def _expand(s: BaselineState, u: ImuInput, n):
    T = ExtendedPose(_repeat(s.DeltaT.R, 2, n), _repeat(s.DeltaT.v, 1, n), _repeat(s.DeltaT.p, 1, n))
    sx = BaselineState(T, _repeat(s.Dt, 0, n), _repeat(s.bias6, 1, n), None)
    ux = ImuInput(_repeat(u.w, 1, n), _repeat(u.tau, 1, n), _repeat(u.dt, 0, n))
    return sx, ux


def error_state_matrices(s: BaselineState, u: ImuInput, h=FD_STEP):
    """Central-difference ``(A, B)`` of :func:`error_recursion` at zero error and noise.

    The bias error and the measurement noise reach the pose error only through
    ``b + eta_w``, and the bias rows are linear, so only the 9 pose directions and
    the 6 input directions are differenced.
    """
    shape = s.shape
    u = ImuInput(np.broadcast_to(u.w, shape + (10,)), np.broadcast_to(u.tau, shape + (10,)),
                 np.broadcast_to(u.dt, shape))
    n = 15
    sx, ux = _expand(s, u, 2 * n)
    est = propagate_mean(s, u).DeltaT
    est = ExtendedPose(_repeat(est.R, 2, 2 * n), _repeat(est.v, 1, 2 * n), _repeat(est.p, 1, 2 * n))
    pert = np.broadcast_to(np.concatenate([np.eye(n), -np.eye(n)]) * h, shape + (2 * n, n))
    eps = np.zeros(shape + (2 * n, N_ERR))
    eps[..., :9] = pert[..., :9]
    eta = np.zeros(shape + (2 * n, N_NOISE))
    eta[..., :6] = pert[..., 9:]
    f = error_recursion(sx, ux, eps, eta, est)[..., :9]
    J = np.swapaxes((f[..., :n, :] - f[..., n:, :]) / (2 * h), -1, -2)
    dt = np.asarray(u.dt)[..., None, None]
    A = np.zeros(shape + (N_ERR, N_ERR))
    B = np.zeros(shape + (N_ERR, N_NOISE))
    A[..., :9, :9] = J[..., :9]
    A[..., :9, 9:] = J[..., 9:]
    A[..., 9:, 9:] = np.eye(6)
    B[..., :9, :6] = J[..., 9:]
    B[..., 9:, 6:] = -np.eye(6) * dt
    return A, B


def full_error_state_matrices(s: BaselineState, u: ImuInput, h=FD_STEP):
    """Same as :func:`error_state_matrices` but differencing all 27 inputs."""
    shape = s.shape
    u = ImuInput(np.broadcast_to(u.w, shape + (10,)), np.broadcast_to(u.tau, shape + (10,)),
                 np.broadcast_to(u.dt, shape))
    n = N_ERR + N_NOISE
    sx, ux = _expand(s, u, 2 * n)
    pert = np.broadcast_to(np.concatenate([np.eye(n), -np.eye(n)]) * h, shape + (2 * n, n))
    f = error_recursion(sx, ux, pert[..., :N_ERR], pert[..., N_ERR:])
    J = np.swapaxes((f[..., :n, :] - f[..., n:, :]) / (2 * h), -1, -2)
    return J[..., :N_ERR], J[..., N_ERR:]


def baseline_propagate(s: BaselineState, u: ImuInput, Q12, return_matrices=False):
    A, B = error_state_matrices(s, u)
    m = propagate_mean(s, u)
    out = BaselineState(m.DeltaT, m.Dt, m.bias6, propagate_covariance(s.Sigma15, A, B, Q12))
    if return_matrices:
        return out, A, B
    return out


def baseline_error(s: BaselineState, truth_pose: ExtendedPose, truth_bias):
    """15-vector ``(log(DeltaT DeltaT_hat^-1), b - b_hat)``."""
    truth_bias = np.asarray(truth_bias, dtype=float)[..., :6]
    e_T = log_se23(truth_pose @ s.DeltaT.inverse())
    return np.concatenate([e_T, truth_bias - s.bias6], axis=-1)


def richardson_check(s: BaselineState, u: ImuInput, h=FD_STEP):
    """Largest difference between the Jacobians at step ``h`` and ``h/2``."""
    A1, B1 = error_state_matrices(s, u, h)
    A2, B2 = error_state_matrices(s, u, h / 2)
    return max(np.abs(A1 - A2).max(), np.abs(B1 - B2).max())


def state_to_dict(s: BaselineState) -> dict:
    if s.shape != ():
        raise ValueError("only single (unbatched) states can be serialized")
    sigma = np.zeros((20, 20))
    sigma[np.ix_(NEES_INDICES, NEES_INDICES)] = s.Sigma15
    bias = np.zeros(10)
    bias[:6] = s.bias6
    T = s.DeltaT
    return {
        "schema_version": SCHEMA_VERSION,
        "variant": "baseline",
        "upsilon": {"A": T.R.tolist(), "a": T.v.tolist(), "b": T.p.tolist(), "c": float(s.Dt)},
        "bias": bias.tolist(),
        "sigma": sigma.tolist(),
        "j_xi": np.eye(20).tolist(),
        "elapsed": float(s.Dt),
    }


def state_from_dict(d: dict) -> BaselineState:
    if d.get("variant") != "baseline":
        raise ValueError("not a baseline checkpoint")
    u = d["upsilon"]
    sigma = np.asarray(d["sigma"], dtype=float)
    return BaselineState(
        ExtendedPose(u["A"], u["a"], u["b"]),
        np.asarray(float(u["c"])),
        np.asarray(d["bias"], dtype=float)[:6],
        sigma[np.ix_(NEES_INDICES, NEES_INDICES)],
    )
