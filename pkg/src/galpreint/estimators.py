"""Estimator-style wrappers around the preintegration functions.

Both classes take an ``(N, 7)`` array of ``t, gx, gy, gz, ax, ay, az`` rows in
``fit``; sample ``k`` is held constant on ``[t_k, t_k+1)``. ``predict`` maps a
start pose to the pose at the last timestamp.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import baseline as bl
from ._validation import check_bias, check_gravity, check_imu_array, check_pose
from .preintegration import (
    NEES_INDICES,
    ManifoldState,
    NoiseParams,
    apply_bias_update,
    compose_pose,
    equivariant_error,
    imu_input,
    initial_state,
    relative_upsilon,
    step,
)
from .se23 import ExtendedPose
from .sim import nees

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


class _PreintegratorBase(BaseEstimator):
    def _noise(self):
        if self.noise is None:
            return NoiseParams()
        if not isinstance(self.noise, NoiseParams):
            raise TypeError("noise must be a NoiseParams instance or None")
        return self.noise

    def _inputs(self, imu):
        dt = np.diff(imu[:, 0])
        return [imu_input(imu[k, 1:4], imu[k, 4:7], dt[k]) for k in range(len(dt))]

    def predict(self, pose_i):
        """Pose at the end of the fitted window given the pose at its start."""
        check_is_fitted(self, "upsilon_")
        return compose_pose(check_pose(pose_i), self.upsilon_, check_gravity(self.gravity))

    def nees(self, pose_i, pose_j, bias_j=None):
        """Normalized error of the fitted window against a reference pair of poses."""
        e = self.error(pose_i, pose_j, bias_j)
        return float(nees(e, self.covariance_))


class EquivariantPreintegrator(_PreintegratorBase):
    """Preintegration on the Galilean tangent group with an equivariant error.

    Parameters
    ----------
    bias0 : array of 6, optional
        Bias estimate (gyro, accel) at the start of the window.
    noise : NoiseParams, optional
        Discrete noise standard deviations; ``None`` propagates no covariance.
    sigma0 : float, array or (20, 20) matrix, optional
        Initial error covariance.
    gravity : 3-vector
    track_bias_jacobian : bool
        Needed by :meth:`update_bias`.
    """

    def __init__(self, bias0=None, noise=None, sigma0=None, gravity=DEFAULT_GRAVITY, track_bias_jacobian=True):
        self.bias0 = bias0
        self.noise = noise
        self.sigma0 = sigma0
        self.gravity = gravity
        self.track_bias_jacobian = track_bias_jacobian

    def fit(self, imu_array, y=None):
        imu = check_imu_array(imu_array)
        Q = self._noise().discrete_covariance()
        s = initial_state(check_bias(self.bias0, "bias0"), self.sigma0)
        for u in self._inputs(imu):
            s = step(s, u, Q, self.track_bias_jacobian)
        self.state_ = s
        self.n_samples_ = imu.shape[0]
        self._set_fitted(s)
        return self

    def _set_fitted(self, s):
        self.upsilon_ = s.upsilon
        self.delta_t_ = float(s.upsilon.c)
        self.bias_ = s.bias[:6].copy()
        self.covariance_ = s.Sigma[np.ix_(NEES_INDICES, NEES_INDICES)]

    def update_bias(self, new_bias0):
        """First-order correction for a changed start bias, without reintegrating."""
        check_is_fitted(self, "state_")
        if not self.track_bias_jacobian:
            raise RuntimeError("update_bias needs track_bias_jacobian=True")
        new = check_bias(new_bias0, "new_bias0")
        delta = np.zeros(10)
        delta[:6] = new - self.state_.bias[:6]
        self.state_ = apply_bias_update(self.state_, delta)
        self._set_fitted(self.state_)
        return self

    def error(self, pose_i, pose_j, bias_j=None):
        """15-component equivariant error (rotation, velocity, position, bias)."""
        check_is_fitted(self, "state_")
        U = relative_upsilon(check_pose(pose_i), check_pose(pose_j), self.upsilon_.c, check_gravity(self.gravity))
        b = np.zeros(10)
        b[:6] = self.bias_ if bias_j is None else check_bias(bias_j, "bias_j")
        return equivariant_error(self.state_, ManifoldState(U, b))[NEES_INDICES]


class RightInvariantPreintegrator(_PreintegratorBase):
    """Comparison method: right-invariant extended-pose error with a linear bias error.

    Same parameters as :class:`EquivariantPreintegrator` except that
    ``sigma0`` may also be a 15x15 matrix. :meth:`update_bias` reintegrates the
    stored samples because this method keeps no bias Jacobian.
    """

    def __init__(self, bias0=None, noise=None, sigma0=None, gravity=DEFAULT_GRAVITY):
        self.bias0 = bias0
        self.noise = noise
        self.sigma0 = sigma0
        self.gravity = gravity

    def _run(self, imu, bias0):
        Q = bl.noise_covariance(self._noise())
        s = bl.baseline_initial_state(bias0, self.sigma0)
        for u in self._inputs(imu):
            s = bl.baseline_propagate(s, u, Q)
        self.state_ = s
        self.upsilon_ = s.upsilon()
        self.delta_t_ = float(s.Dt)
        self.bias_ = s.bias6.copy()
        self.covariance_ = s.Sigma15

    def fit(self, imu_array, y=None):
        imu = check_imu_array(imu_array)
        self._imu = imu
        self.n_samples_ = imu.shape[0]
        self._run(imu, check_bias(self.bias0, "bias0"))
        return self

    def update_bias(self, new_bias0):
        check_is_fitted(self, "state_")
        self._run(self._imu, check_bias(new_bias0, "new_bias0"))
        return self

    def error(self, pose_i, pose_j, bias_j=None):
        """15-component error ``(log(dT dT_hat^-1), b - b_hat)``."""
        check_is_fitted(self, "state_")
        U = relative_upsilon(check_pose(pose_i), check_pose(pose_j), self.upsilon_.c, check_gravity(self.gravity))
        b = self.bias_ if bias_j is None else check_bias(bias_j, "bias_j")
        return bl.baseline_error(self.state_, ExtendedPose.from_gal3(U), b)
