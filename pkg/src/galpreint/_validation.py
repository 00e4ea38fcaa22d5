"""Input checks shared by the estimator classes."""

import numpy as np

from .gal3 import Gal3Element
from .se23 import ExtendedPose


def check_imu_array(imu):
    """Validate an ``(N, 7)`` array of ``t, gx, gy, gz, ax, ay, az`` rows."""
    imu = np.asarray(imu, dtype=float)
    if imu.ndim != 2 or imu.shape[1] != 7:
        raise ValueError(f"expected an (N, 7) array of t, gyro, accel rows, got shape {imu.shape}")
    if imu.shape[0] < 2:
        raise ValueError("need at least two IMU samples")
    if not np.all(np.isfinite(imu)):
        raise ValueError("IMU array contains NaN or inf")
    if np.any(np.diff(imu[:, 0]) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    return imu


def check_bias(bias, name="bias"):
    """Accept 6 (gyro, accel) or 10 components; returns a 6-vector."""
    if bias is None:
        return np.zeros(6)
    bias = np.asarray(bias, dtype=float).ravel()
    if bias.shape not in ((6,), (10,)):
        raise ValueError(f"{name} must have 6 or 10 components, got {bias.size}")
    if not np.all(np.isfinite(bias)):
        raise ValueError(f"{name} contains NaN or inf")
    return bias[:6].copy()


def check_pose(pose):
    """Coerce an ExtendedPose, a 5x5 matrix or an ``(R, v, p)`` triple."""
    if isinstance(pose, ExtendedPose):
        return pose
    if isinstance(pose, Gal3Element):
        return ExtendedPose.from_gal3(pose)
    if isinstance(pose, (tuple, list)) and len(pose) == 3:
        R, v, p = (np.asarray(x, dtype=float) for x in pose)
    else:
        M = np.asarray(pose, dtype=float)
        if M.shape != (5, 5):
            raise ValueError(f"pose must be an ExtendedPose, a 5x5 matrix or (R, v, p); got shape {M.shape}")
        R, v, p = M[:3, :3], M[:3, 3], M[:3, 4]
    if R.shape != (3, 3) or v.shape != (3,) or p.shape != (3,):
        raise ValueError("pose parts must be a 3x3 rotation and two 3-vectors")
    if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or np.linalg.det(R) < 0:
        raise ValueError("pose rotation is not orthonormal")
    return ExtendedPose(R, v, p)


def check_gravity(g):
    g = np.asarray(g, dtype=float)
    if g.shape != (3,) or not np.all(np.isfinite(g)):
        raise ValueError("gravity must be a finite 3-vector")
    return g
