"""Extended poses SE_2(3): rotation, velocity and position.

Tangent vectors are 9-vectors ``(omega, v, r)``. Functions broadcast over
leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3
from .gal3 import Gal3Element, h1
from .so3 import hat

DIM = 9


@dataclass(frozen=True, eq=False)
class ExtendedPose:
    R: np.ndarray
    v: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    @classmethod
    def identity(cls, shape=()):
        shape = tuple(shape)
        return cls(
            np.broadcast_to(np.eye(3), shape + (3, 3)).copy(),
            np.zeros(shape + (3,)),
            np.zeros(shape + (3,)),
        )

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(M[..., :3, :3], M[..., :3, 3], M[..., :3, 4])

    @classmethod
    def from_gal3(cls, X: Gal3Element):
        """Drop the time entry of a Galilean element."""
        return cls(X.A, X.a, X.b)

    def to_gal3(self, c=0.0) -> Gal3Element:
        return Gal3Element(self.R, self.v, self.p, np.broadcast_to(c, self.v.shape[:-1]))

    def matrix(self):
        out = np.zeros(self.v.shape[:-1] + (5, 5))
        out[..., :3, :3] = self.R
        out[..., :3, 3] = self.v
        out[..., :3, 4] = self.p
        out[..., 3, 3] = 1.0
        out[..., 4, 4] = 1.0
        return out

    def inverse(self):
        return inverse(self)

    def __matmul__(self, other):
        return compose(self, other)


def _mv(M, x):
    return np.einsum("...ij,...j->...i", M, x)


def compose(T1: ExtendedPose, T2: ExtendedPose) -> ExtendedPose:
    return ExtendedPose(T1.R @ T2.R, T1.v + _mv(T1.R, T2.v), T1.p + _mv(T1.R, T2.p))


def inverse(T: ExtendedPose) -> ExtendedPose:
    Rt = np.swapaxes(T.R, -1, -2)
    return ExtendedPose(Rt, -_mv(Rt, T.v), -_mv(Rt, T.p))


def hat9(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (5, 5))
    out[..., :3, :3] = hat(x[..., 0:3])
    out[..., :3, 3] = x[..., 3:6]
    out[..., :3, 4] = x[..., 6:9]
    return out


def vee9(M):
    M = np.asarray(M, dtype=float)
    return np.concatenate([so3.vee(M[..., :3, :3]), M[..., :3, 3], M[..., :3, 4]], axis=-1)


def exp_se23(x) -> ExtendedPose:
    x = np.asarray(x, dtype=float)
    w = x[..., 0:3]
    G1 = so3.gamma1(w)
    return ExtendedPose(so3.exp_so3(w), _mv(G1, x[..., 3:6]), _mv(G1, x[..., 6:9]))


def log_se23(T: ExtendedPose):
    w = so3.log_so3(T.R)
    Gi = so3.gamma1_inv(w)
    return np.concatenate([w, _mv(Gi, T.v), _mv(Gi, T.p)], axis=-1)


def adjoint_se23(T: ExtendedPose):
    out = np.zeros(T.v.shape[:-1] + (DIM, DIM))
    R = T.R
    out[..., 0:3, 0:3] = R
    out[..., 3:6, 0:3] = hat(T.v) @ R
    out[..., 3:6, 3:6] = R
    out[..., 6:9, 0:3] = hat(T.p) @ R
    out[..., 6:9, 6:9] = R
    return out


def left_jacobian_se23(x):
    x = np.asarray(x, dtype=float)
    w, v, r = x[..., 0:3], x[..., 3:6], x[..., 6:9]
    G1 = so3.gamma1(w)
    out = np.zeros(x.shape[:-1] + (DIM, DIM))
    out[..., 0:3, 0:3] = G1
    out[..., 3:6, 0:3] = h1(w, v) + hat(_mv(G1, v)) @ G1
    out[..., 3:6, 3:6] = G1
    out[..., 6:9, 0:3] = h1(w, r) + hat(_mv(G1, r)) @ G1
    out[..., 6:9, 6:9] = G1
    return out


def right_jacobian_se23(x):
    x = np.asarray(x, dtype=float)
    w, v, r = x[..., 0:3], x[..., 3:6], x[..., 6:9]
    Et = np.swapaxes(so3.exp_so3(w), -1, -2)
    EG1 = Et @ so3.gamma1(w)
    out = np.zeros(x.shape[:-1] + (DIM, DIM))
    out[..., 0:3, 0:3] = EG1
    out[..., 3:6, 0:3] = Et @ h1(w, v)
    out[..., 3:6, 3:6] = EG1
    out[..., 6:9, 0:3] = Et @ h1(w, r)
    out[..., 6:9, 6:9] = EG1
    return out
