"""The Galilean group Gal(3).

An element is stored as its four blocks ``(A, a, b, c)`` of the 5x5 matrix

    [[A, a, b],
     [0, 1, c],
     [0, 0, 1]]

with ``A`` a rotation, ``a`` a velocity-like column, ``b`` a position-like
column and ``c`` a time scalar. Tangent vectors are 10-vectors
``x = (omega, v, r, alpha)``. Every function broadcasts over leading batch
dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3
from .so3 import hat

DIM = 10

OMEGA = slice(0, 3)
V = slice(3, 6)
R = slice(6, 9)
ALPHA = 9


@dataclass(frozen=True, eq=False)
class Gal3Element:
    A: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))

    @classmethod
    def identity(cls, shape=()):
        shape = tuple(shape)
        return cls(
            np.broadcast_to(np.eye(3), shape + (3, 3)).copy(),
            np.zeros(shape + (3,)),
            np.zeros(shape + (3,)),
            np.zeros(shape),
        )

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(M[..., :3, :3], M[..., :3, 3], M[..., :3, 4], M[..., 3, 4])

    @property
    def shape(self):
        return self.c.shape

    def matrix(self):
        out = np.zeros(self.shape + (5, 5))
        out[..., :3, :3] = self.A
        out[..., :3, 3] = self.a
        out[..., :3, 4] = self.b
        out[..., 3, 3] = 1.0
        out[..., 3, 4] = self.c
        out[..., 4, 4] = 1.0
        return out

    def inverse(self):
        return inverse(self)

    def __matmul__(self, other):
        return compose(self, other)

    def __getitem__(self, idx):
        return Gal3Element(self.A[idx], self.a[idx], self.b[idx], self.c[idx])


def _mv(M, x):
    return np.einsum("...ij,...j->...i", M, x)


def compose(X: Gal3Element, Y: Gal3Element) -> Gal3Element:
    return Gal3Element(
        X.A @ Y.A,
        X.a + _mv(X.A, Y.a),
        X.b + _mv(X.A, Y.b) + Y.c[..., None] * X.a,
        X.c + Y.c,
    )


def inverse(X: Gal3Element) -> Gal3Element:
    At = np.swapaxes(X.A, -1, -2)
    return Gal3Element(At, -_mv(At, X.a), -_mv(At, X.b - X.c[..., None] * X.a), -X.c)


def hat10(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (5, 5))
    out[..., :3, :3] = hat(x[..., OMEGA])
    out[..., :3, 3] = x[..., V]
    out[..., :3, 4] = x[..., R]
    out[..., 3, 4] = x[..., ALPHA]
    return out


def vee10(M):
    M = np.asarray(M, dtype=float)
    return np.concatenate(
        [so3.vee(M[..., :3, :3]), M[..., :3, 3], M[..., :3, 4], M[..., 3, 4, None]], axis=-1
    )


def adjoint_matrix(X: Gal3Element):
    """10x10 matrix of ``u -> vee(X hat(u) X^-1)``."""
    A = X.A
    out = np.zeros(X.shape + (DIM, DIM))
    out[..., OMEGA, OMEGA] = A
    out[..., V, OMEGA] = hat(X.a) @ A
    out[..., V, V] = A
    out[..., R, OMEGA] = hat(X.b - X.c[..., None] * X.a) @ A
    out[..., R, V] = -X.c[..., None, None] * A
    out[..., R, R] = A
    out[..., R, ALPHA] = X.a
    out[..., ALPHA, ALPHA] = 1.0
    return out


def little_adjoint_matrix(x):
    """10x10 matrix of the Lie bracket ``y -> vee([hat(x), hat(y)])``."""
    x = np.asarray(x, dtype=float)
    W = hat(x[..., OMEGA])
    out = np.zeros(x.shape[:-1] + (DIM, DIM))
    out[..., OMEGA, OMEGA] = W
    out[..., V, OMEGA] = hat(x[..., V])
    out[..., V, V] = W
    out[..., R, OMEGA] = hat(x[..., R])
    out[..., R, V] = -x[..., ALPHA, None, None] * np.eye(3)
    out[..., R, R] = W
    out[..., R, ALPHA] = x[..., V]
    return out


def exp_gal3(x) -> Gal3Element:
    x = np.asarray(x, dtype=float)
    w, v, r, alpha = x[..., OMEGA], x[..., V], x[..., R], x[..., ALPHA]
    G1 = so3.gamma1(w)
    G2 = so3.gamma2(w)
    return Gal3Element(
        so3.exp_so3(w),
        _mv(G1, v),
        _mv(G1, r) + alpha[..., None] * _mv(G2, v),
        alpha,
    )


def log_gal3(X: Gal3Element):
    w = so3.log_so3(X.A)
    G1inv = so3.gamma1_inv(w)
    v = _mv(G1inv, X.a)
    xi = X.b - X.c[..., None] * _mv(so3.gamma2(w), v)
    return np.concatenate([w, v, _mv(G1inv, xi), X.c[..., None]], axis=-1)


# Closed forms of the Jacobian building blocks. ``omega`` and ``z`` are 3-vectors.


def u1(omega):
    """sum_k (k+1) W^k / (k+2)!, which equals Gamma1 - Gamma2."""
    t = so3.angle(omega)
    t_ = np.where(t < so3.SMALL_ANGLE, 1.0, t)
    small = t < so3.SMALL_ANGLE
    c1 = np.where(small, so3.kappa1(t) - so3.kappa2(t), (np.sin(t_) - t_ * np.cos(t_)) / t_**3)
    c2 = np.where(
        small,
        so3.kappa2(t) - so3.kappa3(t),
        (t_**2 - 2 * t_ * np.sin(t_) - 2 * np.cos(t_) + 2) / (2 * t_**4),
    )
    return so3._poly(omega, 0.5, c1, c2)


_q2_zw_w = so3._Coefficient(
    lambda t: (2 - 2 * np.cos(t) - t * np.sin(t)) / t**4,
    so3._taylor([(2, 0, "1"), (-2, 0, "cos"), (-1, 1, "sin")], 4),
)
_q2_zww = so3._Coefficient(
    lambda t: (t**3 - 6 * t + 6 * np.sin(t)) / (6 * t**5),
    so3._taylor([(1, 3, "1"), (-6, 1, "1"), (6, 0, "sin")], 5, 6),
)
_q2_wwz = so3._Coefficient(
    lambda t: (t**3 + 6 * t * np.cos(t) + 6 * t - 12 * np.sin(t)) / (6 * t**5),
    so3._taylor([(1, 3, "1"), (6, 1, "cos"), (6, 1, "1"), (-12, 0, "sin")], 5, 6),
)
_q2_wzw = so3._Coefficient(
    lambda t: (-(t**3) - 12 * t * np.cos(t) - 3 * t**2 * np.sin(t) + 12 * np.sin(t)) / (6 * t**5),
    so3._taylor([(-1, 3, "1"), (-12, 1, "cos"), (-3, 2, "sin"), (12, 0, "sin")], 5, 6),
)
_q2_wwzw = so3._Coefficient(
    lambda t: (t**2 + t**2 * np.cos(t) - 4 * t * np.sin(t) - 4 * np.cos(t) + 4) / (2 * t**6),
    so3._taylor([(1, 2, "1"), (1, 2, "cos"), (-4, 1, "sin"), (-4, 0, "cos"), (4, 0, "1")], 6, 2),
)


def _s(c):
    return np.asarray(c)[..., None, None]


def q1(omega, z):
    """sum_{p,k} W^k Z W^p / (p+k+2)!."""
    t = so3.angle(omega)
    W, Z = hat(omega), hat(z)
    WZ, ZW = W @ Z, Z @ W
    WZW = WZ @ W
    return (
        0.5 * Z
        + _s(so3.kappa2(t)) * (WZ + ZW + WZW)
        + _s(so3.kappa3(t)) * (W @ WZ + ZW @ W - 3 * WZW)
        + _s(so3.kappa5(t)) * (W @ WZW)
    )


def q2(omega, z):
    """sum_{p,k} (k+1) W^k Z W^p / (p+k+3)!."""
    t = so3.angle(omega)
    W, Z = hat(omega), hat(z)
    WZ, ZW = W @ Z, Z @ W
    WZW = WZ @ W
    return (
        Z / 6.0
        + _s(so3.kappa3(t)) * ZW
        + _s(_q2_zw_w(t)) * WZ
        + _s(_q2_zww(t)) * (ZW @ W)
        + _s(_q2_wwz(t)) * (W @ WZ)
        + _s(_q2_wzw(t)) * WZW
        + _s(_q2_wwzw(t)) * (W @ WZW)
    )


def _outer(x, y):
    return x[..., :, None] * y[..., None, :]


def h0(omega, z):
    """Derivative of ``W W z`` with respect to omega."""
    omega = np.asarray(omega, dtype=float)
    z = np.asarray(z, dtype=float)
    zw = np.sum(z * omega, axis=-1)
    return _s(zw) * np.eye(3) + _outer(omega, z) - 2 * _outer(z, omega)


def h1(omega, z):
    """Derivative of ``gamma1(omega) z`` with respect to omega."""
    omega = np.asarray(omega, dtype=float)
    z = np.asarray(z, dtype=float)
    t = so3.angle(omega)
    wz = np.cross(omega, z)
    wwz = np.cross(omega, wz)
    return (
        -_s(so3.kappa4(t)) * _outer(wz, omega)
        - _s(so3.kappa1(t)) * hat(z)
        - _s(so3.kappa5(t)) * _outer(wwz, omega)
        + _s(so3.kappa2(t)) * h0(omega, z)
    )


def h2(omega, z):
    """Derivative of ``gamma2(omega) z`` with respect to omega."""
    omega = np.asarray(omega, dtype=float)
    z = np.asarray(z, dtype=float)
    t = so3.angle(omega)
    wz = np.cross(omega, z)
    wwz = np.cross(omega, wz)
    return (
        -_s(so3.kappa5(t)) * _outer(wz, omega)
        - _s(so3.kappa2(t)) * hat(z)
        - _s(so3.kappa6(t)) * _outer(wwz, omega)
        + _s(so3.kappa3(t)) * h0(omega, z)
    )


def left_jacobian_gal3(x):
    x = np.asarray(x, dtype=float)
    w, v, r, alpha = x[..., OMEGA], x[..., V], x[..., R], x[..., ALPHA]
    G1 = so3.gamma1(w)
    G2 = so3.gamma2(w)
    out = np.zeros(x.shape[:-1] + (DIM, DIM))
    out[..., OMEGA, OMEGA] = G1
    out[..., V, OMEGA] = q1(w, v)
    out[..., V, V] = G1
    out[..., R, OMEGA] = q1(w, r) - _s(alpha) * q2(w, v)
    out[..., R, V] = -_s(alpha) * u1(w)
    out[..., R, R] = G1
    out[..., R, ALPHA] = _mv(G2, v)
    out[..., ALPHA, ALPHA] = 1.0
    return out


def left_jacobian_inv_gal3(x):
    """Inverse of :func:`left_jacobian_gal3` by block forward substitution."""
    x = np.asarray(x, dtype=float)
    w, v, r, alpha = x[..., OMEGA], x[..., V], x[..., R], x[..., ALPHA]
    Gi = so3.gamma1_inv(w)
    a_ = _s(alpha)
    inv_vw = -Gi @ q1(w, v) @ Gi
    omega_blk = q1(w, r) - a_ * q2(w, v)
    out = np.zeros(x.shape[:-1] + (DIM, DIM))
    out[..., OMEGA, OMEGA] = Gi
    out[..., V, OMEGA] = inv_vw
    out[..., V, V] = Gi
    out[..., R, OMEGA] = -Gi @ (omega_blk @ Gi - a_ * u1(w) @ inv_vw)
    out[..., R, V] = a_ * (Gi @ u1(w) @ Gi)
    out[..., R, R] = Gi
    out[..., R, ALPHA] = -_mv(Gi, _mv(so3.gamma2(w), v))
    out[..., ALPHA, ALPHA] = 1.0
    return out


def right_jacobian_gal3(x):
    """Right Jacobian from the derivative kernels H1, H2 (independent of Q1, Q2)."""
    x = np.asarray(x, dtype=float)
    w, v, r, alpha = x[..., OMEGA], x[..., V], x[..., R], x[..., ALPHA]
    Et = np.swapaxes(so3.exp_so3(w), -1, -2)
    G1 = so3.gamma1(w)
    G2 = so3.gamma2(w)
    EG1 = Et @ G1
    out = np.zeros(x.shape[:-1] + (DIM, DIM))
    out[..., OMEGA, OMEGA] = EG1
    out[..., V, OMEGA] = Et @ h1(w, v)
    out[..., V, V] = EG1
    out[..., R, OMEGA] = Et @ (h1(w, r) + _s(alpha) * h2(w, v))
    out[..., R, V] = _s(alpha) * (Et @ G2)
    out[..., R, R] = EG1
    out[..., R, ALPHA] = -_mv(Et @ (G1 - G2), v)
    out[..., ALPHA, ALPHA] = 1.0
    return out
