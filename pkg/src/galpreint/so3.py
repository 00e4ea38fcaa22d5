"""Closed-form SO(3) primitives.

All functions broadcast over leading dimensions: a vector argument of shape
``(..., 3)`` yields matrices of shape ``(..., 3, 3)``.

The trigonometric coefficients used by the Jacobian-type maps are all of the
form ``0/0`` at the origin. Each one is evaluated from its closed form above
``SMALL_ANGLE`` and from an exact Taylor series below it. The series
coefficients are generated once, with rational arithmetic, from the same
numerator the closed form uses.
"""

from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from math import factorial

import numpy as np

from .errors import NearPiRotation

#: Branch point (rad) between Taylor series and closed-form coefficients.
SMALL_ANGLE = 0.1
#: Rotations whose angle is within this distance of pi are rejected by ``log_so3``.
EPS_AXIS = 1e-6

_N_SERIES = 8


def _taylor(numerator, denom_power, denom_const=1):
    """Even-power Taylor coefficients of ``numerator(t) / (denom_const * t**denom_power)``.

    ``numerator`` is a list of ``(coef, power, kind)`` with kind one of
    ``"1"``, ``"sin"``, ``"cos"`` and stands for ``sum coef * t**power * kind(t)``.
    """
    top = denom_power + 2 * _N_SERIES + 2
    poly: dict[int, Fraction] = defaultdict(Fraction)
    for coef, power, kind in numerator:
        coef = Fraction(coef)
        if kind == "1":
            poly[power] += coef
            continue
        for k in range(top):
            deg = power + (2 * k + 1 if kind == "sin" else 2 * k)
            if deg > top:
                break
            fac = factorial(2 * k + 1) if kind == "sin" else factorial(2 * k)
            poly[deg] += coef * Fraction((-1) ** k, fac)
    for deg in range(denom_power):
        if poly[deg] != 0:
            raise ValueError("numerator does not vanish to the required order")
    coeffs = []
    for m in range(_N_SERIES):
        if poly[denom_power + 2 * m + 1] != 0:
            raise ValueError("odd term in an even coefficient")
        coeffs.append(float(poly[denom_power + 2 * m] / denom_const))
    return np.array(coeffs)


class _Coefficient:
    """Scalar function of the rotation angle with a series fallback near zero."""

    def __init__(self, closed, series):
        self._closed = closed
        self._series = series[::-1]

    def _poly(self, t2):
        out = np.full_like(t2, self._series[0])
        for c in self._series[1:]:
            out *= t2
            out += c
        return out

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        small = theta < SMALL_ANGLE
        if small.all():
            return self._poly(theta * theta)
        safe = np.where(small, 1.0, theta)
        closed = self._closed(safe)
        if not small.any():
            return closed
        return np.where(small, self._poly(theta * theta), closed)


kappa0 = _Coefficient(lambda t: np.sin(t) / t, _taylor([(1, 0, "sin")], 1))
kappa1 = _Coefficient(lambda t: (1 - np.cos(t)) / t**2, _taylor([(1, 0, "1"), (-1, 0, "cos")], 2))
kappa2 = _Coefficient(lambda t: (t - np.sin(t)) / t**3, _taylor([(1, 1, "1"), (-1, 0, "sin")], 3))
kappa3 = _Coefficient(
    lambda t: (t**2 + 2 * np.cos(t) - 2) / (2 * t**4),
    _taylor([(1, 2, "1"), (2, 0, "cos"), (-2, 0, "1")], 4, 2),
)
# kappa4 = (2 kappa1 - kappa0) / t^2
kappa4 = _Coefficient(
    lambda t: (2 - 2 * np.cos(t) - t * np.sin(t)) / t**4,
    _taylor([(2, 0, "1"), (-2, 0, "cos"), (-1, 1, "sin")], 4),
)
# kappa5 = (3 kappa2 - kappa1) / t^2
kappa5 = _Coefficient(
    lambda t: (2 * t - 3 * np.sin(t) + t * np.cos(t)) / t**5,
    _taylor([(2, 1, "1"), (-3, 0, "sin"), (1, 1, "cos")], 5),
)
# kappa6 = (kappa2 - 2 kappa4) / t^2
kappa6 = _Coefficient(
    lambda t: (t**2 + t * np.sin(t) + 4 * np.cos(t) - 4) / t**6,
    _taylor([(1, 2, "1"), (1, 1, "sin"), (4, 0, "cos"), (-4, 0, "1")], 6),
)

# (1 - (t/2) cot(t/2)) / t^2; finite up to 2 pi.
_GAMMA1_INV_SERIES = np.array([1 / 12, 1 / 720, 1 / 30240, 1 / 1209600, 1 / 47900160])[::-1]


def _gamma1_inv_coeff(theta):
    theta = np.asarray(theta, dtype=float)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    half = 0.5 * safe
    closed = (1.0 - half * np.cos(half) / np.sin(half)) / safe**2
    return np.where(small, np.polyval(_GAMMA1_INV_SERIES, theta * theta), closed)


def hat(v):
    """Skew-symmetric matrix with ``hat(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(W):
    W = np.asarray(W, dtype=float)
    return np.stack([W[..., 2, 1], W[..., 0, 2], W[..., 1, 0]], axis=-1)


def angle(omega):
    return np.linalg.norm(np.asarray(omega, dtype=float), axis=-1)


def _eye(shape):
    return np.broadcast_to(np.eye(3), tuple(shape) + (3, 3))


def _poly(omega, c0, c1, c2):
    """``c0 I + c1 W + c2 W W`` with W = hat(omega); coefficients are scalars or arrays."""
    omega = np.asarray(omega, dtype=float)
    W = hat(omega)
    c1 = np.asarray(c1)[..., None, None]
    c2 = np.asarray(c2)[..., None, None]
    # W W = w w^T - |w|^2 I, cheaper than a batched matmul
    sq = np.sum(omega * omega, axis=-1)[..., None, None]
    out = c2 * (omega[..., :, None] * omega[..., None, :]) + c1 * W
    out += (c0 - c2 * sq) * np.eye(3)
    return out


def exp_so3(omega):
    """Rodrigues formula."""
    t = angle(omega)
    return _poly(omega, 1.0, kappa0(t), kappa1(t))


def rotation_angle(R):
    """Rotation angle in [0, pi] computed without arccos precision loss."""
    R = np.asarray(R, dtype=float)
    s = 0.5 * np.linalg.norm(vee(R - np.swapaxes(R, -1, -2)), axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(s, c)


def log_so3(R):
    """Inverse of :func:`exp_so3` on rotations with angle below ``pi - EPS_AXIS``."""
    R = np.asarray(R, dtype=float)
    t = rotation_angle(R)
    if np.any(t > np.pi - EPS_AXIS):
        raise NearPiRotation(f"rotation angle {np.max(t):.9f} rad is within {EPS_AXIS} of pi")
    axis = 0.5 * vee(R - np.swapaxes(R, -1, -2))
    # axis = sin(t) * unit, so scale by t / sin(t) = 1 / kappa0
    return axis / kappa0(t)[..., None]


def gamma1(omega):
    """SO(3) left Jacobian, sum_k W^k / (k+1)!."""
    t = angle(omega)
    return _poly(omega, 1.0, kappa1(t), kappa2(t))


def gamma2(omega):
    """sum_k W^k / (k+2)!."""
    t = angle(omega)
    return _poly(omega, 0.5, kappa2(t), kappa3(t))


def gamma1_inv(omega):
    """Inverse of :func:`gamma1`, valid for angles below 2 pi."""
    t = angle(omega)
    return _poly(omega, 1.0, -0.5, _gamma1_inv_coeff(t))
