"""Self-check suite run by ``galpreint check``.

Every check compares a closed form with an independent reference (power
series, dense matrix exponential or finite differences) on seeded random
inputs and reports the worst error against its tolerance.
"""

from __future__ import annotations

import contextlib
import time
from math import factorial

import numpy as np
from scipy.linalg import expm

from . import so3
from .gal3 import (
    adjoint_matrix,
    exp_gal3,
    hat10,
    left_jacobian_gal3,
    left_jacobian_inv_gal3,
    log_gal3,
    q1,
    q2,
    right_jacobian_gal3,
    u1,
)
from .preintegration import (
    ImuInput,
    ManifoldState,
    equivariant_error,
    error_state_matrices,
    imu_input,
    initial_state,
    input_action,
    lift,
    manifold_step,
    propagate_mean,
    state_action,
    state_from_error,
    step,
)
from .se23 import exp_se23, hat9, left_jacobian_se23, log_se23, right_jacobian_se23
from .tangent import TangentGroupElement

REPORT_VERSION = 1

REPORT_SCHEMA = {
    "type": "object",
    "required": ["report_version", "passed", "checks", "first_failure"],
    "properties": {
        "report_version": {"const": REPORT_VERSION},
        "passed": {"type": "boolean"},
        "first_failure": {"type": ["string", "null"]},
        "seed": {"type": "integer"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "passed", "max_error", "tolerance", "seconds"],
                "properties": {
                    "name": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "max_error": {"type": ["number", "null"]},
                    "tolerance": {"type": "number"},
                    "seconds": {"type": "number"},
                    "detail": {"type": "string"},
                },
            },
        },
    },
}


def _rot(rng, n, max_angle=3.0):
    axis = rng.standard_normal((n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    # mix tiny angles in so the series branch is exercised
    ang = np.where(rng.random(n) < 0.3, rng.uniform(0, 0.2, n), rng.uniform(0, max_angle, n))
    return axis * ang[:, None]


def _power(omega, weight, terms=40):
    W = so3.hat(omega)
    out = np.zeros(W.shape)
    P = np.broadcast_to(np.eye(3), W.shape)
    for k in range(terms):
        out = out + weight(k) * P
        P = P @ W
    return out


def _double(omega, z, weight, terms=30):
    W, Z = so3.hat(omega), so3.hat(z)
    pw = [np.broadcast_to(np.eye(3), W.shape)]
    for _ in range(terms):
        pw.append(pw[-1] @ W)
    out = np.zeros(W.shape)
    for k in range(terms):
        left = pw[k] @ Z
        for p in range(terms - k):
            out = out + weight(p, k) * (left @ pw[p])
    return out


def _vec10(rng, n, max_angle=3.0):
    x = rng.standard_normal((n, 10))
    x[:, :3] = _rot(rng, n, max_angle)
    return x


def _fd(f, x, h):
    """Central-difference Jacobian of a batched function of vectors."""
    cols = []
    for i in range(x.shape[-1]):
        e = np.zeros_like(x)
        e[..., i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def check_series(rng, n=200):
    w = _rot(rng, n)
    z = rng.standard_normal((n, 3))
    ref = {
        "gamma1": _power(w, lambda k: 1 / factorial(k + 1)),
        "gamma2": _power(w, lambda k: 1 / factorial(k + 2)),
        "u1": _power(w, lambda k: (k + 1) / factorial(k + 2)),
        "q1": _double(w, z, lambda p, k: 1 / factorial(p + k + 2)),
        "q2": _double(w, z, lambda p, k: (k + 1) / factorial(p + k + 3)),
    }
    got = {"gamma1": so3.gamma1(w), "gamma2": so3.gamma2(w), "u1": u1(w), "q1": q1(w, z), "q2": q2(w, z)}
    return max(np.abs(got[k] - ref[k]).max() for k in ref)


def check_exp_log(rng, n=200):
    w = _rot(rng, n)
    err = 0.0
    for i in range(n):
        err = max(err, np.abs(so3.exp_so3(w[i]) - expm(so3.hat(w[i]))).max())
    x9 = np.concatenate([w, rng.standard_normal((n, 6))], axis=1)
    x10 = np.concatenate([x9, rng.standard_normal((n, 1))], axis=1)
    for i in range(0, n, 4):
        err = max(err, np.abs(exp_se23(x9[i]).matrix() - expm(hat9(x9[i]))).max())
        err = max(err, np.abs(exp_gal3(x10[i]).matrix() - expm(hat10(x10[i]))).max())
    err = max(err, np.abs(so3.log_so3(so3.exp_so3(w)) - w).max())
    err = max(err, np.abs(log_se23(exp_se23(x9)) - x9).max())
    err = max(err, np.abs(log_gal3(exp_gal3(x10)) - x10).max())
    return err


def check_group_axioms(rng, n=100):
    X = exp_gal3(_vec10(rng, n, 1.5))
    Y = exp_gal3(_vec10(rng, n, 1.5))
    Z = exp_gal3(_vec10(rng, n, 1.5))
    err = np.abs(((X @ Y) @ Z).matrix() - (X @ (Y @ Z)).matrix()).max()
    err = max(err, np.abs((X @ X.inverse()).matrix() - np.eye(5)).max())
    err = max(err, np.abs((X @ Y).matrix() - X.matrix() @ Y.matrix()).max())
    x = _vec10(rng, n)
    lhs = hat10(np.einsum("...ij,...j->...i", adjoint_matrix(X), x))
    rhs = X.matrix() @ hat10(x) @ X.inverse().matrix()
    return max(err, np.abs(lhs - rhs).max())


def check_jacobians(rng, n=50, h=1e-6):
    x = _vec10(rng, n, 2.5)
    JL = left_jacobian_gal3(x)
    fd = _fd(lambda y: log_gal3(exp_gal3(y) @ exp_gal3(x).inverse()), x, h)
    err = np.abs(JL - fd).max() / 10
    err = max(err, np.abs(right_jacobian_gal3(x) - left_jacobian_gal3(-x)).max())
    err = max(err, np.abs(left_jacobian_inv_gal3(x) @ JL - np.eye(10)).max())
    y = x[:, :9]
    fd9 = _fd(lambda v: log_se23(exp_se23(v) @ exp_se23(y).inverse()), y, h)
    err = max(err, np.abs(left_jacobian_se23(y) - fd9).max() / 10)
    err = max(err, np.abs(right_jacobian_se23(y) - left_jacobian_se23(-y)).max())
    return err


def _random_state(rng, n):
    return ManifoldState(exp_gal3(_vec10(rng, n, 1.0) * 0.5), rng.standard_normal((n, 10)) * 0.3)


def _random_input(rng, n):
    dt = rng.uniform(1e-3, 0.1, n)
    return imu_input(rng.standard_normal((n, 3)), rng.standard_normal((n, 3)), dt,
                     tau=rng.standard_normal((n, 10)))


def check_lift(rng, n=200):
    xi = _random_state(rng, n)
    u = _random_input(rng, n)
    a = state_action(lift(xi, u), xi)
    b = manifold_step(xi, u)
    return max(np.abs(a.upsilon.matrix() - b.upsilon.matrix()).max(), np.abs(a.bias - b.bias).max())


def check_equivariance(rng, n=200):
    xi = _random_state(rng, n)
    u = _random_input(rng, n)
    X = TangentGroupElement(exp_gal3(_vec10(rng, n, 1.0) * 0.5), rng.standard_normal((n, 10)))
    a = manifold_step(state_action(X, xi), input_action(X, u))
    b = state_action(X, manifold_step(xi, u))
    return max(np.abs(a.upsilon.matrix() - b.upsilon.matrix()).max(), np.abs(a.bias - b.bias).max())


def check_error_matrices(rng, n=20, h=1e-5):
    s = initial_state(rng.standard_normal((n, 6)) * 0.1)
    Q = np.zeros((20, 20))
    for _ in range(5):
        s = step(s, imu_input(rng.standard_normal((n, 3)), rng.standard_normal((n, 3)), np.full(n, 0.01)), Q)
    u = imu_input(rng.standard_normal((n, 3)), rng.standard_normal((n, 3)), np.full(n, 0.01))
    A, B = error_state_matrices(s, u)
    xh, xh1 = s.estimate, propagate_mean(s, u).estimate

    def recursion(z):
        xt = state_from_error(xh, z[..., :20])
        eta = z[..., 20:]
        nxt = manifold_step(xt, ImuInput(u.w - eta[..., :10], -eta[..., 10:], u.dt))
        return equivariant_error(xh1, nxt)

    J = _fd(recursion, np.zeros((n, 40)), h)
    return max(np.abs(J[..., :20] - A).max(), np.abs(J[..., 20:] - B).max())


CHECKS = [
    ("closed_form_series", check_series, 1e-10),
    ("exp_log_dense_expm", check_exp_log, 1e-10),
    ("group_axioms", check_group_axioms, 1e-10),
    ("jacobians_finite_difference", check_jacobians, 1e-7),
    ("lift_condition", check_lift, 1e-9),
    ("equivariance", check_equivariance, 1e-9),
    ("error_matrices_finite_difference", check_error_matrices, 1e-6),
]


@contextlib.contextmanager
def inject_fault(name):
    """Temporarily replace a coefficient with a wrong one (for negative tests)."""
    if name is None:
        yield
        return
    if name != "kappa3":
        raise ValueError(f"unknown fault {name!r}")
    original = so3.kappa3
    so3.kappa3 = lambda t: original(t) * 1.01
    try:
        yield
    finally:
        so3.kappa3 = original


def run_checks(seed=0, fault=None, stop_on_failure=False):
    """Run the suite; returns a report dict matching :data:`REPORT_SCHEMA`."""
    results = []
    with inject_fault(fault):
        for name, fn, tol in CHECKS:
            rng = np.random.default_rng([seed, len(results)])
            t0 = time.perf_counter()
            try:
                err = float(fn(rng))
                ok = bool(np.isfinite(err) and err <= tol)
                detail = ""
            except Exception as exc:  # a crashing check is a failing check
                err, ok, detail = None, False, f"{type(exc).__name__}: {exc}"
            entry = {"name": name, "passed": ok, "max_error": err, "tolerance": tol,
                     "seconds": round(time.perf_counter() - t0, 4)}
            if detail:
                entry["detail"] = detail
            results.append(entry)
            if stop_on_failure and not ok:
                break
    failed = [r["name"] for r in results if not r["passed"]]
    return {"report_version": REPORT_VERSION, "seed": seed, "passed": not failed,
            "first_failure": failed[0] if failed else None, "checks": results}
