"""Equivariant IMU preintegration on Gal(3) x| gal(3).

The manifold state is ``xi = (Upsilon, b)`` with ``Upsilon`` the Galilean
preintegration matrix and ``b`` a 10-vector of biases
``(b_omega, b_a, b_nu, b_rho)``. The estimate is carried on the symmetry group
as ``X_hat = (C, gamma)`` and mapped to the manifold through the state action
at the fixed origin ``(I5, 0)``.

Every function broadcasts over leading batch dimensions, so one call can
advance many independent integration streams in lockstep.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import gal3
from .gal3 import Gal3Element, adjoint_matrix, exp_gal3, left_jacobian_gal3, left_jacobian_inv_gal3, log_gal3
from .se23 import ExtendedPose
from .tangent import TangentGroupElement

#: Indices of the 15 navigation + IMU-bias components of the 20-dim error.
NEES_INDICES = np.r_[0:9, 10:16]

SCHEMA_VERSION = 1


def _mv(M, x):
    return np.einsum("...ij,...j->...i", M, x)


@dataclass(frozen=True, eq=False)
class ManifoldState:
    upsilon: Gal3Element
    bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float))

    @classmethod
    def origin(cls, shape=()):
        return cls(Gal3Element.identity(shape), np.zeros(tuple(shape) + (10,)))


@dataclass(frozen=True, eq=False)
class ImuInput:
    """Extended input ``w = (gyro, accel, nu=0, rho=1)`` with bias input ``tau``."""

    w: np.ndarray
    tau: np.ndarray
    dt: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))
        object.__setattr__(self, "dt", np.asarray(self.dt, dtype=float))


def imu_input(gyro, accel, dt, tau=None) -> ImuInput:
    gyro = np.asarray(gyro, dtype=float)
    accel = np.asarray(accel, dtype=float)
    shape = np.broadcast_shapes(gyro.shape[:-1], accel.shape[:-1])
    w = np.zeros(shape + (10,))
    w[..., 0:3] = gyro
    w[..., 3:6] = accel
    w[..., 9] = 1.0
    tau = np.zeros(shape + (10,)) if tau is None else tau
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise ValueError("dt must be positive")
    return ImuInput(w, tau, dt)


@dataclass(frozen=True)
class NoiseParams:
    """Discrete-time standard deviations per axis.

    ``sigma_g`` [rad/s] and ``sigma_a`` [m/s^2] are measurement noise;
    ``sigma_bg`` and ``sigma_ba`` drive the bias random walk.
    """

    sigma_g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma_bg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma_ba: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("sigma_g", "sigma_a", "sigma_bg", "sigma_ba"):
            val = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (3,)).copy()
            if np.any(val < 0):
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, val)

    @classmethod
    def from_continuous(cls, sigma_g, sigma_a, sigma_bg, sigma_ba, dt):
        """Convert noise densities with ``sigma_d = sigma_c / sqrt(dt)``."""
        s = 1.0 / np.sqrt(dt)
        return cls(
            np.asarray(sigma_g) * s,
            np.asarray(sigma_a) * s,
            np.asarray(sigma_bg) * s,
            np.asarray(sigma_ba) * s,
        )

    def scaled(self, factor):
        return NoiseParams(
            self.sigma_g * factor, self.sigma_a * factor, self.sigma_bg * factor, self.sigma_ba * factor
        )

    def discrete_covariance(self):
        """20x20 ``Q_d`` with zeros on the virtual input channels."""
        diag = np.zeros(20)
        diag[0:3] = self.sigma_g**2
        diag[3:6] = self.sigma_a**2
        diag[10:13] = self.sigma_bg**2
        diag[13:16] = self.sigma_ba**2
        return np.diag(diag)


#: Discrete noise levels of the medium-noise simulation setting.
MEDIUM_NOISE = NoiseParams(7e-2, 1.9e-1, 1.5e-4, 1.2e-2)


@dataclass(frozen=True)
class GravityModel:
    g: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    allow_any_magnitude: bool = False

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).reshape(3)
        object.__setattr__(self, "g", g)
        if not self.allow_any_magnitude and not 9.7 <= np.linalg.norm(g) <= 9.9:
            raise ValueError(f"gravity magnitude {np.linalg.norm(g):.4f} outside [9.7, 9.9]")


@dataclass(frozen=True, eq=False)
class PreintState:
    X_hat: TangentGroupElement
    Sigma: np.ndarray
    J_xi: np.ndarray
    elapsed: np.ndarray

    @property
    def estimate(self) -> ManifoldState:
        return state_action(self.X_hat, ManifoldState.origin(self.X_hat.shape))

    @property
    def upsilon(self) -> Gal3Element:
        return self.X_hat.C

    @property
    def bias(self):
        return self.estimate.bias

    @property
    def J_upsilon(self):
        return self.J_xi[..., :10, 10:]


# Group actions ---------------------------------------------------------------


def state_action(X: TangentGroupElement, xi: ManifoldState) -> ManifoldState:
    """``phi(X, xi) = (Upsilon C, Ad_{C^-1}(b - gamma))``."""
    Ci = X.C.inverse()
    return ManifoldState(xi.upsilon @ X.C, _mv(adjoint_matrix(Ci), xi.bias - X.gamma))


def inv_state_action(xi: ManifoldState) -> TangentGroupElement:
    """Group element mapping the origin ``(I5, 0)`` to ``xi``."""
    return TangentGroupElement(xi.upsilon, -_mv(adjoint_matrix(xi.upsilon), xi.bias))


def input_action(X: TangentGroupElement, u: ImuInput) -> ImuInput:
    AdCi = adjoint_matrix(X.C.inverse())
    return ImuInput(_mv(AdCi, u.w - X.gamma), _mv(AdCi, u.tau), u.dt)


def manifold_step(xi: ManifoldState, u: ImuInput) -> ManifoldState:
    """Exact zero-order-hold update of the preintegration matrix and biases."""
    dt = u.dt[..., None]
    return ManifoldState(xi.upsilon @ exp_gal3((u.w - xi.bias) * dt), xi.bias + u.tau * dt)


def lift(xi: ManifoldState, u: ImuInput) -> TangentGroupElement:
    dt = u.dt[..., None]
    L1 = exp_gal3((u.w - xi.bias) * dt)
    L2 = xi.bias - _mv(adjoint_matrix(L1), xi.bias + u.tau * dt)
    return TangentGroupElement(L1, L2)


# Algorithm steps -------------------------------------------------------------


def initial_state(bias0, sigma0=None, shape=None) -> PreintState:
    """State at the start of a preintegration window, ``X_hat = (I5, -b0)``."""
    bias0 = _bias10(bias0)
    shape = bias0.shape[:-1] if shape is None else tuple(shape)
    bias0 = np.broadcast_to(bias0, shape + (10,))
    X0 = TangentGroupElement(Gal3Element.identity(shape), -bias0)
    Sigma = np.broadcast_to(expand_sigma0(sigma0), shape + (20, 20)).copy()
    J = np.broadcast_to(np.eye(20), shape + (20, 20)).copy()
    return PreintState(X0, Sigma, J, np.zeros(shape))


def _bias10(bias):
    bias = np.asarray(bias, dtype=float)
    if bias.shape[-1] == 10:
        return bias
    if bias.shape[-1] == 6:
        out = np.zeros(bias.shape[:-1] + (10,))
        out[..., :6] = bias
        return out
    raise ValueError("bias must have 6 or 10 components")


def expand_sigma0(sigma0):
    """Accept ``None``, a scalar, 15/20 diagonal variances or a 20x20 matrix."""
    if sigma0 is None:
        return np.zeros((20, 20))
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.ndim == 0:
        diag = np.zeros(20)
        diag[NEES_INDICES] = sigma0
        return np.diag(diag)
    if sigma0.shape == (15,):
        diag = np.zeros(20)
        diag[NEES_INDICES] = sigma0
        return np.diag(diag)
    if sigma0.shape == (20,):
        return np.diag(sigma0)
    if sigma0.shape == (20, 20):
        return sigma0.copy()
    raise ValueError(f"cannot interpret initial covariance of shape {sigma0.shape}")


def propagate_mean(s: PreintState, u: ImuInput) -> PreintState:
    xi = s.estimate
    X1 = s.X_hat @ lift(xi, u)
    return replace(s, X_hat=X1, elapsed=s.elapsed + u.dt)


def _linearization(s: PreintState, u: ImuInput):
    xi = s.estimate
    dt = u.dt[..., None]
    Ad_U = adjoint_matrix(xi.upsilon)
    w_ring = _mv(Ad_U, u.w - xi.bias)
    step = exp_gal3((u.w - xi.bias) * dt)
    upsilon_next = xi.upsilon @ step
    JL = left_jacobian_gal3(w_ring * dt)
    return xi, Ad_U, w_ring, upsilon_next, JL


def error_state_matrices(s: PreintState, u: ImuInput):
    """Linearized error dynamics ``eps_{k+1} ~ A eps_k + B eta_k``."""
    _, Ad_U, w_ring, upsilon_next, JL = _linearization(s, u)
    return _assemble_AB(Ad_U, w_ring, upsilon_next, JL, u.dt)


def _assemble_AB(Ad_U, w_ring, upsilon_next, JL, dt):
    shape = Ad_U.shape[:-2]
    dt_ = np.asarray(dt)[..., None, None]
    A = np.zeros(shape + (20, 20))
    A[..., :10, :10] = np.eye(10)
    A[..., :10, 10:] = JL * dt_
    A[..., 10:, 10:] = adjoint_matrix(exp_gal3(w_ring * np.asarray(dt)[..., None]))
    B = np.zeros(shape + (20, 20))
    B[..., :10, :10] = -(JL @ Ad_U) * dt_
    B[..., 10:, 10:] = adjoint_matrix(upsilon_next) * dt_
    return A, B


def propagate_covariance(Sigma, A, B, Q_d):
    S = A @ Sigma @ np.swapaxes(A, -1, -2) + B @ Q_d @ np.swapaxes(B, -1, -2)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def bias_jacobian_step(s: PreintState, u: ImuInput):
    """``Phi_b`` such that ``J_xi <- Phi_b J_xi``."""
    xi = s.estimate
    dt_ = u.dt[..., None, None]
    Ad_U = adjoint_matrix(xi.upsilon)
    JL = left_jacobian_gal3((u.w - xi.bias) * u.dt[..., None])
    Phi = np.broadcast_to(np.eye(20), Ad_U.shape[:-2] + (20, 20)).copy()
    Phi[..., :10, 10:] = -(Ad_U @ JL) * dt_
    return Phi


def step(s: PreintState, u: ImuInput, Q_d, track_bias_jacobian=True, return_matrices=False):
    """One iteration of the equivariant preintegration algorithm.

    With ``return_matrices`` the linearization ``(A, B)`` used for the
    covariance is returned alongside the new state.
    """
    _, Ad_U, w_ring, upsilon_next, JL = _linearization(s, u)
    A, B = _assemble_AB(Ad_U, w_ring, upsilon_next, JL, u.dt)
    J_xi = s.J_xi
    if track_bias_jacobian:
        J_xi = bias_jacobian_step(s, u) @ J_xi
    s1 = propagate_mean(s, u)
    out = PreintState(s1.X_hat, propagate_covariance(s.Sigma, A, B, Q_d), J_xi, s1.elapsed)
    if return_matrices:
        return out, A, B
    return out


def integrate(times, gyro, accel, bias0, noise: NoiseParams | None = None, sigma0=None,
              track_bias_jacobian=True) -> PreintState:
    """Run the algorithm over samples held constant on ``[t_k, t_k+1)``."""
    times = np.asarray(times, dtype=float)
    gyro = np.asarray(gyro, dtype=float)
    accel = np.asarray(accel, dtype=float)
    Q_d = (noise or NoiseParams()).discrete_covariance()
    s = initial_state(bias0, sigma0)
    for k in range(len(times) - 1):
        u = imu_input(gyro[k], accel[k], times[k + 1] - times[k])
        s = step(s, u, Q_d, track_bias_jacobian)
    return s


def equivariant_error(estimate, xi_true: ManifoldState):
    """20-dim error in normal coordinates.

    ``estimate`` is a :class:`PreintState` or a :class:`ManifoldState`.
    """
    xi_hat = estimate.estimate if isinstance(estimate, PreintState) else estimate
    E = xi_true.upsilon @ xi_hat.upsilon.inverse()
    e_u = log_gal3(E)
    e_b = -_mv(left_jacobian_inv_gal3(e_u) @ adjoint_matrix(xi_true.upsilon), xi_true.bias - xi_hat.bias)
    return np.concatenate([e_u, e_b], axis=-1)


def state_from_error(xi_hat: ManifoldState, eps) -> ManifoldState:
    """Manifold state whose equivariant error relative to ``xi_hat`` is ``eps``."""
    eps = np.asarray(eps, dtype=float)
    upsilon = exp_gal3(eps[..., :10]) @ xi_hat.upsilon
    db = _mv(adjoint_matrix(upsilon.inverse()) @ left_jacobian_gal3(eps[..., :10]), eps[..., 10:])
    return ManifoldState(upsilon, xi_hat.bias - db)


def apply_bias_update(s: PreintState, delta_b) -> PreintState:
    """First-order correction of the preintegrated motion for a new initial bias."""
    delta_b = _bias10(delta_b)
    xi = s.estimate
    upsilon = exp_gal3(_mv(s.J_upsilon, delta_b)) @ xi.upsilon
    X = inv_state_action(ManifoldState(upsilon, xi.bias + delta_b))
    return replace(s, X_hat=X)


# Gravity / time factor and pose composition -----------------------------------


def gamma_matrix(g, Dt) -> Gal3Element:
    """Exact gravity and time factor over a window of length ``Dt``."""
    g = np.asarray(getattr(g, "g", g), dtype=float)
    Dt = np.asarray(Dt, dtype=float)
    if np.any(Dt < 0):
        raise ValueError("Dt must be non-negative")
    shape = Dt.shape
    return Gal3Element(
        np.broadcast_to(np.eye(3), shape + (3, 3)).copy(),
        g * Dt[..., None],
        -0.5 * g * Dt[..., None] ** 2,
        -Dt,
    )


def gamma_matrix_inverse(g, Dt) -> Gal3Element:
    g = np.asarray(getattr(g, "g", g), dtype=float)
    Dt = np.asarray(Dt, dtype=float)
    shape = Dt.shape
    return Gal3Element(
        np.broadcast_to(np.eye(3), shape + (3, 3)).copy(),
        -g * Dt[..., None],
        -0.5 * g * Dt[..., None] ** 2,
        Dt,
    )


def compose_pose(pose_i, upsilon, g) -> ExtendedPose:
    """Pose at the end of a window: ``T_j = Gamma T_i Upsilon``."""
    if isinstance(upsilon, PreintState):
        upsilon = upsilon.upsilon
    if isinstance(pose_i, ExtendedPose):
        pose_i = pose_i.to_gal3()
    Tj = gamma_matrix(g, upsilon.c) @ pose_i @ upsilon
    return ExtendedPose.from_gal3(Tj)


def to_pose_error(eps, Dt):
    """Map the first nine entries of an equivariant error to SE_2(3) log coordinates.

    With an exact time entry the two errors differ only by the shear
    ``r -> r + Dt v`` between velocity and position.
    """
    eps = np.asarray(eps, dtype=float)
    out = eps[..., :9].copy()
    out[..., 6:9] += np.asarray(Dt, dtype=float)[..., None] * eps[..., 3:6]
    return out


def relative_upsilon(pose_i, pose_j, Dt, g) -> Gal3Element:
    """Preintegration matrix implied by two poses: ``T_i^-1 Gamma^-1 T_j``."""
    if isinstance(pose_i, ExtendedPose):
        pose_i = pose_i.to_gal3()
    if isinstance(pose_j, ExtendedPose):
        pose_j = pose_j.to_gal3()
    return pose_i.inverse() @ gamma_matrix_inverse(g, Dt) @ pose_j


# Checkpointing ----------------------------------------------------------------


def state_to_dict(s: PreintState, variant="equivariant") -> dict:
    if s.X_hat.shape != ():
        raise ValueError("only single (unbatched) states can be serialized")
    U = s.upsilon
    return {
        "schema_version": SCHEMA_VERSION,
        "variant": variant,
        "upsilon": {"A": U.A.tolist(), "a": U.a.tolist(), "b": U.b.tolist(), "c": float(U.c)},
        "bias": s.bias.tolist(),
        "sigma": s.Sigma.tolist(),
        "j_xi": s.J_xi.tolist(),
        "elapsed": float(s.elapsed),
    }


def state_from_dict(d: dict) -> PreintState:
    if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {d['schema_version']}")
    u = d["upsilon"]
    upsilon = Gal3Element(u["A"], u["a"], u["b"], u["c"])
    X = inv_state_action(ManifoldState(upsilon, d["bias"]))
    Sigma = np.asarray(d["sigma"], dtype=float).reshape(20, 20)
    J = np.asarray(d["j_xi"], dtype=float).reshape(20, 20)
    return PreintState(X, Sigma, J, np.asarray(float(d["elapsed"])))


def save_state(s: PreintState, path, variant="equivariant"):
    with open(path, "w") as fh:
        json.dump(state_to_dict(s, variant), fh)


def load_state(path) -> PreintState:
    with open(path) as fh:
        return state_from_dict(json.load(fh))


__all__ = [name for name in dir() if not name.startswith("_") and name not in ("json", "np", "gal3")]
