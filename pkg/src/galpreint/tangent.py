"""Left-trivialized tangent group Gal(3) x| gal(3).

An element is a pair ``(C, gamma)`` with ``C`` a Galilean element and ``gamma``
a 10-vector of algebra coordinates. The product is

    (C1, g1) (C2, g2) = (C1 C2, g1 + Ad_C1 g2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gal3 import (
    Gal3Element,
    adjoint_matrix,
    exp_gal3,
    left_jacobian_gal3,
    left_jacobian_inv_gal3,
    log_gal3,
)


def _mv(M, x):
    return np.einsum("...ij,...j->...i", M, x)


@dataclass(frozen=True, eq=False)
class TangentGroupElement:
    C: Gal3Element
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))

    @classmethod
    def identity(cls, shape=()):
        return cls(Gal3Element.identity(shape), np.zeros(tuple(shape) + (10,)))

    @property
    def shape(self):
        return self.C.shape

    def __matmul__(self, other):
        return tg_compose(self, other)

    def inverse(self):
        return tg_inverse(self)

    def __getitem__(self, idx):
        return TangentGroupElement(self.C[idx], self.gamma[idx])


def tg_compose(X: TangentGroupElement, Y: TangentGroupElement) -> TangentGroupElement:
    return TangentGroupElement(X.C @ Y.C, X.gamma + _mv(adjoint_matrix(X.C), Y.gamma))


def tg_inverse(X: TangentGroupElement) -> TangentGroupElement:
    Ci = X.C.inverse()
    return TangentGroupElement(Ci, -_mv(adjoint_matrix(Ci), X.gamma))


def tg_log(X: TangentGroupElement):
    """Normal coordinates ``(log C, J_L(log C)^-1 gamma)`` as a 20-vector."""
    u = log_gal3(X.C)
    return np.concatenate([u, _mv(left_jacobian_inv_gal3(u), X.gamma)], axis=-1)


def tg_exp(xi) -> TangentGroupElement:
    """Exact inverse of :func:`tg_log`."""
    xi = np.asarray(xi, dtype=float)
    u, w = xi[..., :10], xi[..., 10:]
    return TangentGroupElement(exp_gal3(u), _mv(left_jacobian_gal3(u), w))
