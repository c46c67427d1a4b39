"""Crouzeix-Raviart and rotated-Q1 shape functions with edge-average DOFs.

Polynomials are stored as coefficient vectors over the monomials
``[1, xi, eta]`` (CR) or ``[1, xi, eta, xi**2 - eta**2]`` (RQ1), where
``xi = (x - cx) / s`` and ``eta = (y - cy) / s`` for an element center
``(cx, cy)`` and scale ``s``.  With the default center ``(0, 0)`` and scale
``1`` the coefficients are plain physical-coordinate coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import KIND_RECT, Element

CR = "CR"
RQ1 = "RQ1"

_DIMENSION = {CR: 3, RQ1: 4}

# 2-point Gauss on [0, 1]; exact up to cubic along a segment
_G2_X = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
_G2_W = np.array([0.5, 0.5])


class SingularBasis(RuntimeError):
    pass


def normalize_family(family: str) -> str:
    f = family.upper()
    if f not in _DIMENSION:
        raise ValueError(f"unknown element family {family!r}")
    return f


def dimension(family: str) -> int:
    return _DIMENSION[normalize_family(family)]


def family_for(element: Element) -> str:
    return RQ1 if element.kind == KIND_RECT else CR


def _local(X, center, scale):
    X = np.asarray(X, dtype=float)
    return (X[..., 0] - center[0]) / scale, (X[..., 1] - center[1]) / scale


def monomials(m: int, xi, eta) -> np.ndarray:
    """Monomial values, shape (m,) + xi.shape."""
    one = np.ones_like(xi)
    vals = [one, xi, eta]
    if m == 4:
        vals.append(xi * xi - eta * eta)
    return np.stack(vals)


def eval_poly(coeffs, X, center=(0.0, 0.0), scale: float = 1.0) -> np.ndarray:
    """Evaluate coefficient vectors ``coeffs[..., m]`` at points ``X[..., 2]``.

    Returns an array of shape ``coeffs.shape[:-1] + X.shape[:-1]``.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    xi, eta = _local(X, center, scale)
    M = monomials(coeffs.shape[-1], xi, eta)
    return np.tensordot(coeffs, M, axes=([-1], [0]))


def grad_poly(coeffs, X, center=(0.0, 0.0), scale: float = 1.0) -> np.ndarray:
    """Physical gradient; shape ``coeffs.shape[:-1] + X.shape[:-1] + (2,)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    xi, eta = _local(X, center, scale)
    sl = (Ellipsis,) + (None,) * np.ndim(xi)
    gx = coeffs[..., 1][sl] + 0.0 * xi
    gy = coeffs[..., 2][sl] + 0.0 * eta
    if coeffs.shape[-1] == 4:
        gx = gx + 2.0 * coeffs[..., 3][sl] * xi
        gy = gy - 2.0 * coeffs[..., 3][sl] * eta
    return np.stack([gx, gy], axis=-1) / scale


def edge_average(coeffs, a, b, center=(0.0, 0.0), scale: float = 1.0) -> np.ndarray:
    """Exact average of polynomial(s) along the segment ``a -> b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    P = a + _G2_X[:, None] * (b - a)
    return eval_poly(coeffs, P, center, scale) @ _G2_W


def edge_integral(coeffs, a, b, center=(0.0, 0.0), scale: float = 1.0) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return edge_average(coeffs, a, b, center, scale) * np.hypot(*(b - a))


@dataclass(frozen=True, eq=False)
class ShapeSet:
    """Standard shape functions of one element; row ``i`` is psi_i."""

    element_id: int
    family: str
    center: np.ndarray
    scale: float
    coeffs: np.ndarray

    @property
    def n_dof(self) -> int:
        return self.coeffs.shape[0]

    def values(self, X) -> np.ndarray:
        return eval_poly(self.coeffs, X, self.center, self.scale)

    def grads(self, X) -> np.ndarray:
        return grad_poly(self.coeffs, X, self.center, self.scale)


def dof_matrix(element: Element, m: int) -> np.ndarray:
    """``V[j, k]`` = average of monomial ``k`` over edge ``j`` (local frame)."""
    eye = np.eye(m)
    return np.array(
        [edge_average(eye, *element.edge(j), element.center, element.scale) for j in range(element.n_edges)]
    )


def standard_shapes(element: Element, family: str | None = None) -> ShapeSet:
    """Shape functions with the Kronecker property for the edge averages."""
    fam = normalize_family(family) if family else family_for(element)
    if fam != family_for(element):
        raise ValueError(f"{fam} elements need {'triangles' if fam == CR else 'rectangles'}")
    m = _DIMENSION[fam]
    V = dof_matrix(element, m)
    if np.linalg.cond(V) > 1e10:
        raise SingularBasis(f"DOF matrix of element {element.index} is singular")
    # sum_k C[i, k] V[j, k] = delta_ij
    C = np.linalg.solve(V, np.eye(m)).T
    return ShapeSet(element.index, fam, element.center.copy(), element.scale, C)


def eval_shape(coeffs, X, center=(0.0, 0.0), scale: float = 1.0):
    return eval_poly(coeffs, X, center, scale)


def grad_shape(coeffs, X, center=(0.0, 0.0), scale: float = 1.0):
    return grad_poly(coeffs, X, center, scale)
