"""Immersed shape functions on interface elements.

On an interface element the IFE function is ``phi = phi_minus`` on the minus
subelement and ``phi_plus`` on the plus one, both in the element's polynomial
space, with

* continuity along the chord DE (and equal ``x^2 - y^2`` coefficient for RQ1),
* ``beta_minus grad(phi_minus).v(F) = beta_plus grad(phi_plus).v(F)``,
* prescribed edge averages.

Writing one piece in the standard basis and the other as that piece plus
``c0 * L`` with ``L(X) = nbar . (X - D)`` turns the edge-average conditions
into a rank-one perturbed identity system ``(I + k delta gamma^T) c = b``,
solved in closed form with the Sherman-Morrison formula.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import ShapeSet, eval_poly, grad_poly
from .geometry import MINUS, PLUS, SPLIT, CutInfo


class DegenerateGeometry(ValueError):
    pass


class NearSingular(RuntimeError):
    pass


def curve_jump_matrix(normal, ratio: float) -> np.ndarray:
    """``M^s`` at a curve point with unit normal ``normal``; ``ratio = beta_s / beta_s'``."""
    nx, ny = normal
    off = (ratio - 1.0) * nx * ny
    return np.array([[ny * ny + ratio * nx * nx, off], [off, nx * nx + ratio * ny * ny]])


def line_jump_matrix(nbar, v, ratio: float) -> np.ndarray:
    """``Mbar^s(F)`` built from the chord normal and the flux direction ``v``."""
    bx, by = nbar
    vx, vy = v
    dot = bx * vx + by * vy
    if dot <= 0.0:
        raise DegenerateGeometry(f"nbar . v(F) = {dot:.3e} is not positive")
    return (
        np.array(
            [
                [by * vy + ratio * bx * vx, -bx * vy + ratio * bx * vy],
                [-by * vx + ratio * by * vx, bx * vx + ratio * by * vy],
            ]
        )
        / dot
    )


@dataclass(frozen=True)
class JumpMatrices:
    M_minus: np.ndarray
    M_plus: np.ndarray
    Mbar_minus: np.ndarray
    Mbar_plus: np.ndarray
    rho: float

    def Mbar(self, side: int) -> np.ndarray:
        return self.Mbar_minus if side == MINUS else self.Mbar_plus


def jump_matrices(cut: CutInfo, beta_minus: float, beta_plus: float, normal=None) -> JumpMatrices:
    """Jump matrices of an interface element.

    ``M^s`` is evaluated with the curve normal ``normal`` (default: ``v(F)``).
    """
    if float(cut.nbar @ cut.vF) <= 0.0:
        raise DegenerateGeometry(f"element {cut.element_id}: nbar . v(F) <= 0")
    n = cut.vF if normal is None else np.asarray(normal, dtype=float)
    r = beta_minus / beta_plus
    return JumpMatrices(
        M_minus=curve_jump_matrix(n, r),
        M_plus=curve_jump_matrix(n, 1.0 / r),
        Mbar_minus=line_jump_matrix(cut.nbar, cut.vF, r),
        Mbar_plus=line_jump_matrix(cut.nbar, cut.vF, 1.0 / r),
        rho=r,
    )


def role_side(cut: CutInfo) -> int:
    """Side whose edges carry the unknown coefficients (fewer edges; ties to minus)."""
    n_minus = len(cut.indices(MINUS)[0])
    n_plus = len(cut.indices(PLUS)[0])
    return MINUS if n_minus <= n_plus else PLUS


@dataclass(frozen=True)
class SMSystem:
    """``(I + k delta gamma^T) c = b`` on the edges touching ``side``.

    ``unknown`` are the local edges touching the role side, ``known`` the
    edges lying entirely on the other side.  ``b`` may hold several
    right-hand sides as columns; ``known_flux`` is ``sum_known gamma_j v_j``.
    """

    k: float
    gamma: np.ndarray
    delta: np.ndarray
    b: np.ndarray
    side: int
    unknown: tuple[int, ...]
    known: tuple[int, ...]
    known_flux: np.ndarray
    rho_eff: float
    v_unknown: np.ndarray | None = None

    @property
    def gamma_delta(self) -> float:
        return float(self.gamma @ self.delta)

    @property
    def denominator(self) -> float:
        return 1.0 + self.k * self.gamma_delta


def linear_part(cut: CutInfo, center, scale: float) -> np.ndarray:
    """Coefficients of ``L(X) = nbar . (X - D)`` in the local monomial basis."""
    nb = cut.nbar
    return np.array([nb @ (np.asarray(center) - cut.D), scale * nb[0], scale * nb[1]])


def build_sm_system(cut: CutInfo, shapes: ShapeSet, beta, v) -> SMSystem:
    beta_minus, beta_plus = map(float, beta)
    v = np.asarray(v, dtype=float)
    side = role_side(cut)
    unknown, known = cut.indices(side)
    ndot = float(cut.nbar @ cut.vF)
    if ndot <= 0.0:
        raise DegenerateGeometry(f"element {cut.element_id}: nbar . v(F) <= 0")
    beta_s, beta_o = (beta_minus, beta_plus) if side == MINUS else (beta_plus, beta_minus)
    rho_eff = beta_s / beta_o
    k = (1.0 / rho_eff - 1.0) / ndot

    grads = shapes.grads(cut.F[None, :])[:, 0, :]  # (n, 2)
    gamma_all = grads @ cut.vF
    lengths = cut.element.edge_lengths()
    delta = np.empty(len(unknown))
    for r, j in enumerate(unknown):
        a, b = cut.edge_piece(j, side)
        # L is linear: integral = segment length * L(midpoint)
        delta[r] = np.hypot(*(b - a)) * float(cut.L(0.5 * (a + b))) / lengths[j]
    gamma = gamma_all[list(unknown)]
    known_flux = gamma_all[list(known)] @ v[list(known)] if known else np.zeros(v.shape[1:])
    b = v[list(unknown)] - k * np.multiply.outer(delta, known_flux)
    return SMSystem(
        k=k,
        gamma=gamma,
        delta=delta,
        b=b,
        side=side,
        unknown=tuple(unknown),
        known=tuple(known),
        known_flux=np.asarray(known_flux),
        rho_eff=rho_eff,
        v_unknown=v[list(unknown)],
    )


def solve_sm(system: SMSystem, tol: float = 1e-10):
    """Sherman-Morrison solution ``c`` and the coefficient ``c0`` of ``L``.

    ``c = b - k (gamma^T b) delta / (1 + k gamma^T delta)``.  When the
    prescribed values behind ``b`` are known it is evaluated in the
    equivalent form ``c0 = k g / (1 + k gamma^T delta)``, ``c = v - c0 delta``
    with ``g = gamma^T v + known_flux``, which avoids cancelling the
    ``O(k)`` terms of ``b`` for large coefficient jumps.
    """
    denom = system.denominator
    if abs(denom) < tol:
        raise NearSingular(f"1 + k gamma^T delta = {denom:.3e}")
    k, g, d = system.k, system.gamma, system.delta
    if system.v_unknown is None:
        b = system.b
        c = b - k * np.multiply.outer(d, g @ b) / denom
        c0 = k * (g @ c + system.known_flux)
        return c, c0
    flux = g @ system.v_unknown + system.known_flux
    if abs(k) > 1.0:
        c0 = flux / (1.0 / k + system.gamma_delta)
    else:
        c0 = k * flux / denom
    c = system.v_unknown - np.multiply.outer(d, c0)
    return c, c0


@dataclass(frozen=True, eq=False)
class PiecewiseShape:
    """One IFE function: ``minus = plus + c0 * L`` on the two subelements."""

    minus_coeffs: np.ndarray
    plus_coeffs: np.ndarray
    c0: float
    cut: CutInfo
    center: np.ndarray
    scale: float

    @property
    def side_rule(self) -> str:
        return self.cut.partition_mode

    def piece(self, side: int) -> np.ndarray:
        return self.minus_coeffs if side == MINUS else self.plus_coeffs

    def value(self, X, side=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        vm = eval_poly(self.minus_coeffs, X, self.center, self.scale)
        vp = eval_poly(self.plus_coeffs, X, self.center, self.scale)
        s = self.cut.side_of(X) if side is None else side
        return np.where(s == MINUS, vm, vp)

    def grad(self, X, side=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        gm = grad_poly(self.minus_coeffs, X, self.center, self.scale)
        gp = grad_poly(self.plus_coeffs, X, self.center, self.scale)
        s = self.cut.side_of(X) if side is None else side
        return np.where((np.asarray(s) == MINUS)[..., None], gm, gp)


def eval_ife(shape: PiecewiseShape, X):
    return shape.value(X)


def grad_ife(shape: PiecewiseShape, X):
    return shape.grad(X)


def ife_coefficients(cut: CutInfo, shapes: ShapeSet, beta, v=None):
    """Coefficient matrices of the IFE functions with edge averages ``v``.

    With ``v`` omitted the identity is used, giving the IFE shape functions.
    Returns ``(minus, plus, c0)`` where row ``i`` of ``minus``/``plus`` holds
    the local-frame coefficients of the i-th function.
    """
    n = shapes.n_dof
    V = np.eye(n) if v is None else np.asarray(v, dtype=float).reshape(n, -1)
    system = build_sm_system(cut, shapes, beta, V)
    c, c0 = solve_sm(system)
    full = V.copy()
    full[list(system.unknown)] = c
    other = full.T @ shapes.coeffs  # (r, m): piece on the non-role side
    Lc = np.zeros(shapes.coeffs.shape[1])
    Lc[:3] = linear_part(cut, shapes.center, shapes.scale)
    role = other + np.outer(c0, Lc)
    if system.side == MINUS:
        return role, other, c0
    return other, role, -c0


def ife_shape_functions(cut: CutInfo, shapes: ShapeSet, beta) -> list[PiecewiseShape]:
    minus, plus, c0 = ife_coefficients(cut, shapes, beta)
    return [
        PiecewiseShape(minus[i], plus[i], float(c0[i]), cut, shapes.center, shapes.scale)
        for i in range(shapes.n_dof)
    ]


@dataclass(frozen=True)
class IdentityResiduals:
    value: float  # identity for the functions themselves
    derivative: float  # its x / y derivatives

    def passes(self, h: float) -> bool:
        return self.value < 1e-10 and self.derivative < 1e-9 / h


def identity_sample_points(cut: CutInfo, side: int, n: int = 5) -> np.ndarray:
    """Tensor grid over the element clipped to ``side``, plus D, E and F."""
    V = cut.element.vertices
    lo, hi = V.min(axis=0), V.max(axis=0)
    t = (np.arange(n) + 0.5) / n
    gx, gy = np.meshgrid(lo[0] + t * (hi[0] - lo[0]), lo[1] + t * (hi[1] - lo[1]))
    G = np.column_stack([gx.ravel(), gy.ravel()])
    inside = np.ones(len(G), dtype=bool)
    k = len(V)
    for j in range(k):
        a, b = V[j], V[(j + 1) % k]
        inside &= (b[0] - a[0]) * (G[:, 1] - a[1]) - (b[1] - a[1]) * (G[:, 0] - a[0]) >= 0
    G = G[inside]
    G = G[cut.side_of(G) == side]
    return np.vstack([G, cut.D, cut.E, cut.F])


def check_identities(cut: CutInfo, phis: list[PiecewiseShape], beta, xbar_choices=None) -> IdentityResiduals:
    """Largest residuals of the vector identities satisfied by IFE functions.

    For ``X`` on side ``s`` the identities read, with ``A = Mbar^s(F) - I``,

        sum_i (M_i - X) phi_i(X)
          + A^T [ sum_{i other side} (M_i - Xbar_i) phi_i(X)
                + sum_{i cut} (1/|b_i|) int_{b_i on other side} (P - Xbar_i) ds phi_i(X) ] = 0

    together with its ``d/dx`` and ``d/dy`` derivatives.  ``xbar_choices`` is
    a list of points on the chord (or of per-edge point arrays); the default
    uses D and E.
    """
    beta_minus, beta_plus = map(float, beta)
    jm = jump_matrices(cut, beta_minus, beta_plus)
    el = cut.element
    n = el.n_edges
    mids = el.edge_midpoints()
    lengths = el.edge_lengths()
    if xbar_choices is None:
        xbar_choices = [cut.D, cut.E]
    worst0 = worst1 = 0.0
    for xbar in xbar_choices:
        xb = np.broadcast_to(np.asarray(xbar, dtype=float), (n, 2))
        for side in (MINUS, PLUS):
            A = jm.Mbar(side) - np.eye(2)
            # weights w_i so that the correction term is A^T sum_i w_i phi_i(X)
            w = np.zeros((n, 2))
            for j in range(n):
                cls = cut.edge_classes[j]
                if cls == -side:
                    w[j] = mids[j] - xb[j]
                elif cls == SPLIT:
                    a, b = cut.edge_piece(j, -side)
                    w[j] = np.hypot(*(b - a)) * (0.5 * (a + b) - xb[j]) / lengths[j]
            X = identity_sample_points(cut, side)
            coeffs = np.array([p.piece(side) for p in phis])
            vals = eval_poly(coeffs, X, phis[0].center, phis[0].scale)  # (n, N)
            grads = grad_poly(coeffs, X, phis[0].center, phis[0].scale)  # (n, N, 2)
            # identity for the values
            diff = mids[:, None, :] - X[None, :, :]  # (n, N, 2)
            r0 = np.einsum("inc,in->nc", diff, vals) + np.einsum("ic,in->nc", w, vals) @ A
            worst0 = max(worst0, float(np.max(np.hypot(r0[:, 0], r0[:, 1]))))
            for d in range(2):
                gd = grads[:, :, d]
                r1 = np.einsum("inc,in->nc", diff, gd) + np.einsum("ic,in->nc", w, gd) @ A
                r1[:, d] -= 1.0
                worst1 = max(worst1, float(np.max(np.hypot(r1[:, 0], r1[:, 1]))))
    return IdentityResiduals(worst0, worst1)
