"""Global IFE space, Galerkin assembly and the sparse solve.

DOFs are edge averages, one per mesh edge, so the DOF map is the element to
edge incidence and weak continuity across edges holds by construction.
Non-interface elements of one kind are translates of each other, which lets
their element matrices and load vectors be computed in vectorized form;
interface elements are handled one at a time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .basis import ShapeSet, eval_poly, grad_poly, normalize_family, standard_shapes
from .basis import CR, RQ1
from .geometry import (
    CURVE,
    CURVE_MIDPOINT,
    MINUS,
    PLUS,
    RECTANGULAR,
    Classification,
    CutInfo,
    InterfaceCurve,
    Mesh,
    _edge_root,
    classify_elements,
    compute_cut,
)
from .ife import PiecewiseShape, ife_coefficients
from .quad import InterfaceRules, element_offsets, gauss01, interface_rules

log = logging.getLogger(__name__)


class AssemblyError(RuntimeError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _sided(fn):
    """Accept either one callable or a (minus, plus) pair."""
    if callable(fn):
        return {MINUS: fn, PLUS: fn}
    f_minus, f_plus = fn
    return {MINUS: f_minus, PLUS: f_plus}


@dataclass(frozen=True, eq=False)
class InterfaceData:
    cut: CutInfo
    shapes: ShapeSet
    minus: np.ndarray  # (n_dof, m) coefficients of the minus pieces
    plus: np.ndarray
    c0: np.ndarray
    rules: InterfaceRules

    def piece(self, side: int) -> np.ndarray:
        return self.minus if side == MINUS else self.plus

    def shape_functions(self) -> list[PiecewiseShape]:
        return [
            PiecewiseShape(self.minus[i], self.plus[i], float(self.c0[i]), self.cut, self.shapes.center, self.shapes.scale)
            for i in range(self.shapes.n_dof)
        ]


@dataclass(frozen=True, eq=False)
class KindData:
    """Reference data shared by all non-interface elements of one kind."""

    coeffs: np.ndarray  # standard shape coefficients, local frame
    offsets: np.ndarray  # quadrature points relative to the element center
    weights: np.ndarray
    values: np.ndarray  # (n_dof, nq)
    grads: np.ndarray  # (n_dof, nq, 2)
    stiffness: np.ndarray  # beta = 1


@dataclass(eq=False)
class IFESpace:
    """Nonconforming IFE space on a Cartesian mesh.

    Uses standard CR/RQ1 functions on non-interface elements and IFE
    functions on interface elements; one DOF per edge.
    """

    mesh: Mesh
    curve: InterfaceCurve
    beta: tuple[float, float]
    family: str | None = None
    partition_mode: str = CURVE
    flux_mode: str = CURVE_MIDPOINT
    order: int = 8
    classification: Classification = field(init=False)
    kinds: dict = field(init=False)
    interface: dict = field(init=False)

    def __post_init__(self):
        expected = RQ1 if self.mesh.cell_type == RECTANGULAR else CR
        self.family = normalize_family(self.family) if self.family else expected
        if self.family != expected:
            raise ValueError(f"{self.family} does not match a {self.mesh.cell_type} mesh")
        self.beta = (float(self.beta[0]), float(self.beta[1]))
        self.classification = classify_elements(self.mesh, self.curve)
        self.kinds = {}
        for kind in np.unique(self.mesh.element_kind):
            e = int(np.flatnonzero(self.mesh.element_kind == kind)[0])
            el = self.mesh.element(e)
            shapes = standard_shapes(el, self.family)
            off, w = element_offsets(el.vertices, self.order)
            vals = eval_poly(shapes.coeffs, off, (0.0, 0.0), el.scale)
            grads = grad_poly(shapes.coeffs, off, (0.0, 0.0), el.scale)
            K = np.einsum("iqc,jqc,q->ij", grads, grads, w)
            self.kinds[int(kind)] = KindData(shapes.coeffs, off, w, vals, grads, K)
        self.interface = {}
        for e in self.classification.interface_elements:
            e = int(e)
            el = self.mesh.element(e)
            try:
                cut = compute_cut(el, self.curve, self.partition_mode, self.flux_mode)
                shapes = standard_shapes(el, self.family)
                minus, plus, c0 = ife_coefficients(cut, shapes, self.beta)
            except Exception as exc:
                raise AssemblyError(f"shape construction failed on element {e}: {exc}") from exc
            self.interface[e] = InterfaceData(cut, shapes, minus, plus, c0, interface_rules(cut, self.order))

    @property
    def n_dof(self) -> int:
        return self.mesh.n_edges

    def beta_of(self, side: int) -> float:
        return self.beta[0] if side == MINUS else self.beta[1]

    def noninterface_elements(self, kind: int) -> np.ndarray:
        es = self.classification.element_side
        return np.flatnonzero((self.mesh.element_kind == kind) & (es != 0))

    def local_coefficients(self, dofs: np.ndarray, e: int):
        """(minus, plus) coefficient vectors of the discrete function on element ``e``."""
        local = np.asarray(dofs)[self.mesh.element_edges[e]]
        if e in self.interface:
            d = self.interface[e]
            return local @ d.minus, local @ d.plus
        c = local @ self.kinds[int(self.mesh.element_kind[e])].coeffs
        return c, c

    def evaluate(self, dofs: np.ndarray, e: int, X) -> np.ndarray:
        """Values of the discrete function at points ``X`` inside element ``e``."""
        X = np.asarray(X, dtype=float)
        cm, cp = self.local_coefficients(dofs, e)
        center = self.mesh.element(e).center
        if e in self.interface:
            side = self.interface[e].cut.side_of(X)
        else:
            side = np.full(X.shape[:-1], self.classification.element_side[e])
        vm = eval_poly(cm, X, center, self.mesh.h)
        vp = eval_poly(cp, X, center, self.mesh.h)
        return np.where(side == MINUS, vm, vp)


@dataclass(eq=False)
class SparseSystem:
    """Symmetric system with Dirichlet DOFs eliminated (identity rows/columns)."""

    A: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: np.ndarray
    dirichlet_values: np.ndarray
    stiffness: sp.csr_matrix
    load: np.ndarray


def edge_averages(mesh: Mesh, func, edge_ids=None, order: int = 8, side=None) -> np.ndarray:
    """Gauss averages of ``func`` over straight, uncut edges."""
    ids = np.arange(mesh.n_edges) if edge_ids is None else np.asarray(edge_ids)
    x, w = gauss01(order)
    a = mesh.vertices[mesh.edges[ids, 0]]
    b = mesh.vertices[mesh.edges[ids, 1]]
    P = a[:, None, :] + x[None, :, None] * (b - a)[:, None, :]
    return func(P) @ w


def assemble(space: IFESpace, f, g) -> SparseSystem:
    """Stiffness matrix and load vector of ``-div(beta grad u) = f``, ``u = g`` on the boundary.

    ``f`` and ``g`` are callables of points (..., 2) or (minus, plus) pairs.
    """
    mesh = space.mesh
    fs = _sided(f)
    gs = _sided(g)
    rows, cols, vals = [], [], []
    load = np.zeros(space.n_dof)
    centers = mesh.centers
    eside = space.classification.element_side

    for kind, kd in space.kinds.items():
        els = space.noninterface_elements(kind)
        if not len(els):
            continue
        dofs = mesh.element_edges[els]
        betas = np.where(eside[els] == MINUS, space.beta[0], space.beta[1])
        n = kd.stiffness.shape[0]
        rows.append(np.repeat(dofs, n, axis=1).ravel())
        cols.append(np.tile(dofs, (1, n)).ravel())
        vals.append((betas[:, None, None] * kd.stiffness[None]).ravel())
        P = centers[els][:, None, :] + kd.offsets[None]
        fv = np.where(eside[els][:, None] == MINUS, fs[MINUS](P), fs[PLUS](P))
        np.add.at(load, dofs, (fv * kd.weights) @ kd.values.T)

    for e, d in space.interface.items():
        dofs = mesh.element_edges[e]
        n = len(dofs)
        K = np.zeros((n, n))
        F = np.zeros(n)
        for side in (MINUS, PLUS):
            pts, w = d.rules.side(side, space.partition_mode)
            C = d.piece(side)
            G = grad_poly(C, pts, d.shapes.center, d.shapes.scale)
            V = eval_poly(C, pts, d.shapes.center, d.shapes.scale)
            K += space.beta_of(side) * np.einsum("iqc,jqc,q->ij", G, G, w)
            F += V @ (fs[side](pts) * w)
        rows.append(np.repeat(dofs, n))
        cols.append(np.tile(dofs, n))
        vals.append(K.ravel())
        load[dofs] += F

    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(space.n_dof,) * 2
    ).tocsr()
    K.sum_duplicates()

    bd = np.flatnonzero(mesh.boundary)
    bside = space.classification.edge_side[bd]
    gvals = np.empty(len(bd))
    for side in (MINUS, PLUS):
        sel = bside == side
        if np.any(sel):
            gvals[sel] = edge_averages(mesh, gs[side], bd[sel], space.order)
    vside = space.classification.vertex_side
    x, w = gauss01(space.order)
    for k in np.flatnonzero(bside == 0):
        ia, ib = mesh.edges[bd[k]]
        a, b = mesh.vertices[ia], mesh.vertices[ib]
        P = _edge_root(space.curve, a, b, 1e-13 * mesh.h)
        s_cut = float(np.hypot(*(P - a)) / np.hypot(*(b - a)))
        sa = int(vside[ia])
        total = 0.0
        for side, lo, hi in ((sa, 0.0, s_cut), (-sa, s_cut, 1.0)):
            pts = a + (lo + (hi - lo) * x)[:, None] * (b - a)
            total += (hi - lo) * (gs[side](pts) @ w)
        gvals[k] = total

    u_d = np.zeros(space.n_dof)
    u_d[bd] = gvals
    rhs = load - K @ u_d
    rhs[bd] = gvals
    keep = np.ones(space.n_dof)
    keep[bd] = 0.0
    D = sp.diags(keep)
    A = (D @ K @ D + sp.diags(1.0 - keep)).tocsr()
    return SparseSystem(A=A, rhs=rhs, dirichlet=bd, dirichlet_values=gvals, stiffness=K, load=load)


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float


def solve(system: SparseSystem, rtol: float = 1e-12, maxiter: int | None = None, return_info: bool = False):
    """Jacobi-preconditioned conjugate gradients.

    Stops at relative residual ``rtol``; the iteration cap defaults to
    ``20 * sqrt(n_dof)``.  Raises :class:`NoConvergence` otherwise.
    """
    A, b = system.A, system.rhs
    n = A.shape[0]
    if maxiter is None:
        maxiter = int(20 * np.sqrt(n))
    diag = A.diagonal()
    M = sp.diags(1.0 / diag)
    count = [0]

    def tick(_):
        count[0] += 1

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros(n)
        return (x, SolveInfo(0, 0.0)) if return_info else x
    x, status = cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=tick)
    res = float(np.linalg.norm(b - A @ x) / bnorm)
    if status != 0:
        raise NoConvergence(f"CG did not converge in {maxiter} iterations (residual {res:.3e})", res)
    x[system.dirichlet] = system.dirichlet_values
    log.debug("CG converged in %d iterations, residual %.3e", count[0], res)
    return (x, SolveInfo(count[0], res)) if return_info else x
