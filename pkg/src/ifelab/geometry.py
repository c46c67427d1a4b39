"""Cartesian meshes, interface curves and per-element cut geometry.

Sign convention used throughout the package: the minus subdomain is
``{level_set < 0}`` and every normal (curve normal, chord normal) points
from the minus side toward the plus side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

MINUS = -1
PLUS = 1
SPLIT = 0

RECTANGULAR = "rectangular"
TRIANGULAR = "triangular"

CURVE = "curve"
LINE = "line"
CURVE_MIDPOINT = "curve_midpoint"
LINE_MIDPOINT = "line_midpoint"

# element kinds; all elements of one kind are translates of each other
KIND_RECT = 0
KIND_TRI_LOWER = 1
KIND_TRI_UPPER = 2


class HypothesisViolation(ValueError):
    """The interface/mesh configuration breaks the admissibility assumptions."""


class RootFindFailure(RuntimeError):
    pass


def side_name(side: int) -> str:
    return "minus" if side == MINUS else "plus"


# ---------------------------------------------------------------------------
# interface curves
# ---------------------------------------------------------------------------


class InterfaceCurve:
    """Interface described both as a level set and as a parametrized curve.

    Subclasses provide ``level_set``, ``gradient``, ``point``, ``tangent`` and
    ``locate``.  ``period`` is the parameter period of a closed curve, or
    ``None`` for an open one.
    """

    period: float | None = None
    curvature_bound: float = 0.0

    def level_set(self, x, y):
        raise NotImplementedError

    def gradient(self, x, y):
        raise NotImplementedError

    def point(self, t):
        raise NotImplementedError

    def tangent(self, t):
        """Derivative of :meth:`point` with respect to the parameter."""
        raise NotImplementedError

    def locate(self, X) -> float:
        """Parameter of a point lying on the curve."""
        raise NotImplementedError

    def normal_at(self, X) -> np.ndarray:
        g = np.array(self.gradient(X[0], X[1]), dtype=float)
        return g / np.hypot(g[0], g[1])

    def side(self, X) -> np.ndarray:
        """Side (MINUS/PLUS) of points ``X`` of shape (..., 2); ties go to PLUS."""
        X = np.asarray(X, dtype=float)
        return np.where(self.level_set(X[..., 0], X[..., 1]) < 0.0, MINUS, PLUS)

    def arc_delta(self, t0: float, t1: float) -> float:
        """Signed parameter increment of the short arc from ``t0`` to ``t1``."""
        dt = t1 - t0
        if self.period is not None:
            p = self.period
            dt = (dt + 0.5 * p) % p - 0.5 * p
        return dt

    def edge_crossings(self, a: np.ndarray, b: np.ndarray, samples: int = 17) -> np.ndarray:
        """Number of sign changes of the level set along segments ``a -> b``.

        Generic version based on sampling; subclasses may count exactly.
        """
        s = np.linspace(0.0, 1.0, samples)
        P = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        v = self.level_set(P[..., 0], P[..., 1])
        sg = np.where(v < 0.0, -1, 1)
        return np.count_nonzero(np.diff(sg, axis=1), axis=1)


@dataclass(frozen=True)
class Circle(InterfaceCurve):
    """Circle ``|X - center| = radius``; the disk is the minus side."""

    radius: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def period(self):
        return 2.0 * math.pi

    @property
    def curvature_bound(self):
        return 1.0 / self.radius

    def level_set(self, x, y):
        cx, cy = self.center
        return (x - cx) ** 2 + (y - cy) ** 2 - self.radius**2

    def gradient(self, x, y):
        cx, cy = self.center
        return 2.0 * (x - cx), 2.0 * (y - cy)

    def point(self, t):
        t = np.asarray(t, dtype=float)
        cx, cy = self.center
        return np.stack([cx + self.radius * np.cos(t), cy + self.radius * np.sin(t)], axis=-1)

    def tangent(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([-self.radius * np.sin(t), self.radius * np.cos(t)], axis=-1)

    def locate(self, X) -> float:
        return math.atan2(X[1] - self.center[1], X[0] - self.center[0])

    def normal_at(self, X) -> np.ndarray:
        d = np.asarray(X, dtype=float) - np.asarray(self.center)
        return d / np.hypot(d[0], d[1])

    def edge_crossings(self, a, b, samples=None):
        # exact count of roots of |a + s(b-a) - c|^2 = r^2 with s in (0, 1]
        c = np.asarray(self.center)
        d = b - a
        f = a - c
        A = np.einsum("ij,ij->i", d, d)
        B = 2.0 * np.einsum("ij,ij->i", f, d)
        C = np.einsum("ij,ij->i", f, f) - self.radius**2
        disc = B * B - 4.0 * A * C
        sq = np.sqrt(np.maximum(disc, 0.0))
        count = np.zeros(len(a), dtype=int)
        for root in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
            count += (disc > 0) & (root > 0.0) & (root <= 1.0)
        return count


@dataclass(frozen=True)
class Line(InterfaceCurve):
    """Straight interface ``normal . (X - origin) = 0``; plus side along ``normal``."""

    origin: tuple[float, float]
    normal: tuple[float, float]

    def _unit(self):
        n = np.asarray(self.normal, dtype=float)
        return n / np.hypot(n[0], n[1])

    def level_set(self, x, y):
        n = self._unit()
        return n[0] * (x - self.origin[0]) + n[1] * (y - self.origin[1])

    def gradient(self, x, y):
        n = self._unit()
        return n[0] + 0.0 * np.asarray(x), n[1] + 0.0 * np.asarray(y)

    def point(self, t):
        t = np.asarray(t, dtype=float)
        n = self._unit()
        return np.stack([self.origin[0] - t * n[1], self.origin[1] + t * n[0]], axis=-1)

    def tangent(self, t):
        t = np.asarray(t, dtype=float)
        n = self._unit()
        return np.stack([-n[1] + 0.0 * t, n[0] + 0.0 * t], axis=-1)

    def locate(self, X) -> float:
        n = self._unit()
        return float(-n[1] * (X[0] - self.origin[0]) + n[0] * (X[1] - self.origin[1]))

    def normal_at(self, X):
        return self._unit()

    def edge_crossings(self, a, b, samples=None):
        va = self.level_set(a[:, 0], a[:, 1])
        vb = self.level_set(b[:, 0], b[:, 1])
        return ((va < 0) != (vb < 0)).astype(int)


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Element:
    """Light view of one element: CCW vertices, edge ids, local frame."""

    index: int
    kind: int
    vertices: np.ndarray
    edge_ids: np.ndarray
    center: np.ndarray
    scale: float

    @property
    def is_rectangle(self) -> bool:
        return self.kind == KIND_RECT

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)

    def edge(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints of local edge ``j`` (from vertex ``j`` to vertex ``j+1``)."""
        k = len(self.vertices)
        return self.vertices[j], self.vertices[(j + 1) % k]

    def edge_lengths(self) -> np.ndarray:
        return np.array([np.hypot(*(b - a)) for a, b in (self.edge(j) for j in range(self.n_edges))])

    def edge_midpoints(self) -> np.ndarray:
        return np.array([0.5 * (a + b) for a, b in (self.edge(j) for j in range(self.n_edges))])

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform Cartesian mesh of an axis-aligned rectangle.

    ``elements`` holds CCW vertex ids; local edge ``j`` of an element joins
    local vertices ``j`` and ``j+1`` and its global id is ``element_edges[e, j]``.
    ``h`` is the cell leg length (diagonals of triangular meshes are longer).
    """

    corner: tuple[float, float]
    lengths: tuple[float, float]
    n_per_side: int
    cell_type: str
    vertices: np.ndarray
    elements: np.ndarray
    element_edges: np.ndarray
    element_kind: np.ndarray
    edges: np.ndarray
    boundary: np.ndarray
    h: float
    cell_size: tuple[float, float]

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def centers(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    def element(self, e: int) -> Element:
        verts = self.vertices[self.elements[e]]
        return Element(
            index=int(e),
            kind=int(self.element_kind[e]),
            vertices=verts,
            edge_ids=self.element_edges[e],
            center=verts.mean(axis=0),
            scale=self.h,
        )


def build_mesh(
    domain: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0),
    n_per_side: int = 8,
    cell_type: str = RECTANGULAR,
) -> Mesh:
    """Uniform mesh of ``[x0, x1] x [y0, y1]`` with ``n_per_side`` cells per side.

    Triangular meshes split every cell along its lower-left to upper-right
    diagonal.
    """
    if n_per_side < 2:
        raise ValueError("n_per_side must be at least 2")
    if cell_type not in (RECTANGULAR, TRIANGULAR):
        raise ValueError(f"unknown cell type {cell_type!r}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate domain")
    n = int(n_per_side)
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)  # X[j, i]
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    n_h = n * (n + 1)
    n_v = (n + 1) * n

    def hid(i, j):  # (i, j) -> (i+1, j)
        return j * n + i

    def vtid(i, j):  # (i, j) -> (i, j+1)
        return n_h + j * (n + 1) + i

    def did(i, j):  # (i, j) -> (i+1, j+1)
        return n_h + n_v + j * n + i

    ii, jj = np.meshgrid(np.arange(n), np.arange(n))
    ii, jj = ii.ravel(), jj.ravel()

    eh_i, eh_j = np.meshgrid(np.arange(n), np.arange(n + 1))
    h_edges = np.column_stack([vid(eh_i.ravel(), eh_j.ravel()), vid(eh_i.ravel() + 1, eh_j.ravel())])
    ev_i, ev_j = np.meshgrid(np.arange(n + 1), np.arange(n))
    v_edges = np.column_stack([vid(ev_i.ravel(), ev_j.ravel()), vid(ev_i.ravel(), ev_j.ravel() + 1)])
    edge_list = [h_edges, v_edges]

    if cell_type == RECTANGULAR:
        elements = np.column_stack([vid(ii, jj), vid(ii + 1, jj), vid(ii + 1, jj + 1), vid(ii, jj + 1)])
        element_edges = np.column_stack([hid(ii, jj), vtid(ii + 1, jj), hid(ii, jj + 1), vtid(ii, jj)])
        kind = np.full(n * n, KIND_RECT, dtype=np.int8)
    else:
        edge_list.append(np.column_stack([vid(ii, jj), vid(ii + 1, jj + 1)]))
        lower = np.column_stack([vid(ii, jj), vid(ii + 1, jj), vid(ii + 1, jj + 1)])
        upper = np.column_stack([vid(ii, jj), vid(ii + 1, jj + 1), vid(ii, jj + 1)])
        lower_e = np.column_stack([hid(ii, jj), vtid(ii + 1, jj), did(ii, jj)])
        upper_e = np.column_stack([did(ii, jj), hid(ii, jj + 1), vtid(ii, jj)])
        elements = np.empty((2 * n * n, 3), dtype=np.int64)
        element_edges = np.empty((2 * n * n, 3), dtype=np.int64)
        elements[0::2], elements[1::2] = lower, upper
        element_edges[0::2], element_edges[1::2] = lower_e, upper_e
        kind = np.tile(np.array([KIND_TRI_LOWER, KIND_TRI_UPPER], dtype=np.int8), n * n)

    edges = np.vstack(edge_list)
    counts = np.bincount(element_edges.ravel(), minlength=len(edges))
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    return Mesh(
        corner=(x0, y0),
        lengths=(x1 - x0, y1 - y0),
        n_per_side=n,
        cell_type=cell_type,
        vertices=vertices,
        elements=elements.astype(np.int64),
        element_edges=element_edges.astype(np.int64),
        element_kind=kind,
        edges=edges.astype(np.int64),
        boundary=counts == 1,
        h=max(hx, hy),
        cell_size=(hx, hy),
    )


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Classification:
    """Side labels: MINUS/PLUS for non-interface entities, SPLIT (0) otherwise."""

    element_side: np.ndarray
    edge_side: np.ndarray
    vertex_side: np.ndarray

    @property
    def interface_elements(self) -> np.ndarray:
        return np.flatnonzero(self.element_side == SPLIT)

    @property
    def interface_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_side == SPLIT)


def classify_elements(mesh: Mesh, curve: InterfaceCurve) -> Classification:
    """Split elements and edges into interface / non-interface sets.

    Raises :class:`HypothesisViolation` when the curve passes through a mesh
    vertex, crosses an edge more than once, or meets an element boundary in
    a number of points other than 0 or 2.
    """
    V = mesh.vertices
    ls = curve.level_set(V[:, 0], V[:, 1])
    gx, gy = curve.gradient(V[:, 0], V[:, 1])
    gnorm = np.hypot(gx, gy)
    dist = np.abs(ls) / np.where(gnorm > 0, gnorm, 1.0)
    touching = np.flatnonzero(dist <= 1e-12 * mesh.h)
    if touching.size:
        raise HypothesisViolation(f"interface passes through mesh vertex {int(touching[0])}")
    vside = np.where(ls < 0.0, MINUS, PLUS).astype(np.int8)

    a = V[mesh.edges[:, 0]]
    b = V[mesh.edges[:, 1]]
    crossings = curve.edge_crossings(a, b)
    bad = np.flatnonzero(crossings > 1)
    if bad.size:
        raise HypothesisViolation(f"interface crosses edge {int(bad[0])} more than once")
    edge_side = np.where(crossings == 1, SPLIT, vside[mesh.edges[:, 0]]).astype(np.int8)

    cut_per_element = np.count_nonzero(edge_side[mesh.element_edges] == SPLIT, axis=1)
    wrong = np.flatnonzero((cut_per_element != 0) & (cut_per_element != 2))
    if wrong.size:
        e = int(wrong[0])
        raise HypothesisViolation(f"element {e} has {int(cut_per_element[e])} cut edges, expected 0 or 2")

    c = mesh.centers
    cside = np.where(curve.level_set(c[:, 0], c[:, 1]) < 0.0, MINUS, PLUS).astype(np.int8)
    element_side = np.where(cut_per_element == 2, SPLIT, cside).astype(np.int8)
    nonint = cut_per_element == 0
    first_vertex_side = vside[mesh.elements[:, 0]]
    enclosed = np.flatnonzero(nonint & (first_vertex_side != cside))
    if enclosed.size:
        raise HypothesisViolation(f"interface component enclosed in element {int(enclosed[0])}")
    return Classification(element_side=element_side, edge_side=edge_side, vertex_side=vside)


# ---------------------------------------------------------------------------
# cut geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CutInfo:
    """Geometry of the interface inside one interface element.

    ``edge_classes[j]`` is MINUS/PLUS for an uncut local edge and SPLIT for a
    cut one, in which case ``split_points[j]`` is its intersection with the
    curve.  ``arc`` is ``(t_D, dt)``: the piece of curve inside the element is
    ``curve.point(t_D + s*dt)`` for ``s`` in [0, 1], running from D to E.
    """

    element: Element
    curve: InterfaceCurve
    D: np.ndarray
    E: np.ndarray
    nbar: np.ndarray
    F: np.ndarray
    vF: np.ndarray
    edge_classes: tuple[int, ...]
    split_points: dict[int, np.ndarray]
    vertex_sides: tuple[int, ...]
    arc: tuple[float, float]
    partition_mode: str = CURVE
    flux_mode: str = CURVE_MIDPOINT
    extra: dict = field(default_factory=dict)

    @property
    def element_id(self) -> int:
        return self.element.index

    def L(self, X) -> np.ndarray:
        """Signed distance-like linear function ``nbar . (X - D)``."""
        X = np.asarray(X, dtype=float)
        return (X[..., 0] - self.D[0]) * self.nbar[0] + (X[..., 1] - self.D[1]) * self.nbar[1]

    def side_of(self, X, mode: str | None = None) -> np.ndarray:
        """Subelement side of points ``X`` under the given partition; ties to PLUS."""
        mode = mode or self.partition_mode
        if mode == CURVE:
            return self.curve.side(X)
        return np.where(self.L(X) < 0.0, MINUS, PLUS)

    def edge_piece(self, j: int, side: int) -> tuple[np.ndarray, np.ndarray] | None:
        """The part of local edge ``j`` on ``side`` as a segment, or None."""
        a, b = self.element.edge(j)
        cls = self.edge_classes[j]
        if cls != SPLIT:
            return (a, b) if cls == side else None
        P = self.split_points[j]
        if self.vertex_sides[j] == side:
            return a, P
        return P, b

    def indices(self, side: int) -> tuple[list[int], list[int]]:
        """(edges touching ``side``, edges entirely on the other side)."""
        touching = [j for j, c in enumerate(self.edge_classes) if c in (side, SPLIT)]
        other = [j for j, c in enumerate(self.edge_classes) if c == -side]
        return touching, other


def _edge_root(curve: InterfaceCurve, a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    d = b - a

    def f(s):
        p = a + s * d
        return float(curve.level_set(p[0], p[1]))

    fa, fb = f(0.0), f(1.0)
    if fa == 0.0 or fb == 0.0 or (fa < 0) == (fb < 0):
        raise RootFindFailure("no sign change bracketed on cut edge")
    s = brentq(f, 0.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    # one Newton polish step
    p = a + s * d
    g = np.array(curve.gradient(p[0], p[1]), dtype=float)
    slope = float(g @ d)
    if slope != 0.0:
        s_new = s - f(s) / slope
        if 0.0 <= s_new <= 1.0 and abs(f(s_new)) <= abs(f(s)):
            s = s_new
    p = a + s * d
    gn = np.hypot(*curve.gradient(p[0], p[1]))
    if abs(f(s)) / max(gn, 1e-300) > tol:
        raise RootFindFailure(f"root residual {abs(f(s)):.3e} above tolerance")
    return p


def compute_cut(
    element: Element,
    curve: InterfaceCurve,
    partition_mode: str = CURVE,
    flux_mode: str = CURVE_MIDPOINT,
) -> CutInfo:
    """Intersection points, chord normal and flux point of an interface element."""
    if partition_mode not in (CURVE, LINE):
        raise ValueError(f"unknown partition mode {partition_mode!r}")
    if flux_mode not in (CURVE_MIDPOINT, LINE_MIDPOINT):
        raise ValueError(f"unknown flux mode {flux_mode!r}")
    V = element.vertices
    k = len(V)
    vs = curve.side(V)
    h = element.scale
    classes, splits, points = [], {}, []
    for j in range(k):
        a, b = V[j], V[(j + 1) % k]
        if vs[j] == vs[(j + 1) % k]:
            classes.append(int(vs[j]))
            continue
        P = _edge_root(curve, a, b, 1e-13 * h)
        classes.append(SPLIT)
        splits[j] = P
        points.append(P)
    if len(points) != 2:
        raise HypothesisViolation(
            f"element {element.index}: interface meets the boundary at {len(points)} edges"
        )
    D, E = points
    chord = E - D
    length = np.hypot(*chord)
    if length <= 0:
        raise HypothesisViolation(f"element {element.index}: coincident intersection points")
    nbar = np.array([-chord[1], chord[0]]) / length
    # orient nbar toward the plus side using the vertex farthest from the chord
    offs = (V - D) @ nbar
    far = int(np.argmax(np.abs(offs)))
    if np.sign(offs[far]) != vs[far]:
        nbar = -nbar

    tD = curve.locate(D)
    tE = curve.locate(E)
    dt = curve.arc_delta(tD, tE)
    if flux_mode == CURVE_MIDPOINT:
        F = np.asarray(curve.point(tD + 0.5 * dt), dtype=float)
        vF = np.asarray(curve.normal_at(F), dtype=float)
        vF = vF / np.hypot(*vF)
        if not _inside_convex(V, F, 1e-9 * h):
            raise HypothesisViolation(f"element {element.index}: arc midpoint outside the element")
    else:
        F = 0.5 * (D + E)
        vF = nbar.copy()
    return CutInfo(
        element=element,
        curve=curve,
        D=D,
        E=E,
        nbar=nbar,
        F=F,
        vF=vF,
        edge_classes=tuple(classes),
        split_points=splits,
        vertex_sides=tuple(int(s) for s in vs),
        arc=(tD, dt),
        partition_mode=partition_mode,
        flux_mode=flux_mode,
    )


def _inside_convex(V: np.ndarray, X: np.ndarray, tol: float) -> bool:
    k = len(V)
    for j in range(k):
        a, b = V[j], V[(j + 1) % k]
        cross = (b[0] - a[0]) * (X[1] - a[1]) - (b[1] - a[1]) * (X[0] - a[0])
        if cross < -tol * np.hypot(*(b - a)):
            return False
    return True
