"""Quadrature on straight elements, split edges and curved subelements.

A curved region is a closed CCW chain of straight segments and interface
arcs.  Polynomials are integrated through Green's theorem.  General smooth
integrands use the polygon obtained by replacing every arc with its chord,
fan-triangulated, plus a signed correction over the sliver between each
chord and its arc, parametrized by the ruled map

    X(s, t) = chord(s) + t * (arc(s) - chord(s)),   s, t in [0, 1].

The correction weights carry the sign of the Jacobian, so the rule is exact
in the limit of the 1D Gauss rules whichever way the arc bulges.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import CURVE, LINE, MINUS, PLUS, SPLIT, CutInfo, InterfaceCurve


class OpenBoundary(ValueError):
    pass


@lru_cache(maxsize=None)
def gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed n x n Gauss rule on the reference triangle (0,0), (1,0), (0,1)."""
    x, w = gauss01(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([u.ravel(), (v * (1.0 - u)).ravel()])
    return pts, (wu * wv * (1.0 - u)).ravel()


@lru_cache(maxsize=None)
def square_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on the unit square [0, 1]^2."""
    x, w = gauss01(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([u.ravel(), v.ravel()]), np.outer(w, w).ravel()


def triangle_points(P0, P1, P2, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Rule on a triangle; weights are signed by its orientation."""
    ref, w = triangle_rule(order)
    P0, P1, P2 = (np.asarray(p, dtype=float) for p in (P0, P1, P2))
    e1, e2 = P1 - P0, P2 - P0
    det = e1[0] * e2[1] - e1[1] * e2[0]
    return P0 + ref[:, :1] * e1 + ref[:, 1:] * e2, w * det


def element_offsets(vertices: np.ndarray, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Rule on a straight element, as offsets from its vertex centroid."""
    center = vertices.mean(axis=0)
    if len(vertices) == 4:
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        ref, w = square_rule(order)
        return lo + ref * (hi - lo) - center, w * np.prod(hi - lo)
    pts, w = triangle_points(*vertices, order=order)
    return pts - center, w


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    a: np.ndarray
    b: np.ndarray

    @property
    def start(self):
        return np.asarray(self.a, dtype=float)

    @property
    def end(self):
        return np.asarray(self.b, dtype=float)


@dataclass(frozen=True)
class Arc:
    """``curve.point(t0 + s * dt)`` for s in [0, 1]."""

    curve: InterfaceCurve
    t0: float
    dt: float

    @property
    def start(self):
        return np.asarray(self.curve.point(self.t0), dtype=float)

    @property
    def end(self):
        return np.asarray(self.curve.point(self.t0 + self.dt), dtype=float)

    def at(self, s):
        return self.curve.point(self.t0 + np.asarray(s) * self.dt)

    def velocity(self, s):
        return self.dt * self.curve.tangent(self.t0 + np.asarray(s) * self.dt)


@dataclass(frozen=True)
class Region:
    pieces: tuple

    def __post_init__(self):
        n = len(self.pieces)
        if n < 2:
            raise OpenBoundary("a region needs at least two boundary pieces")
        scale = max(np.hypot(*(p.end - p.start)) for p in self.pieces)
        for i, p in enumerate(self.pieces):
            q = self.pieces[(i + 1) % n]
            if np.hypot(*(p.end - q.start)) > 1e-12 * max(scale, 1.0):
                raise OpenBoundary(f"boundary piece {i} does not meet piece {(i + 1) % n}")
        if region_area(self) <= 0.0:
            raise OpenBoundary("region boundary must be counterclockwise with positive area")

    @property
    def corners(self) -> np.ndarray:
        return np.array([p.start for p in self.pieces])


def _adaptive_arc(fn, tol: float = 1e-12, max_panels: int = 1024) -> float:
    """Composite 7-point Gauss of ``fn(s)`` over [0, 1], doubling panels."""
    x, w = gauss01(7)

    def composite(panels):
        edges = np.linspace(0.0, 1.0, panels + 1)
        s = (edges[:-1, None] + x[None, :] / panels).ravel()
        return float(np.sum(fn(s) * np.tile(w, panels)) / panels)

    panels = 1
    prev = composite(panels)
    while panels < max_panels:
        panels *= 2
        cur = composite(panels)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    return prev


def region_area(region: Region) -> float:
    """Signed area via Green's theorem, ``1/2 * closed integral of (x dy - y dx)``."""
    total = 0.0
    for p in region.pieces:
        if isinstance(p, Segment):
            a, b = p.start, p.end
            total += 0.5 * (a[0] * b[1] - a[1] * b[0])
        else:
            def f(s, p=p):
                X, dX = p.at(s), p.velocity(s)
                return 0.5 * (X[:, 0] * dX[:, 1] - X[:, 1] * dX[:, 0])

            total += _adaptive_arc(f)
    return total


def as_monomial_array(coeffs) -> np.ndarray:
    """``C[a, b]`` coefficients of ``xi^a eta^b``; basis vectors are converted."""
    c = np.asarray(coeffs, dtype=float)
    if c.ndim == 2:
        return c
    C = np.zeros((3, 3))
    C[0, 0], C[1, 0], C[0, 1] = c[0], c[1], c[2]
    if len(c) == 4:
        C[2, 0], C[0, 2] = c[3], -c[3]
    return C


def poly_mul(A, B) -> np.ndarray:
    A, B = as_monomial_array(A), as_monomial_array(B)
    out = np.zeros((A.shape[0] + B.shape[0] - 1, A.shape[1] + B.shape[1] - 1))
    for i, j in zip(*np.nonzero(A)):
        out[i : i + B.shape[0], j : j + B.shape[1]] += A[i, j] * B
    return out


def _eval_monomials(C, xi, eta):
    return np.polynomial.polynomial.polyval2d(xi, eta, C)


def integrate_poly_region(region: Region, coeffs, center=(0.0, 0.0), scale: float = 1.0) -> float:
    """Integral of a polynomial (degree <= 4) over ``region`` by Green's theorem.

    ``coeffs`` is either a basis coefficient vector or a ``C[a, b]`` array in
    the local variables ``xi = (x - cx)/scale``, ``eta = (y - cy)/scale``.
    The area integral becomes the boundary integral of ``P d(eta)`` with
    ``P = integral of p d(xi)``.
    """
    C = as_monomial_array(coeffs)
    nz = np.argwhere(C != 0.0)
    if nz.size and nz.sum(axis=1).max() > 4:
        raise ValueError("polynomial degree above 4")
    P = np.zeros((C.shape[0] + 1, C.shape[1]))
    P[1:, :] = C / np.arange(1, C.shape[0] + 1)[:, None]
    cx, cy = center
    x4, w4 = gauss01(4)
    total = 0.0
    for p in region.pieces:
        if isinstance(p, Segment):
            a = (p.start - center) / scale
            b = (p.end - center) / scale
            X = a + x4[:, None] * (b - a)
            total += float(np.sum(_eval_monomials(P, X[:, 0], X[:, 1]) * w4)) * (b[1] - a[1])
        else:
            def f(s, p=p):
                X, dX = p.at(s), p.velocity(s)
                return _eval_monomials(P, (X[:, 0] - cx) / scale, (X[:, 1] - cy) / scale) * dX[:, 1] / scale

            total += _adaptive_arc(f)
    return total * scale**2


def _polygon_rule(points: np.ndarray, order: int):
    pts, wts = [], []
    for k in range(1, len(points) - 1):
        p, w = triangle_points(points[0], points[k], points[k + 1], order)
        pts.append(p)
        wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


def _arc_correction(arc: Arc, order: int):
    """Signed rule for (region bounded by the arc) minus (same with the chord)."""
    A, B = arc.start, arc.end
    ref, w = square_rule(order)
    s, t = ref[:, 0], ref[:, 1]
    chord = A + s[:, None] * (B - A)
    curve = arc.at(s)
    X = chord + t[:, None] * (curve - chord)
    dXs = (1.0 - t)[:, None] * (B - A) + t[:, None] * arc.velocity(s)
    dXt = curve - chord
    J = dXs[:, 0] * dXt[:, 1] - dXs[:, 1] * dXt[:, 0]
    return X, -w * J


def region_quadrature(region: Region, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Points and (possibly signed) weights integrating smooth functions on ``region``."""
    pts, wts = _polygon_rule(region.corners, order)
    pts, wts = [pts], [wts]
    for p in region.pieces:
        if isinstance(p, Arc):
            X, w = _arc_correction(p, order)
            pts.append(X)
            wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


# ---------------------------------------------------------------------------
# interface elements
# ---------------------------------------------------------------------------


def _interface_arc(cut: CutInfo, start: np.ndarray) -> Arc:
    tD, dt = cut.arc
    if np.array_equal(start, cut.D):
        return Arc(cut.curve, tD, dt)
    return Arc(cut.curve, tD + dt, -dt)


def split_element(cut: CutInfo, partition_mode: str | None = None) -> tuple[Region, Region]:
    """Minus and plus subelements, divided by the arc (curve) or the chord (line)."""
    mode = partition_mode or cut.partition_mode
    V = cut.element.vertices
    k = len(V)
    out = []
    for side in (MINUS, PLUS):
        chain = []  # (point, is_cut_point)
        for j in range(k):
            if cut.vertex_sides[j] == side:
                chain.append((V[j], False))
            if cut.edge_classes[j] == SPLIT:
                chain.append((cut.split_points[j], True))
        pieces = []
        n = len(chain)
        for i in range(n):
            (p, pc), (q, qc) = chain[i], chain[(i + 1) % n]
            if pc and qc and mode == CURVE:
                pieces.append(_interface_arc(cut, p))
            else:
                pieces.append(Segment(p, q))
        out.append(Region(tuple(pieces)))
    return out[0], out[1]


@dataclass(frozen=True, eq=False)
class InterfaceRules:
    """Quadrature for an interface element.

    ``minus_line`` and ``plus_line`` integrate over the subelements cut by the
    chord; ``sliver`` integrates ``chi(T-_curve) - chi(T-_line)``, i.e. it
    adds the part of the curved minus subelement beyond the chord and removes
    the part of the line minus subelement beyond the arc.
    """

    minus_line: tuple[np.ndarray, np.ndarray]
    plus_line: tuple[np.ndarray, np.ndarray]
    sliver: tuple[np.ndarray, np.ndarray]

    def side(self, side: int, partition_mode: str) -> tuple[np.ndarray, np.ndarray]:
        """Rule for the subelement of ``side`` under the given partition."""
        base = self.minus_line if side == MINUS else self.plus_line
        if partition_mode == LINE:
            return base
        sp, sw = self.sliver
        sign = 1.0 if side == MINUS else -1.0
        return np.vstack([base[0], sp]), np.concatenate([base[1], sign * sw])


def interface_rules(cut: CutInfo, order: int = 8) -> InterfaceRules:
    rm, rp = split_element(cut, LINE)
    cm, _ = split_element(cut, CURVE)
    arc = next(p for p in cm.pieces if isinstance(p, Arc))
    return InterfaceRules(
        minus_line=_polygon_rule(rm.corners, order),
        plus_line=_polygon_rule(rp.corners, order),
        sliver=_arc_correction(arc, order),
    )


def integrate_edge_split(a, b, funcs, side_a: int, split=None, order: int = 8) -> float:
    """Integral along ``a -> b`` of a function given per side.

    ``funcs`` maps MINUS/PLUS to vectorized callables of points (N, 2).  If
    ``split`` is given the segment ``a -> split`` is on ``side_a`` and the rest
    on the other side.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, w = gauss01(order)
    pieces = [(a, b, side_a)] if split is None else [(a, np.asarray(split), side_a), (np.asarray(split), b, -side_a)]
    total = 0.0
    for p, q, s in pieces:
        length = np.hypot(*(q - p))
        if length == 0.0:
            continue
        X = p + x[:, None] * (q - p)
        total += float(np.sum(funcs[s](X) * w)) * length
    return total
