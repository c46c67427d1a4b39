"""Interpolation, error norms and convergence studies on the circle benchmark."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.integrate import quad as scalar_quad

from .geometry import (
    CURVE,
    CURVE_MIDPOINT,
    LINE,
    LINE_MIDPOINT,
    MINUS,
    PLUS,
    RECTANGULAR,
    TRIANGULAR,
    Circle,
    InterfaceCurve,
    Mesh,
    _edge_root,
    build_mesh,
)
from .basis import CR, RQ1, eval_poly, grad_poly
from .system import IFESpace, assemble, edge_averages, solve

log = logging.getLogger(__name__)

INTERP = "interp"
SOLVE = "solve"
BOTH = "both"

# how exact-solution branches meet IFE branches inside interface elements
PAIR_CURVE = "curve"  # u^s with phi^s on the curved subelement T^s
PAIR_POINTWISE = "pointwise"  # u with whatever branch the IFE function uses at x


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """Piecewise exact solution; every callable takes points of shape (..., 2)."""

    u_minus: object
    u_plus: object
    grad_minus: object
    grad_plus: object
    f: object
    curve: InterfaceCurve
    beta: tuple[float, float]
    alpha: float = 5.0
    r0: float = math.pi / 6.28

    def u(self, side: int):
        return self.u_minus if side == MINUS else self.u_plus

    def grad(self, side: int):
        return self.grad_minus if side == MINUS else self.grad_plus

    def g(self, X) -> np.ndarray:
        """Boundary trace; picks the branch by the side of each point."""
        X = np.asarray(X, dtype=float)
        side = self.curve.side(X)
        return np.where(side == MINUS, self.u_minus(X), self.u_plus(X))

    def __call__(self, X) -> np.ndarray:
        return self.g(X)


def circle_benchmark(
    beta_minus: float = 1.0,
    beta_plus: float = 1e4,
    r0: float = math.pi / 6.28,
    alpha: float = 5.0,
) -> ExactSolution:
    """u = r^alpha / beta^- inside the circle, r^alpha / beta^+ + const outside.

    The constant makes u continuous across r = r0; the flux is continuous
    because beta * du/dr = alpha r^(alpha-1) on both sides, and
    f = -alpha^2 r^(alpha-2) everywhere.
    """
    bm, bp = float(beta_minus), float(beta_plus)
    shift = (1.0 / bm - 1.0 / bp) * r0**alpha

    def radius(X):
        X = np.asarray(X, dtype=float)
        return np.hypot(X[..., 0], X[..., 1])

    def grad_r_alpha(X):
        X = np.asarray(X, dtype=float)
        r2 = X[..., 0] ** 2 + X[..., 1] ** 2
        fac = alpha * r2 ** ((alpha - 2.0) / 2.0)
        return X * fac[..., None]

    def f(X):
        return -(alpha**2) * radius(X) ** (alpha - 2.0)

    return ExactSolution(
        u_minus=lambda X: radius(X) ** alpha / bm,
        u_plus=lambda X: radius(X) ** alpha / bp + shift,
        grad_minus=lambda X: grad_r_alpha(X) / bm,
        grad_plus=lambda X: grad_r_alpha(X) / bp,
        f=f,
        curve=Circle(r0),
        beta=(bm, bp),
        alpha=alpha,
        r0=r0,
    )


def _cut_edge_average(u: ExactSolution, curve: InterfaceCurve, a, b, side_a: int, tol: float) -> float:
    P = _edge_root(curve, a, b, tol)
    d = b - a
    length = float(np.hypot(*d))
    s_cut = float(np.hypot(*(P - a)) / length)

    def piece(fn, lo, hi):
        if hi <= lo:
            return 0.0
        val, _ = scalar_quad(lambda s: float(fn(a + s * d)), lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
        return val

    return piece(u.u(side_a), 0.0, s_cut) + piece(u.u(-side_a), s_cut, 1.0)


def interpolate(space: IFESpace, u: ExactSolution) -> np.ndarray:
    """Edge-average DOFs of ``u``; cut edges are integrated piecewise."""
    mesh, cls = space.mesh, space.classification
    dofs = np.empty(mesh.n_edges)
    for side in (MINUS, PLUS):
        ids = np.flatnonzero(cls.edge_side == side)
        if len(ids):
            dofs[ids] = edge_averages(mesh, u.u(side), ids, space.order)
    vside = cls.vertex_side
    for i in np.flatnonzero(cls.edge_side == 0):
        ia, ib = mesh.edges[i]
        a, b = mesh.vertices[ia], mesh.vertices[ib]
        dofs[i] = _cut_edge_average(u, space.curve, a, b, int(vside[ia]), 1e-13 * mesh.h)
    return dofs


@dataclass(frozen=True)
class ErrorNorms:
    l2: float
    h1: float

    def __iter__(self):
        return iter((self.l2, self.h1))


def error_norms(space: IFESpace, dofs: np.ndarray, u: ExactSolution, pairing: str = PAIR_CURVE) -> ErrorNorms:
    """L2 norm and H1 seminorm of ``u - u_h``.

    On interface elements the exact branch ``u^s`` is paired with the IFE
    branch ``phi^s`` over the curved subelement ``T^s`` (``pairing="curve"``).
    With ``pairing="pointwise"`` the IFE branch is chosen by the partition
    actually used to define the discrete function.
    """
    if pairing not in (PAIR_CURVE, PAIR_POINTWISE):
        raise ValueError(f"unknown pairing {pairing!r}")
    mesh = space.mesh
    dofs = np.asarray(dofs, dtype=float)
    eside = space.classification.element_side
    centers = mesh.centers
    l2 = h1 = 0.0

    for kind, kd in space.kinds.items():
        els = space.noninterface_elements(kind)
        if not len(els):
            continue
        P = centers[els][:, None, :] + kd.offsets[None]
        coef = dofs[mesh.element_edges[els]]  # (Ne, n)
        uh = coef @ kd.values
        guh = np.einsum("en,nqc->eqc", coef, kd.grads)
        minus = (eside[els] == MINUS)[:, None]
        uv = np.where(minus, u.u_minus(P), u.u_plus(P))
        gv = np.where(minus[..., None], u.grad_minus(P), u.grad_plus(P))
        l2 += float(np.sum((uv - uh) ** 2 * kd.weights))
        h1 += float(np.sum(np.sum((gv - guh) ** 2, axis=-1) * kd.weights))

    for e, d in space.interface.items():
        local = dofs[mesh.element_edges[e]]
        coef = {MINUS: local @ d.minus, PLUS: local @ d.plus}
        c, s = d.shapes.center, d.shapes.scale

        def dens(X, us, ps):
            ev = u.u(us)(X) - eval_poly(coef[ps], X, c, s)
            eg = u.grad(us)(X) - grad_poly(coef[ps], X, c, s)
            return ev**2, np.sum(eg**2, axis=-1)

        for side, (X, w) in ((MINUS, d.rules.minus_line), (PLUS, d.rules.plus_line)):
            a, b = dens(X, side, side)
            l2 += float(a @ w)
            h1 += float(b @ w)
        X, w = d.rules.sliver
        if not len(w):
            continue
        am, bm = dens(X, MINUS, MINUS)
        ap, bp = dens(X, PLUS, PLUS)
        if pairing == PAIR_POINTWISE and space.partition_mode == LINE:
            q = d.cut.side_of(X, LINE)
            # the IFE branch follows the chord, so the polygon pieces were already right
            am, bm = np.where(q == MINUS, am, dens(X, MINUS, PLUS)[0]), np.where(q == MINUS, bm, dens(X, MINUS, PLUS)[1])
            ap, bp = np.where(q == PLUS, ap, dens(X, PLUS, MINUS)[0]), np.where(q == PLUS, bp, dens(X, PLUS, MINUS)[1])
        l2 += float((am - ap) @ w)
        h1 += float((bm - bp) @ w)

    return ErrorNorms(math.sqrt(max(l2, 0.0)), math.sqrt(max(h1, 0.0)))


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

_MESH_ALIASES = {"rect": RECTANGULAR, RECTANGULAR: RECTANGULAR, "tri": TRIANGULAR, TRIANGULAR: TRIANGULAR}
_FLUX_ALIASES = {"curve-mid": CURVE_MIDPOINT, CURVE_MIDPOINT: CURVE_MIDPOINT, "line-mid": LINE_MIDPOINT, LINE_MIDPOINT: LINE_MIDPOINT}


@dataclass
class StudyConfig:
    mesh: str = "rect"
    family: str | None = None
    partition: str = CURVE
    flux: str = "curve-mid"
    beta_minus: float = 1.0
    beta_plus: float = 1e4
    levels: int = 4
    n0: int = 40
    mode: str = INTERP
    curve: str = "circle"
    r0: float = math.pi / 6.28
    domain: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)
    pairing: str = PAIR_CURVE

    def __post_init__(self):
        if self.mesh not in _MESH_ALIASES:
            raise ValueError(f"unknown mesh type {self.mesh!r}")
        if self.flux not in _FLUX_ALIASES:
            raise ValueError(f"unknown flux point {self.flux!r}")
        if self.partition not in (CURVE, LINE):
            raise ValueError(f"unknown partition {self.partition!r}")
        if self.mode not in (INTERP, SOLVE, BOTH):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.curve != "circle":
            raise ValueError(f"unsupported curve {self.curve!r}")
        if self.levels < 1 or self.n0 < 2:
            raise ValueError("need levels >= 1 and n0 >= 2")
        if self.beta_minus <= 0 or self.beta_plus <= 0:
            raise ValueError("coefficients must be positive")
        if self.family is not None:
            fam = self.family.upper()
            expected = RQ1 if self.cell_type == RECTANGULAR else CR
            if fam != expected:
                raise ValueError(f"family {self.family} does not fit a {self.mesh} mesh")

    @property
    def cell_type(self) -> str:
        return _MESH_ALIASES[self.mesh]

    @property
    def flux_mode(self) -> str:
        return _FLUX_ALIASES[self.flux]

    @property
    def sizes(self) -> list[int]:
        return [self.n0 * 2**k for k in range(self.levels)]

    @classmethod
    def from_mapping(cls, data: dict) -> "StudyConfig":
        """Build from string-valued settings (config files, CLI)."""
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, val in data.items():
            name = key.replace("-", "_")
            if name not in types:
                raise ValueError(f"unknown setting {key!r}")
            t = types[name]
            if isinstance(val, str):
                if "float" in t and "tuple" not in t:
                    val = float(val)
                elif t == "int":
                    val = int(val)
                elif "tuple" in t:
                    val = tuple(float(v) for v in val.replace(",", " ").split())
                elif val.lower() in ("none", ""):
                    val = None
            kw[name] = val
        return cls(**kw)


@dataclass
class StudyRow:
    n: int
    h: float
    l2_error: float
    h1_error: float
    l2_rate: float | None = None
    h1_rate: float | None = None


@dataclass
class StudyReport:
    mode: str
    config: StudyConfig
    rows: list[StudyRow] = field(default_factory=list)

    def l2_errors(self) -> np.ndarray:
        return np.array([r.l2_error for r in self.rows])

    def h1_errors(self) -> np.ndarray:
        return np.array([r.h1_error for r in self.rows])

    def add(self, row: StudyRow):
        if self.rows:
            prev = self.rows[-1]
            row.l2_rate = rate(prev.l2_error, row.l2_error)
            row.h1_rate = rate(prev.h1_error, row.h1_error)
        self.rows.append(row)

    def to_csv(self, path) -> None:
        write_csv(self, path)


def rate(coarse: float, fine: float) -> float:
    """Observed order between two meshes whose sizes differ by a factor of two."""
    return math.log2(coarse / fine)


CSV_HEADER = ["h", "l2_error", "l2_rate", "h1_error", "h1_rate"]


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.5e}"


def write_csv(report: StudyReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in report.rows:
            w.writerow([_fmt(r.h), _fmt(r.l2_error), _fmt(r.l2_rate), _fmt(r.h1_error), _fmt(r.h1_rate)])


class LevelFailure(RuntimeError):
    """Wraps a failure with the refinement level it happened on."""

    def __init__(self, n: int, cause: Exception):
        super().__init__(f"level n={n}: {cause}")
        self.n = n
        self.cause = cause


def build_space(cfg: StudyConfig, n: int, exact: ExactSolution) -> IFESpace:
    mesh = build_mesh(cfg.domain, n, cfg.cell_type)
    return IFESpace(mesh, exact.curve, exact.beta, cfg.family, cfg.partition, cfg.flux_mode)


def run_study(cfg: StudyConfig, exact: ExactSolution | None = None) -> dict[str, StudyReport]:
    """Run the configured levels; returns one report per mode ('interp'/'solve')."""
    if exact is None:
        exact = circle_benchmark(cfg.beta_minus, cfg.beta_plus, cfg.r0)
    modes = [INTERP, SOLVE] if cfg.mode == BOTH else [cfg.mode]
    reports = {m: StudyReport(m, cfg) for m in modes}
    width = cfg.domain[1] - cfg.domain[0]
    for n in cfg.sizes:
        t0 = time.perf_counter()
        try:
            space = build_space(cfg, n, exact)
            for m in modes:
                if m == INTERP:
                    dofs = interpolate(space, exact)
                else:
                    dofs = solve(assemble(space, exact.f, exact.g))
                err = error_norms(space, dofs, exact, cfg.pairing)
                reports[m].add(StudyRow(n, width / n, err.l2, err.h1))
        except Exception as exc:
            raise LevelFailure(n, exc) from exc
        log.info("n=%d done in %.2fs", n, time.perf_counter() - t0)
    return reports


def config_echo(cfg: StudyConfig) -> dict:
    return asdict(cfg)
