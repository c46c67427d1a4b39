import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_ife, gamma_delta_formula, make_element, random_cut

from ifelab.basis import edge_integral, eval_poly, grad_poly, standard_shapes
from ifelab.geometry import (
    CURVE,
    CURVE_MIDPOINT,
    KIND_RECT,
    KIND_TRI_LOWER,
    KIND_TRI_UPPER,
    LINE,
    LINE_MIDPOINT,
    MINUS,
    PLUS,
    RECTANGULAR,
    TRIANGULAR,
    Circle,
    Line,
    build_mesh,
    classify_elements,
    compute_cut,
)
from ifelab.ife import (
    NearSingular,
    SMSystem,
    build_sm_system,
    check_identities,
    curve_jump_matrix,
    ife_coefficients,
    identity_sample_points,
    ife_shape_functions,
    jump_matrices,
    line_jump_matrix,
    role_side,
    solve_sm,
)

KINDS = [KIND_RECT, KIND_TRI_LOWER, KIND_TRI_UPPER]
BENCH = Circle(math.pi / 6.28)
log_beta = st.floats(-4.0, 4.0).map(lambda x: 10.0**x)


def _piecewise_edge_average(cut, minus, plus, j):
    el = cut.element
    total = 0.0
    for side, coeffs in ((MINUS, minus), (PLUS, plus)):
        piece = cut.edge_piece(j, side)
        if piece is not None:
            total = total + edge_integral(coeffs, *piece, el.center, el.scale)
    return total / el.edge_lengths()[j]


def _draw(seed, kind, curved, partition=CURVE):
    flux = CURVE_MIDPOINT if partition == CURVE else LINE_MIDPOINT
    return random_cut(np.random.default_rng(seed), kind, curved=curved, flux_mode=flux, partition_mode=partition)


config = st.tuples(
    st.integers(0, 2**31),
    st.sampled_from(KINDS),
    st.booleans(),
    st.sampled_from([CURVE, LINE]),
    log_beta,
    log_beta,
)


@settings(max_examples=150, deadline=None)
@given(config)
def test_kronecker_and_partition_of_unity(cfg):
    seed, kind, curved, partition, bm, bp = cfg
    cut = _draw(seed, kind, curved, partition)
    minus, plus, _ = ife_coefficients(cut, standard_shapes(cut.element), (bm, bp))
    n = cut.element.n_edges
    M = np.array([_piecewise_edge_average(cut, minus, plus, j) for j in range(n)]).T
    assert np.abs(M - np.eye(n)).max() <= 1e-11
    el = cut.element
    X = el.vertices.mean(axis=0) + 0.3 * (el.vertices - el.vertices.mean(axis=0))
    for coeffs in (minus, plus):
        assert np.abs(eval_poly(coeffs, X, el.center, el.scale).sum(axis=0) - 1.0).max() <= 1e-11


@settings(max_examples=150, deadline=None)
@given(config)
def test_jump_conditions(cfg):
    seed, kind, curved, partition, bm, bp = cfg
    cut = _draw(seed, kind, curved, partition)
    el = cut.element
    minus, plus, _ = ife_coefficients(cut, standard_shapes(el), (bm, bp))
    scale = np.abs(minus).max() + np.abs(plus).max()
    for P in (cut.D, cut.E, 0.5 * (cut.D + cut.E)):
        diff = eval_poly(minus, P, el.center, el.scale) - eval_poly(plus, P, el.center, el.scale)
        assert np.abs(diff).max() <= 1e-11 * scale
    if kind == KIND_RECT:
        assert np.abs(minus[:, 3] - plus[:, 3]).max() <= 1e-11 * scale
    fm = bm * grad_poly(minus, cut.F, el.center, el.scale) @ cut.vF
    fp = bp * grad_poly(plus, cut.F, el.center, el.scale) @ cut.vF
    assert np.abs(fm - fp).max() <= 1e-10 * max(bm, bp) * scale / el.scale


@settings(max_examples=100, deadline=None)
@given(config)
def test_matches_dense_constraint_solve(cfg):
    seed, kind, curved, partition, bm, bp = cfg
    cut = _draw(seed, kind, curved, partition)
    minus, plus, _ = ife_coefficients(cut, standard_shapes(cut.element), (bm, bp))
    dm, dp = dense_ife(cut, (bm, bp))
    scale = max(np.abs(dm).max(), np.abs(dp).max())
    assert max(np.abs(minus - dm).max(), np.abs(plus - dp).max()) <= 1e-11 * scale


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(KINDS), st.booleans(), st.sampled_from([CURVE, LINE]))
def test_equal_coefficients_reduce_to_standard_basis(seed, kind, curved, partition):
    cut = _draw(seed, kind, curved, partition)
    shapes = standard_shapes(cut.element)
    minus, plus, c0 = ife_coefficients(cut, shapes, (2.5, 2.5))
    assert np.abs(minus - shapes.coeffs).max() <= 1e-13
    assert np.abs(plus - shapes.coeffs).max() <= 1e-13
    assert np.abs(c0).max() <= 1e-13


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(KINDS), st.booleans())
def test_gamma_delta_in_unit_interval_for_chord_flux_point(seed, kind, curved):
    cut = _draw(seed, kind, curved, LINE)
    sm = build_sm_system(cut, standard_shapes(cut.element), (1.0, 10.0), np.eye(cut.element.n_edges))
    assert -1e-12 <= sm.gamma_delta <= 1.0 + 1e-12


@pytest.mark.parametrize("d,e,t", [(1.0, 1.0, 0.0), (0.3, 0.7, 0.5), (0.9, 0.2, 1.0), (0.5, 0.5, 0.25), (0.12, 0.95, 0.8)])
def test_gamma_delta_closed_form(d, e, t):
    h = 0.2
    el = make_element(KIND_RECT, h)
    D = np.array([d * h, 0.0])
    line = Line(tuple(D), (e, d))
    cut = compute_cut(el, line, LINE, LINE_MIDPOINT) if d < 1 and e < 1 else None
    if cut is None:
        # d = e = 1 cuts through vertices; shrink just inside
        d2, e2 = 1 - 1e-9, 1 - 1e-9
        line = Line((d2 * h, 0.0), (e2, d2))
        cut = compute_cut(el, line, LINE, LINE_MIDPOINT)
        d, e = d2, e2
    tt = t * h
    F = np.array([tt * d, (h - tt) * e])
    cut = dataclasses.replace(cut, F=F, vF=cut.nbar.copy())
    assert role_side(cut) == MINUS
    sm = build_sm_system(cut, standard_shapes(el), (1.0, 5.0), np.eye(4))
    assert sm.gamma_delta == pytest.approx(gamma_delta_formula(d, e, tt, h), abs=1e-8)


def test_gamma_delta_frozen_value():
    # d = e = 1, t = 0 gives 1/2
    assert gamma_delta_formula(1.0, 1.0, 0.0, 1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("cell", [RECTANGULAR, TRIANGULAR])
@pytest.mark.parametrize("partition", [CURVE, LINE])
def test_benchmark_elements_identities_and_bounds(cell, partition):
    mesh = build_mesh((-1, 1, -1, 1), 40, cell)
    cls = classify_elements(mesh, BENCH)
    beta = (1.0, 1e4)
    flux = CURVE_MIDPOINT if partition == CURVE else LINE_MIDPOINT
    for e in cls.interface_elements:
        el = mesh.element(int(e))
        cut = compute_cut(el, BENCH, partition, flux)
        assert cut.nbar @ cut.vF >= 0.5
        shapes = standard_shapes(el)
        sm = build_sm_system(cut, shapes, beta, np.eye(el.n_edges))
        assert -1e-12 <= sm.gamma_delta <= 1.0 + 1e-12
        res = check_identities(cut, ife_shape_functions(cut, shapes, beta), beta)
        assert res.passes(mesh.h), (e, res)


@settings(max_examples=60, deadline=None)
@given(config)
def test_identities_hold_on_random_elements(cfg):
    seed, kind, curved, partition, _, bp = cfg
    cut = _draw(seed, kind, curved, partition)
    # contrast capped at 1e4 as in the benchmark
    phis = ife_shape_functions(cut, standard_shapes(cut.element), (1.0, bp))
    # residuals are relative to the size of the shape functions
    size = max(np.abs(p.minus_coeffs).max() + np.abs(p.plus_coeffs).max() for p in phis)
    res = check_identities(cut, phis, (1.0, bp))
    h = cut.element.scale
    assert res.value <= 1e-10 * max(1.0, size)
    assert res.derivative <= 1e-9 / h * max(1.0, size)


@settings(max_examples=60, deadline=None)
@given(config)
def test_identity_residual_scales_with_contrast(cfg):
    # the correction term is rank one with weight (rho - 1), so roundoff grows like rho * eps
    seed, kind, curved, partition, bm, bp = cfg
    cut = _draw(seed, kind, curved, partition)
    phis = ife_shape_functions(cut, standard_shapes(cut.element), (bm, bp))
    size = max(1.0, max(np.abs(p.minus_coeffs).max() + np.abs(p.plus_coeffs).max() for p in phis))
    bound = size * max(1e-10, 10 * max(bm / bp, bp / bm) * np.finfo(float).eps)
    res = check_identities(cut, phis, (bm, bp))
    assert res.value <= bound
    assert res.derivative * cut.element.scale <= 10 * bound


def test_identities_independent_of_chord_point():
    cut = _draw(3, KIND_RECT, True)
    beta = (1.0, 100.0)
    phis = ife_shape_functions(cut, standard_shapes(cut.element), beta)
    pts = [cut.D + s * (cut.E - cut.D) for s in (0.1, 0.6, 0.93)]
    assert check_identities(cut, phis, beta, pts).passes(cut.element.scale)


def test_jump_matrices_map_flux_and_tangent():
    cut = _draw(11, KIND_RECT, True)
    bm, bp = 1.0, 50.0
    jm = jump_matrices(cut, bm, bp)
    v = cut.vF
    tangent = np.array([-cut.nbar[1], cut.nbar[0]])
    # beta^s (Mbar^{s'})^T v = beta^{s'} v
    assert np.allclose(bm * jm.Mbar(PLUS).T @ v, bp * v)
    assert np.allclose(bp * jm.Mbar(MINUS).T @ v, bm * v)
    assert np.allclose(jm.Mbar(PLUS).T @ tangent, tangent)
    M = curve_jump_matrix(np.array([0.0, 1.0]), 4.0)
    assert np.allclose(M.T @ [0.0, 1.0], [0.0, 4.0])
    assert np.allclose(M.T @ [1.0, 0.0], [1.0, 0.0])
    with pytest.raises(Exception):
        line_jump_matrix(np.array([1.0, 0.0]), np.array([-1.0, 0.0]), 2.0)


def test_near_singular_denominator_raises():
    sm = SMSystem(k=-1.0, gamma=np.array([1.0]), delta=np.array([1.0]), b=np.array([1.0]), side=MINUS,
                  unknown=(0,), known=(), known_flux=np.zeros(()), rho_eff=2.0)
    with pytest.raises(NearSingular):
        solve_sm(sm)


def test_sherman_morrison_literal_formula_without_values():
    cut = _draw(5, KIND_TRI_LOWER, True)
    shapes = standard_shapes(cut.element)
    sm = build_sm_system(cut, shapes, (1.0, 3.0), np.eye(3))
    c_stable, c0_stable = solve_sm(sm)
    c_lit, c0_lit = solve_sm(dataclasses.replace(sm, v_unknown=None))
    assert np.allclose(c_stable, c_lit, atol=1e-12)
    assert np.allclose(c0_stable, c0_lit, atol=1e-12)
    A = np.eye(len(sm.delta)) + sm.k * np.outer(sm.delta, sm.gamma)
    assert np.allclose(A @ c_stable, sm.b, atol=1e-12)


def test_gamma_delta_closed_form_random_points():
    rng = np.random.default_rng(12)
    h = 0.2
    el = make_element(KIND_RECT, h)
    for _ in range(100):
        d, e = rng.uniform(0.05, 0.95, 2)
        t = rng.uniform(0.0, h)
        cut = compute_cut(el, Line((d * h, 0.0), (e, d)), LINE, LINE_MIDPOINT)
        F = np.array([t * d, (h - t) * e])
        cut = dataclasses.replace(cut, F=F, vF=cut.nbar.copy())
        sm = build_sm_system(cut, standard_shapes(el), (1.0, 5.0), np.eye(4))
        assert sm.gamma_delta == pytest.approx(gamma_delta_formula(d, e, t, h), abs=1e-12)


def _benchmark_cuts(cell, n, partition=CURVE):
    mesh = build_mesh((-1, 1, -1, 1), n, cell)
    flux = CURVE_MIDPOINT if partition == CURVE else LINE_MIDPOINT
    cls = classify_elements(mesh, BENCH)
    return mesh, [compute_cut(mesh.element(int(e)), BENCH, partition, flux) for e in cls.interface_elements]


@pytest.mark.parametrize("cell", [RECTANGULAR, TRIANGULAR])
@pytest.mark.parametrize("partition", [CURVE, LINE])
def test_benchmark_denominator_bounded_away_from_zero(cell, partition):
    _, cuts = _benchmark_cuts(cell, 40, partition)
    for beta in ((1.0, 1e4), (1e4, 1.0)):
        for cut in cuts:
            sm = build_sm_system(cut, standard_shapes(cut.element), beta, np.eye(cut.element.n_edges))
            assert sm.denominator > 0.09


@pytest.mark.parametrize("cell", [RECTANGULAR, TRIANGULAR])
def test_shape_functions_bounded_uniformly_in_h(cell):
    bound = 50.0
    for n in (40, 80, 160):
        _, cuts = _benchmark_cuts(cell, n)
        for beta in ((1.0, 1e4), (1e4, 1.0)):
            for cut in cuts:
                el = cut.element
                minus, plus, _ = ife_coefficients(cut, standard_shapes(el), beta)
                for side, c, b in ((MINUS, minus, beta[0]), (PLUS, plus, beta[1])):
                    X = identity_sample_points(cut, side)
                    assert np.abs(eval_poly(c, X, el.center, el.scale)).max() <= bound
                    # the low-coefficient piece carries a normal derivative rho times larger
                    grad = np.abs(grad_poly(c, X, el.center, el.scale)).max() * el.scale
                    assert grad * b / max(beta) <= bound
                    assert grad <= bound * max(beta) / min(beta)


@settings(max_examples=60, deadline=None)
@given(config, st.floats(-3.0, 3.0))
def test_coefficients_invariant_under_common_scaling(cfg, log_lam):
    seed, kind, curved, partition, bm, bp = cfg
    cut = _draw(seed, kind, curved, partition)
    shapes = standard_shapes(cut.element)
    lam = 10.0**log_lam
    a = ife_coefficients(cut, shapes, (bm, bp))
    b = ife_coefficients(cut, shapes, (lam * bm, lam * bp))
    for x, y in zip(a, b):
        assert np.abs(x - y).max() <= 1e-12 * max(1.0, np.abs(x).max())


def test_identity_residual_does_not_depend_on_chord_point():
    for seed in range(5):
        cut = _draw(seed, KIND_RECT, True)
        beta = (1.0, 1e4)
        phis = ife_shape_functions(cut, standard_shapes(cut.element), beta)
        first = check_identities(cut, phis, beta, [cut.D + 0.2 * (cut.E - cut.D)])
        second = check_identities(cut, phis, beta, [cut.D + 0.85 * (cut.E - cut.D)])
        assert abs(first.value - second.value) <= 1e-11
        assert abs(first.derivative - second.derivative) * cut.element.scale <= 1e-11


@pytest.mark.parametrize("kind", KINDS)
def test_identity_residual_for_equal_coefficients(kind):
    cut = _draw(21, kind, True)
    phis = ife_shape_functions(cut, standard_shapes(cut.element), (3.0, 3.0))
    res = check_identities(cut, phis, (3.0, 3.0))
    assert res.value < 1e-12
    assert res.derivative * cut.element.scale < 1e-12


@pytest.mark.parametrize("cell", [RECTANGULAR, TRIANGULAR])
def test_benchmark_flux_dofs_and_unity(cell):
    mesh, cuts = _benchmark_cuts(cell, 40)
    beta = (1.0, 1e4)
    rng = np.random.default_rng(3)
    for cut in cuts:
        el = cut.element
        minus, plus, _ = ife_coefficients(cut, standard_shapes(el), beta)
        n = el.n_edges
        M = np.array([_piecewise_edge_average(cut, minus, plus, j) for j in range(n)]).T
        assert np.abs(M - np.eye(n)).max() <= 1e-11
        fm = beta[0] * grad_poly(minus, cut.F, el.center, el.scale) @ cut.vF
        fp = beta[1] * grad_poly(plus, cut.F, el.center, el.scale) @ cut.vF
        assert np.abs(fm - fp).max() <= 1e-11 * max(beta) / mesh.h
        # 50 random points, each evaluated with the piece of its own side
        lo, hi = el.vertices.min(axis=0), el.vertices.max(axis=0)
        X = rng.uniform(lo, hi, (50, 2))
        side = cut.side_of(X)
        total = np.where(side == MINUS, eval_poly(minus, X, el.center, el.scale).sum(axis=0),
                         eval_poly(plus, X, el.center, el.scale).sum(axis=0))
        assert np.abs(total - 1.0).max() <= 1e-11


@settings(max_examples=100, deadline=None)
@given(config)
def test_closed_form_satisfies_dense_constraints(cfg):
    seed, kind, curved, partition, bm, bp = cfg
    cut = _draw(seed, kind, curved, partition)
    el = cut.element
    minus, plus, _ = ife_coefficients(cut, standard_shapes(el), (bm, bp))
    n = el.n_edges
    # DOF rows: piecewise edge averages reproduce the unit vectors
    M = np.array([_piecewise_edge_average(cut, minus, plus, j) for j in range(n)]).T
    assert np.linalg.norm(M - np.eye(n), axis=1).max() <= 1e-12 * math.sqrt(n) * max(1.0, np.abs(minus).max())
