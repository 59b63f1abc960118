from __future__ import annotations

from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from toric_magnetic import (
    ConvexityError,
    RangeCoverageError,
    ToricBackground,
    ToricPotential,
    cofactor_pairing,
    legendre,
    ma_density,
    md,
    mixed_ma_density,
)
from toric_magnetic.grid import Grid, ScalarField, hess_arrays, integrate, integrate_array
from toric_magnetic.ma_ops import cof_trace, md_stack
from toric_magnetic.refinement import observed_orders

sym2 = arrays(float, (3,), elements=st.floats(-5, 5)).map(
    lambda a: np.array([[a[0], a[1]], [a[1], a[2]]]))


def test_md_examples():
    assert md([[2.0]]) == 2.0
    assert md(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])) == pytest.approx(5.0, abs=1e-14)
    assert md(np.eye(2), np.diag([3.0, 4.0])) == pytest.approx(3.5, abs=1e-14)
    with pytest.raises(ValueError):
        md(np.eye(2))
    with pytest.raises(ValueError):
        md(np.eye(3), np.eye(3))


@settings(max_examples=60, deadline=None)
@given(sym2, sym2)
def test_md_symmetric_and_diagonal(a, b):
    assert md(a, b) == md(b, a)
    assert md(a, a) == pytest.approx(np.linalg.det(a), rel=1e-12, abs=1e-12)
    # linear coefficient of det(A + tB) is 2 md(A, B)
    c1 = (np.linalg.det(a + b) - np.linalg.det(a - b)) / 2
    assert 2 * md(a, b) == pytest.approx(c1, rel=1e-9, abs=1e-9)


def test_md_stack_matches_md():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 2, 2))
    b = rng.standard_normal((6, 2, 2))
    a = a + a.transpose(0, 2, 1)
    b = b + b.transpose(0, 2, 1)
    out = md_stack([a, b])
    assert np.allclose(out, [md(x, y) for x, y in zip(a, b)], rtol=1e-13, atol=1e-13)


def test_ma_density_examples():
    g2 = Grid.uniform(2, 9, -1, 1)
    dens = ma_density(g2.sample(lambda x, y: x**2 / 2 + y**2 / 2)).values
    assert np.allclose(dens[g2.interior], 2.0, atol=1e-12)
    assert np.all(dens[0] == 0) and np.all(dens[:, -1] == 0)
    g1 = Grid.uniform(1, 9, -1, 1)
    dens = ma_density(g1.sample(lambda x: x**2 / 2 + 7.0)).values
    assert np.allclose(dens[g1.interior], 1.0, atol=1e-12)


def test_ma_density_quartic_order_two():
    errs = []
    for p in (33, 65, 129):
        g = Grid.uniform(1, p, -1, 1)
        dens = ma_density(g.sample(lambda x: x**4 / 12)).values[g.interior]
        errs.append(np.abs(dens - g.axes[0][1:-1] ** 2).max())
    assert np.all(np.abs(observed_orders(errs) - 2) < 0.05)


def _const_hess(grid, m):
    return grid.sample(lambda x, y: m[0][0] * x**2 / 2 + m[0][1] * x * y + m[1][1] * y**2 / 2)


def test_mixed_ma_density_examples():
    g = Grid.uniform(2, 9, -1, 1)
    f = g.sample(lambda x, y: x**2 / 2 + y**2 / 2)
    assert np.allclose(mixed_ma_density(f, f).values[g.interior], 2.0, atol=1e-12)
    a = _const_hess(g, np.diag([1.0, 2.0]))
    b = _const_hess(g, np.diag([3.0, 4.0]))
    assert np.allclose(mixed_ma_density(a, b).values[g.interior], 10.0, atol=1e-10)
    with pytest.raises(ValueError):
        mixed_ma_density(a)
    with pytest.raises(ValueError):
        mixed_ma_density(a, Grid.uniform(2, 7, -1, 1).sample(lambda x, y: x))


@settings(max_examples=30, deadline=None)
@given(arrays(float, (3, 7, 7), elements=st.floats(-3, 3)))
def test_polarization_diagonal_and_symmetry(vals):
    g = Grid.uniform(2, 7, -1, 1)
    f, h = ScalarField(g, vals[0]), ScalarField(g, vals[1])
    diag = mixed_ma_density(f, f).values
    ref = ma_density(f).values
    assert np.allclose(diag, ref, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(ref).max()))
    assert np.array_equal(mixed_ma_density(f, h).values, mixed_ma_density(h, f).values)
    u = ScalarField(g, vals[2])
    assert np.array_equal(cofactor_pairing(u, h, [f]).values,
                          cofactor_pairing(h, u, [f]).values)


@settings(max_examples=30, deadline=None)
@given(sym2, sym2)
def test_md_permutation_invariance_exact(a, b):
    vals = {md(*p) for p in permutations([a, b])}
    assert len(vals) == 1


def test_cofactor_pairing_examples():
    g1 = Grid.uniform(1, 9, -1, 1)
    x = g1.sample(lambda x: x)
    assert np.allclose(cofactor_pairing(x, x).values[g1.interior], 1.0, atol=1e-14)
    c = g1.sample(lambda x: 3 + 0 * x)
    assert np.all(cofactor_pairing(c, x).values == 0)
    g2 = Grid.uniform(2, 9, -1, 1)
    x2 = g2.sample(lambda x, y: x)
    w = g2.sample(lambda x, y: x**2 / 2 + y**2 / 2)
    assert np.allclose(cofactor_pairing(x2, x2, [w]).values[g2.interior], 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        cofactor_pairing(x2, x2)
    with pytest.raises(ValueError):
        cofactor_pairing(x, x, [x])


def _ibp_defect(points: int, dim: int) -> float:
    """``int pairing(u, u, W) + (n-1)! int u tr(Cof(Hess W) Hess u)``, relative."""
    g = Grid.uniform(dim, points, -1, 1)
    if dim == 1:
        u = g.sample(lambda x: np.cos(np.pi * x / 2) ** 4 * (1 + x / 3))
        slots = []
        w_parts = None
    else:
        u = g.sample(lambda x, y: np.cos(np.pi * x / 2) ** 4 * np.cos(np.pi * y / 2) ** 4
                     * (1 + x / 3 - y / 5))
        w = g.sample(lambda x, y: x**2 / 2 + y**2 + x * y / 4 + x**4 / 12 + np.exp(y) / 3)
        slots = [w]
        w_parts = hess_arrays(w.values, g.spacing)
    pair = integrate(cofactor_pairing(u, u, slots))
    hu = hess_arrays(u.values, g.spacing)
    tr = hu[0] if dim == 1 else cof_trace(w_parts, hu)
    div = integrate_array(u.values[g.interior] * tr, g)
    return abs(pair + div) / abs(pair)


@pytest.mark.parametrize("dim", [1, 2])
def test_cofactor_integration_by_parts_order(dim):
    errs = [_ibp_defect(p, dim) for p in (33, 65, 129)]
    assert errs[-1] < 1e-3
    assert np.all(observed_orders(errs) >= 1.8)


def test_convex_density_nonnegative():
    rng = np.random.default_rng(3)
    g = Grid.uniform(2, 11, -1, 1)
    for _ in range(10):
        a, b, c = rng.uniform(0.1, 2, 3)
        f = g.sample(lambda x, y: a * x**4 + b * y**2 + c * np.exp(x + y))
        assert np.all(ma_density(f).values >= 0)


def test_legendre_examples():
    g = Grid.uniform(1, 401, -2, 2)
    dual = Grid.uniform(1, 101, -1, 1)
    y = dual.axes[0]
    h = g.spacing[0]
    assert np.abs(legendre(g.sample(lambda x: x**2 / 2), dual).values - y**2 / 2).max() <= h
    shifted = legendre(g.sample(lambda x: x**2 / 2 + 0.7), dual).values
    assert np.abs(shifted - (y**2 / 2 - 0.7)).max() <= h
    assert np.abs(legendre(g.sample(lambda x: x**2), dual).values - y**2 / 4).max() <= h


def test_legendre_range_error():
    g = Grid.uniform(1, 65, -1, 1)
    with pytest.raises(RangeCoverageError):
        legendre(g.sample(lambda x: x**2 / 2), Grid.uniform(1, 33, -2, 2))
    with pytest.raises(ValueError):
        legendre(g.sample(lambda x: x**2 / 2), Grid.uniform(2, 9, -0.5, 0.5))


@pytest.mark.parametrize("dim", [1, 2])
def test_legendre_involution_exact_on_fine_dual(dim):
    # the discrete biconjugate of convex samples reproduces them once every
    # chord slope is resolved by the dual grid
    g = Grid.uniform(dim, 17, -1, 1)
    dual = Grid.uniform(dim, 33, -1.5, 1.5)
    f = g.sample(lambda *x: sum(c**2 / 2 + c**4 / 4 for c in x))
    back = legendre(legendre(f, dual), g, check_range=False).values
    inner = np.logical_and.reduce([np.abs(c) <= 0.5 for c in g.coords])
    assert np.abs(back - f.values)[inner].max() <= 1e-12


def test_legendre_involution_order():
    errs = []
    for p in (17, 33, 65, 129):
        g = Grid.uniform(1, p, -1, 1)
        dual = Grid.uniform(1, (p + 1) // 2, -1.5, 1.5)
        f = g.sample(lambda x: x**2 / 2 + x**4 / 4)
        back = legendre(legendre(f, dual), g, check_range=False).values
        inner = np.abs(g.axes[0]) <= 0.5
        errs.append(np.abs(back - f.values)[inner].max())
        assert errs[-1] <= g.spacing[0]
    assert np.all(observed_orders(errs) >= 1.0)


def test_toric_types_enforce_convexity():
    g = Grid.uniform(1, 9, -1, 1)
    with pytest.raises(ConvexityError):
        ToricBackground(g.sample(lambda x: -(x**2)))
    bg = ToricBackground.quadratic(g)
    assert bg.V == pytest.approx(integrate(g.sample(lambda x: 1 + 0 * x)))
    with pytest.raises(ConvexityError):
        ToricPotential(bg, g.sample(lambda x: -(x**2)))
    pot = ToricPotential(bg, g.sample(lambda x: x**2))
    assert pot.min_eigenvalue() == pytest.approx(3.0)
    with pytest.raises(ValueError):
        ToricPotential(bg, Grid.uniform(1, 7, -1, 1).sample(lambda x: x))
