import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ocdensity.data import SampleSet
from ocdensity.partition import Partition, build_partition
from ocdensity.studies import fd_jacobian_error, random_state
from ocdensity.system import (
    DivergedIterate,
    ModelParams,
    NormalLogReference,
    ReferenceFunction,
    Scheme,
    StateVector,
    TabulatedReference,
    jacobian,
    residual,
    residual_euler,
    residual_trapezoid,
    rhs_f,
)

SCHEMES = [Scheme.EULER, Scheme.TRAPEZOID]


class ConstantReference(ReferenceFunction):
    """w identically equal to a constant, for hand-checked arithmetic."""

    def __init__(self, c):
        self.c = c

    def __call__(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.c)

    def on_grid(self, nodes):
        return np.full(len(nodes), self.c)


def flat_state(grid):
    size = grid.L + 1
    return StateVector(grid.nodes.copy(), np.zeros(size), np.zeros(size), 0.0)


# --- rhs_f -------------------------------------------------------------------


def test_rhs_all_zero():
    assert rhs_f(0.0, 0.37, ModelParams(1.0, 1.0), 0.0) == 0.0


def test_rhs_arithmetic():
    p = ModelParams(1.0, beta=2.0, w=ConstantReference(0.5))
    assert rhs_f(1.0, 0.2, p, 3.0) == pytest.approx(2.0 + 3.0 * math.e, rel=1e-15)
    assert rhs_f(1.0, 0.2, p, 3.0) == pytest.approx(10.154845485377136, rel=1e-14)


def test_rhs_normal_reference_at_mean():
    p = ModelParams(1.0, 1.0, NormalLogReference(0.5, 0.01))
    assert rhs_f(0.0, 0.5, p, 0.0) == 0.0


def test_rhs_overflow_guard():
    with pytest.raises(DivergedIterate):
        rhs_f(701.0, 0.5, ModelParams(1.0), 1.0)


@pytest.mark.parametrize("alpha, beta", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1)])
def test_param_validation(alpha, beta):
    with pytest.raises(ValueError):
        ModelParams(alpha, beta)


def test_normal_reference_formula():
    w = NormalLogReference(0.3, 0.04)
    assert w(0.5) == pytest.approx(-(0.2**2) / 0.08)


def test_tabulated_reference_must_match_grid():
    g = build_partition(SampleSet(np.array([0.5])), 0.25)
    TabulatedReference(tuple(range(5))).on_grid(g.nodes)
    with pytest.raises(ValueError):
        TabulatedReference((1.0, 2.0)).on_grid(g.nodes)


# --- state packing -----------------------------------------------------------


def test_pack_round_trip():
    rng = np.random.default_rng(0)
    g = build_partition(SampleSet(np.array([0.4])), 0.25)
    Y = random_state(g, rng)
    x = Y.pack()
    assert x.size == 3 * g.L + 4
    Z = StateVector.unpack(x)
    assert Z.pack().tobytes() == x.tobytes()
    assert x[1] == Y.y2[0] and x[-1] == Y.gamma


# --- residuals ---------------------------------------------------------------


@pytest.mark.parametrize("scheme", SCHEMES)
def test_flat_state_is_exact_without_data(scheme):
    g = build_partition(SampleSet.empty(), 0.01)
    r = residual(flat_state(g), g, ModelParams(alpha=0.7), scheme)
    assert r.values.size == 3 * g.L + 4
    assert r.inf_norm <= 1e-13


def test_euler_perturbed_first_node():
    g = build_partition(SampleSet.empty(), 0.1)
    Y = flat_state(g)
    Y.y2[0] = 0.1
    r = residual_euler(Y, g, ModelParams(alpha=1.0, beta=1.0)).values
    h0 = g.steps[0]
    assert r[0] == pytest.approx(-h0 * (math.exp(0.1) - 1.0), abs=1e-16)
    assert r[0] == pytest.approx(-h0 * 0.10517091807564763, abs=1e-16)
    # y2 difference from node 0 to node 1 picks up -0.1 (y3 is still zero)
    assert r[1] == pytest.approx(-0.1, abs=1e-16)
    assert r[2] == pytest.approx(-h0 * 0.1, abs=1e-16)
    # node 1 rows see nothing of the perturbation under the explicit scheme
    np.testing.assert_allclose(r[3:-4], 0.0, atol=1e-15)


@pytest.mark.parametrize("c", [0.0, 0.8])
def test_euler_jump_row(c):
    g = build_partition(SampleSet(np.array([0.4])), 0.25)
    alpha = 2.5
    Y = flat_state(g)
    Y.y3[:] = c
    r = residual_euler(Y, g, ModelParams(alpha=alpha, beta=0.0)).values
    k = g.data_indices[0]
    y3_rows = r[2:-4:3]
    assert y3_rows[k] == pytest.approx(1 / alpha, abs=1e-15)
    np.testing.assert_allclose(np.delete(y3_rows, k), 0.0, atol=1e-15)
    assert r[3 * k + 1] == pytest.approx(-g.steps[k] * (c - 1 / alpha), abs=1e-15)


@pytest.mark.parametrize("c", [0.0, 0.8])
def test_trapezoid_jump_row(c):
    g = build_partition(SampleSet(np.array([0.4])), 0.25)
    alpha = 2.5
    Y = flat_state(g)
    Y.y3[:] = c
    r = residual_trapezoid(Y, g, ModelParams(alpha=alpha, beta=0.0)).values
    k = g.data_indices[0]
    hk = g.steps[k]
    assert r[3 * k + 2] == pytest.approx(1 / alpha, abs=1e-15)
    # with c = 0 this is h/(2 alpha); the constant c contributes -h c
    assert r[3 * k + 1] == pytest.approx(hk / (2 * alpha) - hk * c, abs=1e-15)


def exact_linear_state(H, beta=1.3, a=0.4, b=-0.7):
    """v = a cosh(beta t) + b sinh(beta t) solves v'' = beta^2 v; y1 by quadrature."""
    s = np.array([0.0, H])
    v = a * np.cosh(beta * s) + b * np.sinh(beta * s)
    vd = beta * (a * np.sinh(beta * s) + b * np.cosh(beta * s))
    y1 = np.array([0.0, quad(lambda t: math.exp(a * math.cosh(beta * t) + b * math.sinh(beta * t)), 0, H,
                             epsabs=0.0, epsrel=1e-13)[0]])
    grid = Partition(s, np.empty(0, dtype=int), H)
    return StateVector(y1, v, vd, 0.0), grid, ModelParams(alpha=1.0, beta=beta)


def test_trapezoid_local_truncation_is_third_order():
    errs = []
    for H in (0.1, 0.05, 0.025, 0.0125):
        Y, g, p = exact_linear_state(H)
        errs.append(np.abs(residual_trapezoid(Y, g, p).values[:3]))
    errs = np.array(errs)
    ratios = errs[:-1] / errs[1:]
    np.testing.assert_allclose(ratios, 8.0, rtol=0.1)


def test_euler_local_truncation_is_second_order():
    errs = []
    for H in (0.1, 0.05, 0.025, 0.0125):
        Y, g, p = exact_linear_state(H)
        errs.append(np.abs(residual_euler(Y, g, p).values[:3]))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 4.0, rtol=0.1)


def test_size_mismatch():
    g = build_partition(SampleSet(np.array([0.5])), 0.25)
    Y = StateVector(np.zeros(3), np.zeros(3), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        residual(Y, g, ModelParams(1.0), Scheme.EULER)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0.02, 0.98), min_size=0, max_size=6, unique=True).map(sorted)
    .filter(lambda p: np.all(np.diff(p) > 1e-6)),
    st.floats(0.1, 5.0),
    st.integers(0, 2**32 - 1),
    st.sampled_from(SCHEMES),
)
def test_telescoping_identity(points, alpha, seed, scheme):
    g = build_partition(SampleSet(np.asarray(points)), 0.05)
    p = ModelParams(alpha=alpha, beta=0.9)
    Y = random_state(g, np.random.default_rng(seed))
    r3 = residual(Y, g, p, scheme).values[2:-4:3]
    f = p.beta**2 * Y.y2 + Y.gamma * np.exp(Y.y2)
    if scheme is Scheme.EULER:
        quad_f = np.sum(g.steps * f[:-1])
    else:
        quad_f = np.sum(0.5 * g.steps * (f[:-1] + f[1:]))
    lhs = r3.sum() + quad_f
    rhs = Y.y3[-1] - Y.y3[0] + len(points) / alpha
    assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + np.abs(f).sum() * 0.05))


# --- Jacobian ----------------------------------------------------------------


@pytest.fixture(scope="module")
def small_grid():
    g = build_partition(SampleSet(np.array([0.3, 0.7])), 0.1)
    assert g.L == 10
    return g


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize(
    "params",
    [ModelParams(1.0, 1.0), ModelParams(0.3, 2.0, NormalLogReference(0.5, 0.01))],
    ids=["zero-w", "normal-w"],
)
def test_jacobian_matches_finite_differences(small_grid, scheme, seed, params):
    Y = random_state(small_grid, np.random.default_rng(seed), gamma_scale=3.0)
    assert fd_jacobian_error(Y, small_grid, params, scheme) <= 1e-6


@pytest.mark.parametrize("scheme, per_step", [(Scheme.EULER, 10), (Scheme.TRAPEZOID, 13)])
def test_jacobian_nonzero_count(small_grid, scheme, per_step):
    Y = random_state(small_grid, np.random.default_rng(4))
    J = jacobian(Y, small_grid, ModelParams(1.0), scheme)
    L = small_grid.L
    assert J.shape == (3 * L + 4, 3 * L + 4)
    assert J.nnz == per_step * L + 4
    # gamma column touches exactly the L y3 rows
    assert J[:, -1].nnz == L
    if scheme is Scheme.EULER:
        assert J.nnz <= 9 * L + L + 4


def test_gamma_column_euler_entry(small_grid):
    Y = random_state(small_grid, np.random.default_rng(5))
    J = jacobian(Y, small_grid, ModelParams(1.0), Scheme.EULER).toarray()
    k = 4
    assert k not in small_grid.data_indices
    assert J[3 * k + 2, -1] == pytest.approx(-small_grid.steps[k] * math.exp(Y.y2[k]), rel=1e-15)


def test_jacobian_band_structure(small_grid):
    Y = random_state(small_grid, np.random.default_rng(6))
    J = jacobian(Y, small_grid, ModelParams(1.0), Scheme.TRAPEZOID).tocoo()
    stepping = J.row < 3 * small_grid.L
    band = J.col[stepping] - 3 * (J.row[stepping] // 3)
    gamma_col = J.col[stepping] == 3 * small_grid.L + 3
    assert np.all((band[~gamma_col] >= 0) & (band[~gamma_col] <= 5))
    bc = J.tocsr()[3 * small_grid.L:]
    assert bc.nnz == 4 and np.all(bc.data == 1.0)


def test_injected_jacobian_bug_is_caught(small_grid):
    def buggy(Y, grid, params, scheme):
        J = jacobian(Y, grid, params, scheme).tolil()
        J[5, 4] *= 1.01
        return J.tocsr()

    Y = random_state(small_grid, np.random.default_rng(7))
    assert fd_jacobian_error(Y, small_grid, ModelParams(1.0), Scheme.EULER, jac=buggy) > 1e-4


def test_evaluation_is_deterministic(small_grid):
    Y = random_state(small_grid, np.random.default_rng(8))
    a = residual(Y, small_grid, ModelParams(0.5), Scheme.TRAPEZOID).values
    b = residual(Y, small_grid, ModelParams(0.5), Scheme.TRAPEZOID).values
    assert a.tobytes() == b.tobytes()
