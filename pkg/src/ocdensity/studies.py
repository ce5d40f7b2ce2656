"""Verification studies shared by the ``verify`` command and the test suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SampleSet
from .newton import SolverConfig, solve
from .oracle import minimize_P
from .partition import build_partition
from .system import ModelParams, Scheme, StateVector, jacobian, residual

ORDER_SAMPLES = (0.25, 0.5, 0.8)
ORDER_STEPS = (1 / 500, 1 / 1000, 1 / 2000, 1 / 4000)
ORDER_REFERENCE_STEP = 1 / 32000
# tight enough that Newton's stopping error sits well below O(h^2) at h = 1/4000
ORDER_TOL = 1e-13


def random_state(grid, rng, gamma_scale=1.0) -> StateVector:
    size = grid.L + 1
    return StateVector(
        rng.uniform(0.0, 1.0, size),
        rng.normal(0.0, 0.5, size),
        rng.normal(0.0, 1.0, size),
        float(rng.normal(0.0, gamma_scale)),
    )


def fd_jacobian_error(
    Y: StateVector, grid, params: ModelParams, scheme: Scheme, step: float = 1e-6, jac=None
) -> float:
    """Max abs difference between ``jac`` and central differences of the residual."""
    jac = jac or jacobian
    x0 = Y.pack()
    J = jac(Y, grid, params, scheme).toarray()
    fd = np.empty_like(J)
    for j in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[j] += step
        xm[j] -= step
        rp = residual(StateVector.unpack(xp), grid, params, scheme).values
        rm = residual(StateVector.unpack(xm), grid, params, scheme).values
        fd[:, j] = (rp - rm) / (2 * step)
    return float(np.abs(J - fd).max())


@dataclass
class OrderStudy:
    steps: tuple[float, ...]
    errors: np.ndarray
    order: float


def convergence_order(
    scheme: Scheme,
    points=ORDER_SAMPLES,
    steps=ORDER_STEPS,
    reference_step=ORDER_REFERENCE_STEP,
    params: ModelParams | None = None,
) -> OrderStudy:
    """Fit the slope of log(sup error of v at the samples) against log(h).

    The reference is a trapezoidal solve on a much finer grid.
    """
    params = params or ModelParams(alpha=1.0, beta=1.0)
    samples = SampleSet(np.asarray(points, dtype=float))
    fine = build_partition(samples, reference_step)
    ref = solve(samples, fine, params, SolverConfig(scheme=Scheme.TRAPEZOID, tol=ORDER_TOL))
    v_ref = ref.solution.y2[fine.data_indices]
    errors = []
    for h in steps:
        grid = build_partition(samples, h)
        out = solve(samples, grid, params, SolverConfig(scheme=scheme, tol=ORDER_TOL))
        errors.append(np.abs(out.solution.y2[grid.data_indices] - v_ref).max())
    errors = np.asarray(errors)
    order = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
    return OrderStudy(tuple(steps), errors, order)


@dataclass
class OracleComparison:
    sup_density_gap: float
    gamma_bvp: float
    gamma_oracle: float
    oracle_iterations: int


def oracle_agreement(
    points=(0.3, 0.7), alpha=1.0, beta=1.0, nodes=201, scheme=Scheme.TRAPEZOID
) -> OracleComparison:
    """Solve the boundary-value problem and the direct minimization on the same uniform grid."""
    samples = SampleSet(np.asarray(points, dtype=float))
    params = ModelParams(alpha=alpha, beta=beta)
    grid = build_partition(samples, 1.0 / (nodes - 1))
    if grid.L != nodes - 1:
        raise ValueError("samples are not aligned with the uniform grid")
    out = solve(samples, grid, params, SolverConfig(scheme=scheme))
    orc = minimize_P(samples, params, nodes)
    gap = float(np.abs(np.exp(out.solution.y2) - orc.density).max())
    return OracleComparison(gap, out.solution.gamma, orc.gamma_proxy, orc.iterations)
