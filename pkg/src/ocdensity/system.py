"""Discretized boundary-value problem with interior jumps at the sample nodes.

Unknowns are stored node-major, ``[y1_0, y2_0, y3_0, y1_1, ..., y3_L, gamma]``,
where y1 is the cumulative distribution, y2 the log-density ``v`` and y3 its
derivative.  Residual rows follow the same order: the three stepping
equations of step k are adjacent, and the four boundary rows
``y1_0, y1_L - 1, y3_0, y3_L`` come last.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .partition import Partition

EXP_LIMIT = 700.0


class DivergedIterate(ArithmeticError):
    """The log-density left the range where ``exp`` is representable."""


class Scheme(str, Enum):
    EULER = "euler"
    TRAPEZOID = "trapezoid"


# --- reference log-densities -------------------------------------------------


class ReferenceFunction:
    """Known log-density ``w`` the estimate is pulled towards."""

    is_zero = False

    def on_grid(self, nodes: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroReference(ReferenceFunction):
    is_zero = True

    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def on_grid(self, nodes):
        return np.zeros(len(nodes))


@dataclass(frozen=True)
class NormalLogReference(ReferenceFunction):
    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return -((t - self.mu) ** 2) / (2.0 * self.sigma2)

    def on_grid(self, nodes):
        return self(nodes)


@dataclass(frozen=True)
class TabulatedReference(ReferenceFunction):
    values: tuple[float, ...]

    def on_grid(self, nodes):
        if len(nodes) != len(self.values):
            raise ValueError(
                f"tabulated w has {len(self.values)} values but the grid has {len(nodes)} nodes"
            )
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float = 1.0
    w: ReferenceFunction = field(default_factory=ZeroReference)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")


# --- state -------------------------------------------------------------------


@dataclass
class StateVector:
    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray
    gamma: float

    @property
    def L(self) -> int:
        return len(self.y1) - 1

    def pack(self) -> np.ndarray:
        x = np.empty(3 * len(self.y1) + 1)
        x[0:-1:3] = self.y1
        x[1:-1:3] = self.y2
        x[2:-1:3] = self.y3
        x[-1] = self.gamma
        return x

    @classmethod
    def unpack(cls, x: np.ndarray) -> "StateVector":
        x = np.asarray(x, dtype=float)
        if (x.size - 1) % 3:
            raise ValueError("packed state must have 3(L+1) + 1 entries")
        return cls(x[0:-1:3].copy(), x[1:-1:3].copy(), x[2:-1:3].copy(), float(x[-1]))

    def copy(self) -> "StateVector":
        return StateVector(self.y1.copy(), self.y2.copy(), self.y3.copy(), self.gamma)


@dataclass(frozen=True)
class ResidualReport:
    values: np.ndarray

    @property
    def inf_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def boundary(self) -> np.ndarray:
        return self.values[-4:]


def safe_exp(y2):
    y2 = np.asarray(y2, dtype=float)
    if np.any(y2 > EXP_LIMIT) or not np.all(np.isfinite(y2)):
        raise DivergedIterate("log-density iterate overflowed")
    return np.exp(y2)


def rhs_f(y2, t, params: ModelParams, gamma: float, w_values=None):
    """Right-hand side ``beta^2 (y2 - w(t)) + gamma exp(y2)`` of the v'' equation."""
    w = params.w(t) if w_values is None else w_values
    return params.beta**2 * (np.asarray(y2) - w) + gamma * safe_exp(y2)


def _check_sizes(Y: StateVector, grid: Partition):
    size = grid.L + 1
    if not (len(Y.y1) == len(Y.y2) == len(Y.y3) == size):
        raise ValueError(f"state has {len(Y.y1)} nodes, grid has {size}")


def residual(Y: StateVector, grid: Partition, params: ModelParams, scheme: Scheme) -> ResidualReport:
    _check_sizes(Y, grid)
    scheme = Scheme(scheme)
    h = grid.steps
    jump = grid.jump_weights() / params.alpha
    e = safe_exp(Y.y2)
    f = params.beta**2 * (Y.y2 - params.w.on_grid(grid.nodes)) + Y.gamma * e
    d1, d2, d3 = np.diff(Y.y1), np.diff(Y.y2), np.diff(Y.y3)
    if scheme is Scheme.EULER:
        r1 = d1 - h * e[:-1]
        r2 = d2 - h * (Y.y3[:-1] - jump)
        r3 = d3 + jump - h * f[:-1]
    else:
        half = 0.5 * h
        r1 = d1 - half * (e[:-1] + e[1:])
        r2 = d2 - half * (Y.y3[:-1] - jump + Y.y3[1:])
        r3 = d3 + jump - half * (f[:-1] + f[1:])
    bc = [Y.y1[0], Y.y1[-1] - 1.0, Y.y3[0], Y.y3[-1]]
    return ResidualReport(np.concatenate([np.column_stack([r1, r2, r3]).ravel(), bc]))


def residual_euler(Y, grid, params):
    return residual(Y, grid, params, Scheme.EULER)


def residual_trapezoid(Y, grid, params):
    return residual(Y, grid, params, Scheme.TRAPEZOID)


def jacobian_entries(Y: StateVector, grid: Partition, params: ModelParams, scheme: Scheme):
    """Structural (row, col, value) triplets of the residual Jacobian."""
    _check_sizes(Y, grid)
    scheme = Scheme(scheme)
    L = grid.L
    k = np.arange(L)
    h = grid.steps
    e = safe_exp(Y.y2)
    fp = params.beta**2 + Y.gamma * e
    r1, r2, r3 = 3 * k, 3 * k + 1, 3 * k + 2
    c1, c2, c3 = 3 * k, 3 * k + 1, 3 * k + 2
    gcol = np.full(L, 3 * L + 3)
    ones = np.ones(L)
    rows = [r1, r1, r2, r2, r3, r3]
    cols = [c1 + 3, c1, c2 + 3, c2, c3 + 3, c3]
    vals = [ones, -ones, ones, -ones, ones, -ones]
    if scheme is Scheme.EULER:
        rows += [r1, r2, r3, r3]
        cols += [c2, c3, c2, gcol]
        vals += [-h * e[:-1], -h, -h * fp[:-1], -h * e[:-1]]
    else:
        half = 0.5 * h
        rows += [r1, r1, r2, r2, r3, r3, r3]
        cols += [c2, c2 + 3, c3, c3 + 3, c2, c2 + 3, gcol]
        vals += [
            -half * e[:-1], -half * e[1:],
            -half, -half,
            -half * fp[:-1], -half * fp[1:],
            -half * (e[:-1] + e[1:]),
        ]
    bc_rows = 3 * L + np.arange(4)
    bc_cols = np.array([0, 3 * L, 2, 3 * L + 2])
    rows = np.concatenate(rows + [bc_rows])
    cols = np.concatenate(cols + [bc_cols])
    vals = np.concatenate(vals + [np.ones(4)])
    return rows, cols, vals


def jacobian(Y: StateVector, grid: Partition, params: ModelParams, scheme: Scheme) -> sp.csr_matrix:
    """Exact sparse Jacobian of :func:`residual` with respect to the packed state."""
    rows, cols, vals = jacobian_entries(Y, grid, params, scheme)
    size = 3 * grid.L + 4
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
