"""Brute-force reference: minimize the discretized penalized log-likelihood directly.

Nothing here uses the boundary-value formulation.  Nodal values of ``v`` on
a uniform grid are optimized by gradient descent, so agreement with the
Newton solver is independent evidence that the right stationary point was
found.

Convention: the objective's smoothness weight is ``alpha_P / n``.  Its
minimizer under the normalization ``int e^v = 1`` has slope drops of
``1 / (2 alpha_P)`` at the samples, so the boundary-value solution at
smoothness ``alpha`` is compared with ``alpha_P = alpha / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import SampleSet
from .system import ModelParams

MAX_ITER = 1_000_000


class OracleFailure(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class OracleResult:
    nodes: np.ndarray
    v: np.ndarray
    objective: float
    iterations: int
    grad_norm: float
    gamma_proxy: float
    objective_history: list[float] | None = None

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.v)


def uniform_nodes(count: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, count)


def sample_node_indices(samples: SampleSet, nodes: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    idx = np.clip(np.searchsorted(nodes, samples.points), 1, nodes.size - 1)
    idx = np.where(np.abs(nodes[idx - 1] - samples.points) < np.abs(nodes[idx] - samples.points), idx - 1, idx)
    bad = np.abs(nodes[idx] - samples.points) > tol
    if np.any(bad):
        raise ValueError(f"sample {samples.points[bad][0]!r} is not a grid node")
    return idx


def _weights(nodes):
    h = np.diff(nodes)
    q = np.zeros(nodes.size)
    q[:-1] += 0.5 * h
    q[1:] += 0.5 * h
    return h, q


def objective_P(v, samples: SampleSet, params: ModelParams, nodes, grad: bool = False):
    """Penalized negative log-likelihood on nodal values.

    ``-(1/n) sum v(t_i) + log int e^v + (alpha/n) int v'^2 + (alpha beta^2/n) int (v-w)^2``
    with trapezoidal integrals and forward-difference slopes.  For ``n = 0``
    the likelihood terms vanish and the two penalties are kept with weight
    ``alpha`` (the objective multiplied through by ``n``).
    """
    v = np.asarray(v, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    idx = sample_node_indices(samples, nodes)
    n = samples.n
    h, q = _weights(nodes)
    w = params.w.on_grid(nodes)
    scale = params.alpha / n if n else params.alpha
    dv = np.diff(v)
    r = v - w
    smooth = np.sum(dv * dv / h)
    struct = np.sum(q * r * r)
    value = scale * (smooth + params.beta**2 * struct)
    g = np.zeros_like(v)
    if n:
        vmax = v.max()
        ev = np.exp(v - vmax)
        Z = np.sum(q * ev)
        value += -np.dot(samples.counts, v[idx]) / n + np.log(Z) + vmax
        if grad:
            np.add.at(g, idx, -samples.counts / n)
            g += q * ev / Z
    if not grad:
        return float(value)
    flux = 2.0 * dv / h
    g[:-1] -= scale * flux
    g[1:] += scale * flux
    g += scale * 2.0 * params.beta**2 * q * r
    return float(value), g


def normalize(u: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    _, q = _weights(nodes)
    m = u.max()
    return u - (m + np.log(np.sum(q * np.exp(u - m))))


def _normalized_objective(u, samples, params, nodes):
    """Objective at ``v = u - log Q(e^u)`` and its gradient in ``u``."""
    _, q = _weights(nodes)
    v = normalize(u, nodes)
    val, gv = objective_P(v, samples, params, nodes, grad=True)
    p = q * np.exp(v)
    return val, gv - p * gv.sum(), v


def minimize_P(
    samples: SampleSet,
    params: ModelParams,
    nodes: int = 201,
    tol: float = 1e-7,
    max_iter: int = MAX_ITER,
) -> OracleResult:
    """Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.

    Minimizes the objective with smoothness ``params.alpha / 2`` over
    normalized ``v``, starting from ``v = 0``.  Accepted steps never increase
    the objective.
    """
    if nodes < samples.n_distinct + 2:
        raise ValueError("need at least n + 2 nodes")
    grid = uniform_nodes(nodes)
    inner = replace(params, alpha=params.alpha / 2.0)
    u = np.zeros(nodes)
    val, g, v = _normalized_objective(u, samples, inner, grid)
    step = 1.0
    it = 0
    gnorm = float(np.abs(g).max())
    history = [val]
    while gnorm > tol:
        if it >= max_iter:
            raise OracleFailure(f"iteration cap {max_iter} reached (|grad|={gnorm:.3e})", best=v)
        it += 1
        t = step
        gg = float(g @ g)
        while True:
            u_new = u - t * g
            val_new, g_new, v_new = _normalized_objective(u_new, samples, inner, grid)
            if val_new <= val - 1e-4 * t * gg:
                break
            t *= 0.5
            if t < 1e-300:
                raise OracleFailure("line search failed", best=v)
        s_k, y_k = u_new - u, g_new - g
        sy = float(s_k @ y_k)
        step = float(s_k @ s_k) / sy if sy > 0 else 2.0 * t
        u, val, g, v = u_new, val_new, g_new, v_new
        history.append(val)
        gnorm = float(np.abs(g).max())
    _, q = _weights(grid)
    gamma_proxy = samples.n / params.alpha - params.beta**2 * float(np.sum(q * (v - params.w.on_grid(grid))))
    return OracleResult(grid, v, float(val), it, gnorm, gamma_proxy, history)
