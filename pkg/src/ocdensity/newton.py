"""Damped Newton iteration for the discretized boundary-value problem."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .baseline import kde_gaussian, normal_reference_bandwidth
from .data import SampleSet
from .partition import Partition
from .system import (
    DivergedIterate,
    ModelParams,
    Scheme,
    StateVector,
    jacobian_entries,
    residual,
)

log = logging.getLogger(__name__)

# band half-widths of the row-permuted Jacobian without the gamma column
LOWER, UPPER = 4, 3
PILOT_FLOOR = 1e-4
# above this many distinct points the pilot is computed from binned counts
PILOT_EXACT_MAX = 2000
PILOT_BINS = 4096


class SingularJacobian(np.linalg.LinAlgError):
    pass


class SolverDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 200
    damping: float = 0.5
    min_step: float = 1e-8
    scheme: Scheme = Scheme.TRAPEZOID
    continuation: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass
class SolveOutcome:
    solution: StateVector
    iterations: int
    final_residual: float
    converged: bool
    step_history: list[tuple[float, float]] = field(default_factory=list)
    grid: Partition | None = None
    params: ModelParams | None = None
    scheme: Scheme = Scheme.TRAPEZOID
    message: str = ""


# --- linear algebra ----------------------------------------------------------


def _block_order(L: int) -> np.ndarray:
    """Residual rows in banded order; the y1_L boundary row is left out as the border."""
    return np.concatenate([[3 * L, 3 * L + 2], np.arange(3 * L), [3 * L + 3]])


def solve_bordered(rows, cols, vals, rhs: np.ndarray, L: int) -> np.ndarray:
    """Solve ``J x = rhs`` given J's triplets, using a banded LU plus a 1x1 Schur complement.

    The gamma column and the ``y1_L = 1`` row are the only entries outside
    the band.  If the banded block alone is singular (e.g. beta = gamma = 0)
    the full sparse system is factorized instead.
    """
    size = 3 * L + 4
    m = size - 1
    gcol, brow = 3 * L + 3, 3 * L + 1
    pos = np.empty(size, dtype=int)
    order = _block_order(L)
    pos[order] = np.arange(m)
    pos[brow] = -1

    in_block = (rows != brow) & (cols != gcol)
    pr, pc = pos[rows[in_block]], cols[in_block]
    ab = np.zeros((LOWER + UPPER + 1, m))
    np.add.at(ab, (UPPER + pr - pc, pc), vals[in_block])

    c = np.zeros(m)
    sel = (cols == gcol) & (rows != brow)
    np.add.at(c, pos[rows[sel]], vals[sel])
    b = np.zeros(m)
    sel = (rows == brow) & (cols != gcol)
    np.add.at(b, cols[sel], vals[sel])
    d = vals[(rows == brow) & (cols == gcol)].sum()

    rhs_block = rhs[order]
    try:
        with np.errstate(all="raise"):
            z = scipy.linalg.solve_banded(
                (LOWER, UPPER), ab, np.column_stack([rhs_block, c]), check_finite=False
            )
        schur = d - b @ z[:, 1]
        scale = max(abs(d), np.abs(b).max(initial=0.0) * np.abs(z[:, 1]).max(initial=0.0), 1.0)
        if not np.all(np.isfinite(z)) or abs(schur) < 1e-14 * scale:
            raise np.linalg.LinAlgError("singular Schur complement")
    except (np.linalg.LinAlgError, FloatingPointError, ValueError):
        return _solve_sparse(rows, cols, vals, rhs, size)
    g = (rhs[brow] - b @ z[:, 0]) / schur
    x = np.empty(size)
    x[:gcol] = z[:, 0] - g * z[:, 1]
    x[gcol] = g
    return x


def _solve_sparse(rows, cols, vals, rhs, size):
    J = sp.csc_matrix((vals, (rows, cols)), shape=(size, size))
    try:
        lu = scipy.sparse.linalg.splu(J)
    except RuntimeError as exc:
        raise SingularJacobian(str(exc)) from None
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularJacobian("sparse LU produced non-finite values")
    return x


# --- starting points ---------------------------------------------------------


def flat_guess(grid: Partition, n: int, alpha: float) -> StateVector:
    size = grid.L + 1
    return StateVector(grid.nodes.copy(), np.zeros(size), np.zeros(size), n / alpha if n else 0.0)


def _binned_pilot(samples: SampleSet, bw: float, s: np.ndarray) -> np.ndarray:
    """Kernel estimate from sample counts on a uniform mesh; only a starting point."""
    edges = np.linspace(0.0, 1.0, PILOT_BINS + 1)
    counts, _ = np.histogram(samples.points, edges, weights=samples.counts)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dx = edges[1] - edges[0]
    half = int(np.ceil(8.0 * bw / dx))
    z = np.arange(-half, half + 1) * dx / bw
    kernel = np.exp(-0.5 * z * z)
    smooth = np.convolve(counts, kernel, mode="full")[half:half + PILOT_BINS]
    smooth /= samples.n * bw * np.sqrt(2.0 * np.pi)
    return np.interp(s, centers, smooth)


def initial_guess(samples: SampleSet, grid: Partition, params: ModelParams) -> StateVector:
    """Normalized Gaussian-KDE pilot with ``gamma = n / alpha``."""
    if samples.n == 0:
        return flat_guess(grid, 0, params.alpha)
    s = grid.nodes
    bw = normal_reference_bandwidth(samples.points)
    if samples.n_distinct > PILOT_EXACT_MAX:
        pilot = _binned_pilot(samples, bw, s)
    else:
        pilot = kde_gaussian(samples.points, bw, s).f
    y2 = np.log(np.maximum(pilot, PILOT_FLOOR))
    f = np.exp(y2)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * grid.steps * (f[:-1] + f[1:]))])
    y2 -= np.log(cum[-1])
    y1 = cum / cum[-1]
    y1[-1] = 1.0
    y3 = np.gradient(y2, s)
    return StateVector(y1, y2, y3, samples.n / params.alpha)


# --- Newton ------------------------------------------------------------------


def newton(
    Y0: StateVector, grid: Partition, params: ModelParams, config: SolverConfig
) -> SolveOutcome:
    """Plain damped Newton: full step first, halve until the residual does not grow."""
    L = grid.L
    x = Y0.pack()
    Y = Y0.copy()
    res = residual(Y, grid, params, config.scheme).values
    rnorm = float(np.max(np.abs(res)))
    history: list[tuple[float, float]] = [(rnorm, 1.0)]
    it = 0
    message = ""
    while rnorm > config.tol and it < config.max_iter:
        it += 1
        rows, cols, vals = jacobian_entries(Y, grid, params, config.scheme)
        try:
            dx = solve_bordered(rows, cols, vals, -res, L)
        except SingularJacobian as exc:
            raise SingularJacobian(f"singular Jacobian at iteration {it}: {exc}") from None
        lam = 1.0
        diverged = False
        while True:
            trial = StateVector.unpack(x + lam * dx)
            try:
                tres = residual(trial, grid, params, config.scheme).values
                tnorm = float(np.max(np.abs(tres)))
                diverged = False
            except DivergedIterate:
                tnorm, diverged = np.inf, True
            if tnorm <= rnorm:
                break
            lam *= config.damping
            if lam < config.min_step:
                break
        if lam < config.min_step:
            if diverged:
                raise SolverDiverged(f"iterate diverged at iteration {it} with damping floor reached")
            message = f"no residual decrease at iteration {it}"
            break
        x = x + lam * dx
        Y, res, rnorm = trial, tres, tnorm
        history.append((rnorm, lam))
        log.debug("newton it=%d |F|=%.3e lambda=%.3g", it, rnorm, lam)
    converged = rnorm <= config.tol
    if not converged and not message:
        message = f"max_iter={config.max_iter} reached"
    return SolveOutcome(
        Y, it, rnorm, converged, history, grid, params, config.scheme, message if not converged else ""
    )


def _try_newton(Y0, grid, params, config) -> SolveOutcome | None:
    try:
        return newton(Y0, grid, params, config)
    except (SolverDiverged, SingularJacobian) as exc:
        log.debug("newton failed: %s", exc)
        return None


def warm_start(prev: StateVector, n: int, alpha_prev: float, alpha: float) -> StateVector:
    """Reuse a solution at another alpha, shifting gamma by the change in n / alpha."""
    Y = prev.copy()
    Y.gamma = prev.gamma - n / alpha_prev + n / alpha
    return Y


def continuation(
    samples: SampleSet,
    grid: Partition,
    params: ModelParams,
    config: SolverConfig,
    start_factor: float = 10.0,
    max_depth: int = 8,
) -> SolveOutcome | None:
    """Flat start at a larger alpha, then walk alpha down to the target.

    A failed step between two alphas is retried through their geometric mean.
    """
    n = samples.n
    alpha = params.alpha
    big = alpha * start_factor
    base = None
    for _ in range(max_depth):
        p = replace(params, alpha=big)
        base = _try_newton(flat_guess(grid, n, big), grid, p, config)
        if base is not None and base.converged:
            break
        big *= start_factor
    if base is None or not base.converged:
        return None

    pending = [alpha]
    current, current_alpha = base, big
    total_iter = base.iterations
    history = list(base.step_history)
    while pending:
        a = pending[-1]
        Y0 = warm_start(current.solution, n, current_alpha, a)
        out = _try_newton(Y0, grid, replace(params, alpha=a), config)
        if out is not None and out.converged:
            pending.pop()
            current, current_alpha = out, a
            total_iter += out.iterations
            history += out.step_history
            continue
        mid = np.sqrt(a * current_alpha)
        if len(pending) > 40 or abs(np.log(current_alpha / mid)) < 1e-3:
            return None
        pending.append(mid)
    current.iterations = total_iter
    current.step_history = history
    return current


def solve(
    samples: SampleSet,
    grid: Partition,
    params: ModelParams,
    config: SolverConfig | None = None,
    initial: StateVector | None = None,
) -> SolveOutcome:
    """Solve the discrete boundary-value problem to ``config.tol`` in the residual inf-norm.

    Starts from ``initial`` if given, otherwise from :func:`initial_guess`.
    If that does not converge and ``config.continuation`` is set, falls back to
    a flat start with alpha-continuation.
    """
    config = config or SolverConfig()
    if grid.n != samples.n:
        raise ValueError("grid was not built from these samples")
    Y0 = initial if initial is not None else initial_guess(samples, grid, params)
    failure = None
    try:
        out = newton(Y0, grid, params, config)
    except (SolverDiverged, SingularJacobian) as exc:
        out, failure = None, exc
    if out is not None and out.converged:
        return out
    if config.continuation and samples.n > 0:
        log.info("direct Newton failed (%s); trying alpha-continuation",
                 failure or (out.message if out else ""))
        cont = continuation(samples, grid, params, config)
        if cont is not None:
            cont.params = params
            return cont
    if out is None:
        raise failure
    return out
