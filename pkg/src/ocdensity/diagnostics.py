"""Density extraction and a posteriori checks on converged solutions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .data import SampleSet
from .newton import SolveOutcome
from .partition import Partition
from .system import ModelParams


class NotConverged(ValueError):
    pass


def trapezoid(values: np.ndarray, nodes: np.ndarray) -> float:
    return float(np.sum(0.5 * np.diff(nodes) * (values[:-1] + values[1:])))


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    f: np.ndarray
    F: np.ndarray
    v: np.ndarray
    vdot: np.ndarray
    original_grid: np.ndarray
    f_original: np.ndarray


def _require_converged(sol: SolveOutcome):
    if not sol.converged:
        raise NotConverged("solution did not converge")


def extract_density(sol: SolveOutcome, samples: SampleSet) -> DensityEstimate:
    _require_converged(sol)
    Y = sol.solution
    s = sol.grid.nodes
    f = np.exp(Y.y2)
    amap = samples.to_unit
    return DensityEstimate(
        grid=s.copy(),
        f=f,
        F=Y.y1.copy(),
        v=Y.y2.copy(),
        vdot=Y.y3.copy(),
        original_grid=amap.inverse(s),
        f_original=f * amap.scale,
    )


def gamma_identity_residual(sol: SolveOutcome, grid: Partition, params: ModelParams, n: int) -> float:
    """``gamma - n/alpha + beta^2 * Q(v - w)`` with trapezoidal Q; zero in the continuum."""
    _require_converged(sol)
    Y = sol.solution
    q = trapezoid(Y.y2 - params.w.on_grid(grid.nodes), grid.nodes)
    return Y.gamma - n / params.alpha + params.beta**2 * q


def _extrapolate(s, y, i0, i1, at):
    return y[i1] + (y[i1] - y[i0]) * (at - s[i1]) / (s[i1] - s[i0])


def one_sided_slopes(sol: SolveOutcome, grid: Partition):
    """Extrapolated ``(vdot(t_j-), vdot(t_j+))`` per sample; NaN where a stage is too short.

    The stored y3 at a data node is the pre-jump value, so the left side
    uses nodes k-2, k-1 and the right side k+1, k+2, never the node itself.
    """
    s, y3 = grid.nodes, sol.solution.y3
    T = grid.data_indices
    ends = np.concatenate([[0], T, [grid.L]])
    left = np.full(T.size, np.nan)
    right = np.full(T.size, np.nan)
    for j, k in enumerate(T):
        lo = ends[j] + (1 if j > 0 else 0)
        if k - 2 >= lo:
            left[j] = _extrapolate(s, y3, k - 2, k - 1, s[k])
        if k + 2 <= ends[j + 2]:
            right[j] = _extrapolate(s, y3, k + 2, k + 1, s[k])
    return left, right


@dataclass(frozen=True)
class JumpCheck:
    max_relative_deviation: float
    relative_deviations: np.ndarray
    skipped: tuple[int, ...]


def jump_check(sol: SolveOutcome, grid: Partition, params: ModelParams) -> JumpCheck:
    """Compare extrapolated slope drops at the sample points with ``multiplicity / alpha``."""
    _require_converged(sol)
    left, right = one_sided_slopes(sol, grid)
    expected = grid.data_weights / params.alpha
    dev = np.abs((left - right) - expected) / expected
    ok = np.isfinite(dev)
    skipped = tuple(int(j) for j in np.flatnonzero(~ok))
    worst = float(dev[ok].max()) if ok.any() else 0.0
    return JumpCheck(worst, dev, skipped)


def order_reduction_residual(sol: SolveOutcome, grid: Partition, params: ModelParams) -> np.ndarray:
    """Per-stage max of ``|vdot^2 - beta^2 v^2 - 2 gamma e^v - C_i|`` for ``w = 0``.

    The stage constants start from ``C_0 = -beta^2 v(0)^2 - 2 gamma e^{v(0)}``
    and are updated across each sample by ``C_i = C_{i-1} - 2 J vdot(t_i-) + J^2``
    with ``J`` the slope drop there.
    """
    if not params.w.is_zero:
        raise ValueError("order reduction requires w ≡ 0")
    _require_converged(sol)
    Y = sol.solution
    b2, g = params.beta**2, Y.gamma
    first_integral = Y.y3**2 - b2 * Y.y2**2 - 2.0 * g * np.exp(Y.y2)
    left, _ = one_sided_slopes(sol, grid)
    T = grid.data_indices
    jumps = grid.data_weights / params.alpha
    C = -b2 * Y.y2[0] ** 2 - 2.0 * g * np.exp(Y.y2[0])
    ends = np.concatenate([[0], T, [grid.L]])
    out = np.empty(T.size + 1)
    out[0] = np.max(np.abs(first_integral[: ends[1] + 1] - C))
    for j, k in enumerate(T):
        vminus = left[j] if np.isfinite(left[j]) else Y.y3[k]
        C = C - 2.0 * jumps[j] * vminus + jumps[j] ** 2
        stage = slice(k + 1, ends[j + 2] + 1)
        post = (Y.y3[k] - jumps[j]) ** 2 - b2 * Y.y2[k] ** 2 - 2.0 * g * np.exp(Y.y2[k])
        resid = np.abs(first_integral[stage] - C)
        out[j + 1] = max(abs(post - C), resid.max(initial=0.0))
    return out


def interior_maxima(f: np.ndarray) -> np.ndarray:
    """Indices k with ``f[k-1] < f[k] > f[k+1]``."""
    f = np.asarray(f)
    mid = f[1:-1]
    return np.flatnonzero((mid > f[:-2]) & (mid > f[2:])) + 1


def modes(f: np.ndarray, rel_prominence: float = 0.01) -> np.ndarray:
    """Interior maxima whose topographic prominence is at least ``rel_prominence * max f``.

    Between samples the log-density is convex and it kinks downward at
    every sample, so dense data leave shallow ripples near each peak.
    Prominence filtering separates them from genuine modes.
    """
    f = np.asarray(f)
    peaks, _ = find_peaks(f, prominence=rel_prominence * f.max())
    return peaks


@dataclass
class DiagnosticsReport:
    gamma_identity_residual: float
    jump_deviation_max: float
    normalization_error: float
    boundary_errors: tuple[float, float, float, float]
    order_reduction_residuals: np.ndarray | None = None
    skipped_jumps: tuple[int, ...] = field(default_factory=tuple)

    def to_text(self) -> str:
        lines = [
            f"gamma_identity_residual\t{self.gamma_identity_residual:.17g}",
            f"jump_deviation_max\t{self.jump_deviation_max:.17g}",
            f"normalization_error\t{self.normalization_error:.17g}",
        ]
        names = ("F0", "FL_minus_1", "vdot0", "vdotL")
        lines += [f"boundary_{k}\t{v:.17g}" for k, v in zip(names, self.boundary_errors)]
        if self.order_reduction_residuals is not None:
            lines.append(f"order_reduction_max\t{np.max(self.order_reduction_residuals):.17g}")
        lines.append("skipped_jumps\t" + ",".join(map(str, self.skipped_jumps)))
        return "\n".join(lines) + "\n"


def diagnose(sol: SolveOutcome, samples: SampleSet) -> DiagnosticsReport:
    _require_converged(sol)
    grid, params, Y = sol.grid, sol.params, sol.solution
    jc = jump_check(sol, grid, params) if grid.data_indices.size else JumpCheck(0.0, np.empty(0), ())
    return DiagnosticsReport(
        gamma_identity_residual=gamma_identity_residual(sol, grid, params, samples.n),
        jump_deviation_max=jc.max_relative_deviation,
        normalization_error=trapezoid(np.exp(Y.y2), grid.nodes) - 1.0,
        boundary_errors=(Y.y1[0], Y.y1[-1] - 1.0, Y.y3[0], Y.y3[-1]),
        order_reduction_residuals=(
            order_reduction_residual(sol, grid, params) if params.w.is_zero else None
        ),
        skipped_jumps=jc.skipped,
    )
