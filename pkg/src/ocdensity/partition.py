"""Stage-wise grid on [0, 1] with a node on every sample point."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SampleSet

# remainder steps shorter than this are folded into the sample node
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    nodes: np.ndarray
    data_indices: np.ndarray
    nominal_h: float
    data_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.data_weights is None:
            object.__setattr__(self, "data_weights", np.ones(self.data_indices.size))

    @property
    def L(self) -> int:
        return int(self.nodes.size - 1)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def n(self) -> int:
        """Number of samples, counted with multiplicity."""
        return int(round(self.data_weights.sum()))

    def jump_mask(self) -> np.ndarray:
        """Boolean mask over steps k = 0..L-1, true where k is a data index."""
        mask = np.zeros(self.L, dtype=bool)
        mask[self.data_indices] = True
        return mask

    def jump_weights(self) -> np.ndarray:
        """Sample multiplicity at each step start (zero off the data nodes)."""
        wts = np.zeros(self.L)
        wts[self.data_indices] = self.data_weights
        return wts

    def stage_bounds(self) -> list[tuple[int, int]]:
        """Node index ranges ``(first, last)`` of each stage (one more than the distinct samples)."""
        ends = [0, *self.data_indices.tolist(), self.L]
        return list(zip(ends[:-1], ends[1:]))


def build_partition(samples: SampleSet, nominal_h: float) -> Partition:
    """Grid each stage ``[t_{i-1}, t_i]`` with steps of ``nominal_h``.

    The last step in a stage is the remainder, so every stage ends exactly
    on its sample point and no step exceeds ``nominal_h``.
    """
    h = float(nominal_h)
    if not h > 0.0:
        raise ValueError("nominal_h must be positive")
    breaks = np.concatenate([[0.0], samples.points, [1.0]])
    pieces = []
    counts = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        m = max(int(np.ceil((b - a) / h)), 1)
        inner = a + h * np.arange(1, m)
        inner = inner[b - inner > MERGE_TOL]
        pieces.append(np.concatenate([[a], inner]))
        counts.append(inner.size + 1)
    pieces.append([1.0])
    nodes = np.concatenate(pieces)
    data_indices = np.cumsum(counts)[:-1]
    weights = np.asarray(samples.counts, dtype=float)
    for arr in (nodes, data_indices, weights):
        arr.setflags(write=False)
    return Partition(nodes, data_indices, h, weights)
