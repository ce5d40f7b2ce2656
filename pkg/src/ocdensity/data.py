"""Sample loading, synthetic sampling and mapping onto the unit interval."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable

import numpy as np


class DataError(ValueError):
    """Raised for unreadable or unusable sample data."""


@dataclass(frozen=True)
class RawSamples:
    values: tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not all(np.isfinite(vals)):
            raise DataError("samples must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def empty(cls, label: str = "") -> "RawSamples":
        return cls((), label)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class AffineMap:
    """Map ``u = (x - shift) * scale`` from original units to the unit interval."""

    shift: float = 0.0
    scale: float = 1.0

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.shift) * self.scale

    def inverse(self, u):
        return np.asarray(u, dtype=float) / self.scale + self.shift


@dataclass(frozen=True)
class SampleSet:
    """Distinct sample locations in (0, 1) with their multiplicities.

    ``n`` counts samples with multiplicity; ``n_distinct`` counts locations.
    """

    points: np.ndarray
    to_unit: AffineMap = field(default_factory=AffineMap)
    merged_duplicates: int = 0
    label: str = ""
    counts: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise DataError("points must be one-dimensional")
        if pts.size:
            if pts[0] <= 0.0 or pts[-1] >= 1.0:
                raise DataError("sample points must lie strictly inside (0, 1)")
            if np.any(np.diff(pts) <= 0.0):
                raise DataError("sample points must be strictly increasing")
        counts = np.ones(pts.size, dtype=int) if self.counts is None else np.asarray(self.counts, dtype=int)
        if counts.shape != pts.shape or np.any(counts < 1):
            raise DataError("counts must be positive integers, one per point")
        if self.merged_duplicates != int(counts.sum()) - pts.size:
            object.__setattr__(self, "merged_duplicates", int(counts.sum()) - pts.size)
        pts.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def n_distinct(self) -> int:
        return int(self.points.size)

    @classmethod
    def empty(cls, label: str = "") -> "SampleSet":
        return cls(np.empty(0), AffineMap(), 0, label, np.empty(0, dtype=int))

    def original_points(self) -> np.ndarray:
        return self.to_unit.inverse(self.points)


def parse_samples(lines: Iterable[str], label: str = "") -> RawSamples:
    values = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise DataError(f"line {lineno}: cannot parse {text!r} as a number") from None
    if not values:
        raise DataError("no samples")
    return RawSamples(tuple(values), label)


def load_samples(source: BinaryIO | str, label: str | None = None) -> RawSamples:
    """Read one decimal number per line from a byte stream or a file path.

    Blank lines and lines starting with ``#`` are skipped.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            return load_samples(fh, label if label is not None else str(source))
    text = io.TextIOWrapper(source, encoding="utf-8")
    try:
        return parse_samples(text, label or "")
    finally:
        text.detach()


def rescale(
    raw: RawSamples,
    margin: float = 0.05,
    domain: tuple[float, float] | None = None,
) -> SampleSet:
    """Map samples affinely into (0, 1), merging exact duplicates.

    A merged location keeps its multiplicity in ``counts``.
    By default the extreme samples land on ``margin`` and ``1 - margin``.
    With an explicit ``domain=(a, b)`` the map sends ``a`` to 0 and ``b`` to 1
    instead and ``margin`` is ignored.
    """
    if len(raw) == 0:
        raise DataError("no samples")
    x, counts = np.unique(raw.as_array(), return_counts=True)
    merged = len(raw) - x.size
    if domain is not None:
        a, b = map(float, domain)
        if not b > a:
            raise DataError("domain must satisfy a < b")
        amap = AffineMap(a, 1.0 / (b - a))
    else:
        if not 0.0 <= margin < 0.5:
            raise DataError("margin must lie in [0, 0.5)")
        lo, hi = x[0], x[-1]
        if hi == lo:
            raise DataError("degenerate range: all samples are identical")
        scale = (1.0 - 2.0 * margin) / (hi - lo)
        amap = AffineMap(lo - margin / scale, scale)
    pts = amap.forward(x)
    if domain is None:
        # pin the extremes so they do not drift off by rounding
        pts[0], pts[-1] = margin, 1.0 - margin
    if pts[0] <= 0.0 or pts[-1] >= 1.0:
        raise DataError("a sample falls on the boundary of [0, 1]; use a positive margin")
    if np.any(np.diff(pts) <= 0.0):
        raise DataError("distinct samples collapsed after rescaling")
    return SampleSet(pts, amap, merged, raw.label, counts)


def sample_truncated_normal(n: int, mu: float, sigma2: float, seed: int) -> RawSamples:
    """Draw ``n`` values from N(mu, sigma2) conditioned on [0, 1] by rejection."""
    if sigma2 <= 0:
        raise DataError("sigma2 must be positive")
    if n < 0:
        raise DataError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(sigma2)
    out = np.empty(0)
    for _ in range(10_000):
        if out.size >= n:
            break
        need = n - out.size
        draw = rng.normal(mu, sigma, size=max(2 * need, 16))
        draw = draw[(draw >= 0.0) & (draw <= 1.0)]
        out = np.concatenate([out, draw[:need]])
    else:
        raise DataError("acceptance rate too low for rejection sampling")
    return RawSamples(tuple(out.tolist()), f"normal({mu},{sigma2}) n={n} seed={seed}")
