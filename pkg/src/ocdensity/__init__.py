"""Density estimation by solving a boundary-value problem with jumps at the samples."""
from .baseline import histogram, kde_gaussian
from .data import RawSamples, SampleSet, load_samples, rescale, sample_truncated_normal
from .diagnostics import diagnose, extract_density
from .newton import SolverConfig, SolveOutcome, solve
from .partition import Partition, build_partition
from .system import ModelParams, NormalLogReference, Scheme, TabulatedReference, ZeroReference

__all__ = [
    "ModelParams", "NormalLogReference", "Partition", "RawSamples", "SampleSet", "Scheme",
    "SolveOutcome", "SolverConfig", "TabulatedReference", "ZeroReference", "build_partition",
    "diagnose", "extract_density", "histogram", "kde_gaussian", "load_samples", "rescale",
    "sample_truncated_normal", "solve",
]
