"""Command-line front end.

Subcommands: ``estimate`` (solve for a list of alphas), ``compare``
(Gaussian KDE and histogram baselines), ``verify`` (desk-scale verification
battery) and ``synth`` (write synthetic samples to a file).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baseline, diagnostics, studies
from .data import DataError, RawSamples, SampleSet, load_samples, rescale, sample_truncated_normal
from .newton import SingularJacobian, SolverConfig, SolverDiverged, solve, warm_start
from .partition import build_partition
from .system import ModelParams, NormalLogReference, ReferenceFunction, Scheme, ZeroReference

EXIT_OK, EXIT_FAIL, EXIT_NONCONVERGED, EXIT_BAD_INPUT = 0, 1, 2, 3

MANIFEST_COLUMNS = (
    "dataset", "n", "n_distinct", "h", "L", "alpha", "beta", "scheme",
    "gamma", "iterations", "residual", "converged", "cpu_time",
)

log = logging.getLogger("ocdensity")


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    synth: tuple[float, float, int] | None = None
    alphas: list[float] = field(default_factory=list)
    beta: float = 1.0
    w: ReferenceFunction = field(default_factory=ZeroReference)
    h: float = 0.0005
    scheme: Scheme = Scheme.TRAPEZOID
    margin: float = 0.05
    tol: float = 1e-10
    max_iter: int = 200
    seed: int = 0
    out: Path = Path("out")
    jobs: int = 1
    bandwidths: list[float] = field(default_factory=list)
    nbins: int | None = None
    diagnose: bool = True


# --- flag parsing --------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _synth_spec(text: str) -> tuple[float, float, int]:
    kind, _, rest = text.partition(":")
    parts = rest.split(",")
    if kind != "normal" or len(parts) != 3:
        raise argparse.ArgumentTypeError("expected normal:MU,SIGMA2,N")
    try:
        mu, sigma2, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad synthetic spec {text!r}")
    if sigma2 <= 0 or n < 0:
        raise argparse.ArgumentTypeError("need SIGMA2 > 0 and N >= 0")
    return mu, sigma2, n


def _w_spec(text: str) -> ReferenceFunction:
    if text == "zero":
        return ZeroReference()
    kind, _, rest = text.partition(":")
    parts = rest.split(",")
    if kind != "normal" or len(parts) != 2:
        raise argparse.ArgumentTypeError("expected zero or normal:MU,SIGMA2")
    try:
        return NormalLogReference(float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive(kind):
    def conv(text):
        val = kind(text)
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text}")
        return val
    return conv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocdensity", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--input", metavar="PATH")
        src.add_argument("--synth", type=_synth_spec, metavar="normal:MU,SIGMA2,N")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--margin", type=float, default=0.05)
        p.add_argument("--h", type=_positive(float), default=0.0005)
        p.add_argument("--out", type=Path, default=Path("out"))

    def solver_flags(p):
        p.add_argument("--beta", type=float, default=1.0)
        p.add_argument("--w", type=_w_spec, default=ZeroReference(), metavar="zero|normal:MU,SIGMA2")
        p.add_argument("--scheme", type=Scheme, choices=list(Scheme), default=Scheme.TRAPEZOID,
                       metavar="{euler,trapezoid}")
        p.add_argument("--tol", type=_positive(float), default=1e-10)
        p.add_argument("--max-iter", type=_positive(int), default=200)

    est = sub.add_parser("estimate", help="solve the boundary-value problem for each alpha")
    data_flags(est)
    solver_flags(est)
    est.add_argument("--alpha", type=_float_list, required=True, metavar="LIST")
    est.add_argument("--jobs", type=_positive(int), default=1)
    est.add_argument("--no-diagnose", dest="diagnose", action="store_false")

    cmp_ = sub.add_parser("compare", help="Gaussian KDE and histogram baselines")
    data_flags(cmp_)
    cmp_.add_argument("--bw", dest="bandwidths", type=_float_list, default=None, metavar="LIST")
    cmp_.add_argument("--nbins", type=_positive(int), default=None)

    ver = sub.add_parser("verify", help="run the verification battery")
    ver.add_argument("--scheme", type=Scheme, choices=list(Scheme), default=Scheme.TRAPEZOID,
                     metavar="{euler,trapezoid}")

    syn = sub.add_parser("synth", help="write truncated-normal samples to a file")
    syn.add_argument("--synth", type=_synth_spec, required=True, metavar="normal:MU,SIGMA2,N")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--output", type=Path, required=True)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    for name in ("input", "synth", "beta", "w", "h", "scheme", "margin", "tol", "seed",
                 "out", "jobs", "nbins", "diagnose"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if hasattr(args, "max_iter"):
        cfg.max_iter = args.max_iter
    if getattr(args, "alpha", None):
        cfg.alphas = list(args.alpha)
    if getattr(args, "bandwidths", None):
        cfg.bandwidths = list(args.bandwidths)
    if cfg.command in ("estimate", "compare") and not 0.0 <= cfg.margin < 0.5:
        raise UsageError("--margin must lie in [0, 0.5)")
    if cfg.command == "estimate" and any(a <= 0 for a in cfg.alphas):
        raise UsageError("every alpha must be positive")
    if cfg.beta < 0:
        raise UsageError("--beta must be nonnegative")
    return cfg


# --- data --------------------------------------------------------------------


def read_raw(cfg: RunConfig) -> RawSamples:
    if cfg.input is not None:
        return load_samples(cfg.input, label=Path(cfg.input).stem)
    mu, sigma2, n = cfg.synth
    raw = sample_truncated_normal(n, mu, sigma2, cfg.seed)
    return RawSamples(raw.values, f"normal_n{n}_seed{cfg.seed}")


def to_sample_set(cfg: RunConfig, raw: RawSamples) -> SampleSet:
    if cfg.synth is not None:
        # synthetic draws already live on [0, 1]
        if len(raw) == 0:
            return SampleSet.empty(raw.label)
        return rescale(raw, domain=(0.0, 1.0))
    return rescale(raw, cfg.margin)


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_tsv(path: Path, header, columns):
    rows = zip(*columns)
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _alpha_tag(alpha: float) -> str:
    return f"alpha{alpha:g}"


def append_manifest(path: Path, rows: list[dict]):
    new = not path.exists()
    with open(path, "a") as fh:
        if new:
            fh.write("\t".join(MANIFEST_COLUMNS) + "\n")
        for row in rows:
            fh.write("\t".join(
                _fmt(row[c]) if isinstance(row[c], float) else str(row[c]) for c in MANIFEST_COLUMNS
            ) + "\n")


# --- subcommands ---------------------------------------------------------------


def run_estimate(cfg: RunConfig) -> int:
    raw = read_raw(cfg)
    samples = to_sample_set(cfg, raw)
    grid = build_partition(samples, cfg.h)
    solver = SolverConfig(tol=cfg.tol, max_iter=cfg.max_iter, scheme=cfg.scheme)
    cfg.out.mkdir(parents=True, exist_ok=True)
    label = samples.label or "samples"
    alphas = sorted(set(cfg.alphas), reverse=True)
    if samples.merged_duplicates:
        log.warning("%d duplicate samples merged into weighted points", samples.merged_duplicates)

    def run_one(alpha, initial=None):
        params = ModelParams(alpha, cfg.beta, cfg.w)
        start = time.process_time()
        try:
            out = solve(samples, grid, params, solver, initial=initial)
        except (SolverDiverged, SingularJacobian) as exc:
            log.error("alpha=%g: %s", alpha, exc)
            return alpha, None, time.process_time() - start
        return alpha, out, time.process_time() - start

    results = []
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_one, alphas))
    else:
        prev = None
        for alpha in alphas:
            initial = None
            if prev is not None and prev[1] is not None and prev[1].converged:
                initial = warm_start(prev[1].solution, samples.n, prev[0], alpha)
            res = run_one(alpha, initial)
            results.append(res)
            prev = res

    status = EXIT_OK
    rows = []
    for alpha, out, cpu in results:
        stem = f"{label}_{_alpha_tag(alpha)}"
        if out is None:
            status = EXIT_NONCONVERGED
            rows.append(_manifest_row(samples, grid, cfg, alpha, None, cpu))
            continue
        if not out.converged:
            status = EXIT_NONCONVERGED
            log.error("alpha=%g did not converge: %s", alpha, out.message)
        suffix = "" if out.converged else ".unconverged"
        Y = out.solution
        s = grid.nodes
        f = np.exp(Y.y2)
        write_tsv(
            cfg.out / (stem + ".tsv" + suffix),
            ("t_unit", "t_original", "f_unit", "f_original", "F", "v", "vdot"),
            (s, samples.to_unit.inverse(s), f, f * samples.to_unit.scale, Y.y1, Y.y2, Y.y3),
        )
        if cfg.diagnose and out.converged:
            report = diagnostics.diagnose(out, samples)
            (cfg.out / (stem + ".diag.txt")).write_text(report.to_text())
        rows.append(_manifest_row(samples, grid, cfg, alpha, out, cpu))
        log.info("alpha=%g gamma=%.6g iterations=%d residual=%.2e", alpha, Y.gamma,
                 out.iterations, out.final_residual)
    append_manifest(cfg.out / "manifest.tsv", rows)
    return status


def _manifest_row(samples, grid, cfg, alpha, out, cpu):
    return {
        "dataset": samples.label or "samples",
        "n": samples.n,
        "n_distinct": samples.n_distinct,
        "h": cfg.h,
        "L": grid.L,
        "alpha": float(alpha),
        "beta": float(cfg.beta),
        "scheme": cfg.scheme.value,
        "gamma": float(out.solution.gamma) if out else float("nan"),
        "iterations": out.iterations if out else -1,
        "residual": float(out.final_residual) if out else float("nan"),
        "converged": bool(out and out.converged),
        "cpu_time": float(cpu),
    }


def run_compare(cfg: RunConfig) -> int:
    raw = read_raw(cfg)
    if len(raw) == 0:
        raise DataError("no samples")
    samples = to_sample_set(cfg, raw)
    grid = build_partition(samples, cfg.h)
    t_orig = samples.to_unit.inverse(grid.nodes)
    cfg.out.mkdir(parents=True, exist_ok=True)
    label = samples.label or "samples"
    bandwidths = cfg.bandwidths or [baseline.normal_reference_bandwidth(raw)]
    for bw in bandwidths:
        est = baseline.kde_gaussian(raw, bw, t_orig)
        write_tsv(cfg.out / f"{label}_kde_bw{bw:g}.tsv", ("t_original", "f_original"), (t_orig, est.f))
    hist = baseline.histogram(raw, cfg.nbins)
    write_tsv(
        cfg.out / f"{label}_histogram.tsv",
        ("bin_left", "bin_right", "density", "count"),
        (hist.bin_edges[:-1], hist.bin_edges[1:], hist.densities, hist.counts),
    )
    return EXIT_OK


def verification_checks(scheme: Scheme):
    """Yield ``(name, passed, detail)`` for the desk-scale battery."""
    rng = np.random.default_rng(0)
    small = build_partition(SampleSet(np.array([0.37, 0.71])), 0.1)
    for sch in Scheme:
        errs = [
            studies.fd_jacobian_error(studies.random_state(small, rng), small,
                                      ModelParams(0.7, 1.3), sch)
            for _ in range(3)
        ]
        yield f"jacobian_fd_{sch.value}", max(errs) <= 1e-6, f"max error {max(errs):.2e}"

    empty = SampleSet.empty()
    grid0 = build_partition(empty, 1 / 2000)
    out0 = solve(empty, grid0, ModelParams(1.0), SolverConfig(scheme=scheme))
    ok = (out0.converged and out0.iterations <= 2 and out0.final_residual <= 1e-12
          and np.abs(out0.solution.y2).max() == 0 and out0.solution.gamma == 0)
    yield "trivial_no_data", ok, f"iterations {out0.iterations}, residual {out0.final_residual:.1e}"

    cmp_ = studies.oracle_agreement(scheme=Scheme.TRAPEZOID)
    yield "oracle_agreement", cmp_.sup_density_gap <= 1e-2, f"sup gap {cmp_.sup_density_gap:.2e}"

    expected = 1.0 if scheme is Scheme.EULER else 2.0
    study = studies.convergence_order(scheme)
    yield (f"order_{scheme.value}", abs(study.order - expected) <= 0.3,
           f"observed {study.order:.3f}, expected {expected:.1f} +- 0.3")

    samples = SampleSet(np.array([0.3, 0.7]))
    params = ModelParams(1.0, 1.0)
    h = 1 / 2000
    grid = build_partition(samples, h)
    out = solve(samples, grid, params, SolverConfig(scheme=scheme))
    gres = diagnostics.gamma_identity_residual(out, grid, params, samples.n)
    bound = 50 * h**2 * (1 + abs(out.solution.gamma))
    if scheme is Scheme.EULER:
        bound = 50 * h * (1 + abs(out.solution.gamma))
    yield "gamma_identity", abs(gres) <= bound, f"residual {gres:.2e}, bound {bound:.2e}"
    jc = diagnostics.jump_check(out, grid, params)
    jtol = 0.05 if scheme is Scheme.TRAPEZOID else 0.2
    yield "jump_sizes", jc.max_relative_deviation <= jtol, f"max rel deviation {jc.max_relative_deviation:.2e}"
    red = diagnostics.order_reduction_residual(out, grid, params)
    rbound = 100 * h * max(abs(out.solution.gamma), 1.0)
    yield "order_reduction", red.max() <= rbound, f"max {red.max():.2e}, bound {rbound:.2e}"


def run_verify(cfg: RunConfig) -> int:
    failed = 0
    for name, ok, detail in verification_checks(cfg.scheme):
        print(f"{'PASS' if ok else 'FAIL'}\t{name}\t{detail}", flush=True)
        failed += not ok
    return EXIT_OK if not failed else EXIT_FAIL


def run_synth(args) -> int:
    mu, sigma2, n = args.synth
    raw = sample_truncated_normal(n, mu, sigma2, args.seed)
    with open(args.output, "w") as fh:
        fh.write(f"# truncated normal mu={mu} sigma2={sigma2} n={n} seed={args.seed}\n")
        for x in raw.values:
            fh.write(_fmt(x) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return run_synth(args)
        cfg = config_from_args(args)
        if cfg.command == "estimate":
            return run_estimate(cfg)
        if cfg.command == "compare":
            return run_compare(cfg)
        return run_verify(cfg)
    except (DataError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
