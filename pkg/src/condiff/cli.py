"""Command-line front end: generate, validate, stats, spectrum, export-field.

Exit codes are a stable contract: 0 success, 1 usage error, 2 generation
or I/O error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import CondiffError, DomainError
from .fields import CANONICAL_BOUNDS, CoefficientField
from .fvm import assemble
from .grf import ScalarField
from .pipeline import (
    DatasetConfig,
    dataset_stats,
    generate_dataset,
    read_manifest,
    read_sample_arrays,
    validate_dataset,
)
from .sparse import estimate_extreme_eigenvalues

log = logging.getLogger("condiff")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ERROR = 2
EXIT_INVALID = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads_default() -> int:
    env = os.environ.get("CONDIFF_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="condiff", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a dataset", parents=[])
    gen.add_argument("--config", type=Path, help="JSON config (or manifest) to replay")
    gen.add_argument("--family", choices=["cubic", "exponential", "gaussian"])
    gen.add_argument("--variance", type=float)
    gen.add_argument("--grid", type=int, help="cells per side")
    gen.add_argument("--correlation-length", type=float)
    gen.add_argument("--train", type=int, help="training samples (default 1000)")
    gen.add_argument("--test", type=int, help="test samples (default 200)")
    gen.add_argument("--seed", type=int, help="master seed (default 0)")
    gen.add_argument("--contrast-min", type=float)
    gen.add_argument("--contrast-max", type=float)
    gen.add_argument("--solver-tol", type=float)
    gen.add_argument("--max-attempts", type=int)
    gen.add_argument("--threads", type=int, default=None,
                     help="worker processes (default $CONDIFF_THREADS or 1)")
    gen.add_argument("--out", type=Path, required=True, help="output directory")
    gen.set_defaults(func=cmd_generate)

    val = sub.add_parser("validate", help="re-check checksums, bounds, residuals")
    val.add_argument("dataset", type=Path)
    val.set_defaults(func=cmd_validate)

    st = sub.add_parser("stats", help="contrast summary and histogram")
    st.add_argument("dataset", type=Path)
    st.add_argument("--bins", type=int, default=30)
    st.add_argument("--histogram", type=Path, help="write histogram CSV here")
    st.set_defaults(func=cmd_stats)

    sp = sub.add_parser("spectrum", help="extreme eigenvalues of one sample's matrix")
    sp.add_argument("dataset", type=Path)
    sp.add_argument("--index", type=int, required=True)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.set_defaults(func=cmd_spectrum)

    ex = sub.add_parser("export-field", help="write one sample's fields as PGM + CSV")
    ex.add_argument("dataset", type=Path)
    ex.add_argument("--index", type=int, required=True)
    ex.add_argument("--out", type=Path, required=True)
    ex.add_argument("--log-k", action="store_true", help="export k on a log scale")
    ex.set_defaults(func=cmd_export_field)
    return parser


def _config_from_args(parser, args) -> DatasetConfig:
    base = {}
    if args.config is not None:
        try:
            base = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if "config" in base and isinstance(base["config"], dict):
            base = base["config"]
    overrides = {
        "family": args.family,
        "variance": args.variance,
        "grid_n": args.grid,
        "correlation_length": args.correlation_length,
        "n_train": args.train,
        "n_test": args.test,
        "master_seed": args.seed,
        "solver_tol": args.solver_tol,
        "max_rejection_attempts": args.max_attempts,
        "contrast_lower": args.contrast_min,
        "contrast_upper": args.contrast_max,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    for required in ("family", "variance", "grid_n"):
        if base.get(required) is None:
            parser.error(f"missing --{required.replace('_n', '').replace('_', '-')}")
    has_lower = base.get("contrast_lower") is not None
    has_upper = base.get("contrast_upper") is not None
    if has_lower != has_upper:
        parser.error("--contrast-min and --contrast-max must be given together")
    if not has_lower and base["variance"] not in CANONICAL_BOUNDS:
        parser.error(
            f"variance {base['variance']} is not canonical "
            f"({sorted(CANONICAL_BOUNDS)}); pass --contrast-min/--contrast-max"
        )
    try:
        return DatasetConfig.from_json_dict(base)
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        parser.error(f"invalid configuration: {exc}")


def cmd_generate(parser, args) -> int:
    config = _config_from_args(parser, args)
    workers = args.threads if args.threads is not None else _threads_default()
    start = time.perf_counter()
    progress = (lambda s: log.info("sample %d: contrast %.4g, %d attempt(s)",
                                   s.index, s.contrast, s.rejection_attempts))
    manifest = generate_dataset(config, args.out, workers=workers, log=progress)
    elapsed = time.perf_counter() - start
    stats = manifest.stats_dict()["all"]
    print(
        f"wrote {stats['count']} samples (train {config.n_train} / test "
        f"{config.n_test}, grid {config.grid_n}) to {args.out} in {elapsed:.1f} s; "
        f"contrast min/mean/max = {stats['min']:.4g} / {stats['mean']:.4g} / "
        f"{stats['max']:.4g}"
    )
    return EXIT_OK


def cmd_validate(parser, args) -> int:
    if not args.dataset.is_dir():
        parser.error(f"{args.dataset} is not a dataset directory")
    issues = validate_dataset(args.dataset)
    if not issues:
        print(f"{args.dataset}: OK")
        return EXIT_OK
    for issue in issues:
        print(f"{issue.kind}: {issue.message}", file=sys.stderr)
    print(f"{args.dataset}: {len(issues)} violation(s)", file=sys.stderr)
    return EXIT_INVALID


def cmd_stats(parser, args) -> int:
    manifest = read_manifest(args.dataset)
    report = dataset_stats(manifest, bins=args.bins)
    print(f"{'split':<6} {'count':>6} {'min':>12} {'mean':>12} {'max':>12}")
    for split in ("train", "test", "all"):
        s = report.per_split[split]
        print(f"{split:<6} {s['count']:>6d} {s['min']:>12.5g} {s['mean']:>12.5g} "
              f"{s['max']:>12.5g}")
    if args.histogram is not None:
        with open(args.histogram, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lower", "bin_upper", "count"])
            for lo, hi, c in zip(report.bin_edges[:-1], report.bin_edges[1:], report.counts):
                writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        print(f"histogram ({args.bins} bins) written to {args.histogram}")
    return EXIT_OK


def _load_sample(parser, args):
    manifest = read_manifest(args.dataset)
    if not 0 <= args.index < len(manifest.samples):
        parser.error(f"--index {args.index} out of range [0, {len(manifest.samples)})")
    k, f, u = read_sample_arrays(args.dataset, manifest, args.index, verify=True)
    return manifest, k, f, u


def cmd_spectrum(parser, args) -> int:
    manifest, k_arr, f_arr, _ = _load_sample(parser, args)
    grid = manifest.config.grid()
    phi = ScalarField(grid, np.log(k_arr))
    coeff = CoefficientField(grid, k_arr.ravel(), phi)
    problem = assemble(coeff, ScalarField(grid, f_arr))
    est = estimate_extreme_eigenvalues(problem.matrix, tol=args.tol)
    print(
        f"sample {args.index}: lambda_max = {est.lambda_max:.6e}, "
        f"lambda_min = {est.lambda_min:.6e}, kappa = {est.kappa:.6e} "
        f"({est.iterations_used} iterations, residuals {est.residual_max:.1e}/"
        f"{est.residual_min:.1e})"
    )
    return EXIT_OK


def _write_pgm(path: Path, grid_values: np.ndarray) -> None:
    lo = float(grid_values.min())
    hi = float(grid_values.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pixels = np.round((grid_values - lo) * scale).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def cmd_export_field(parser, args) -> int:
    _, k_arr, _, u_arr = _load_sample(parser, args)
    args.out.mkdir(parents=True, exist_ok=True)
    phi_arr = np.log(k_arr)
    fields = {
        "phi": phi_arr,
        "k": phi_arr if args.log_k else k_arr,
        "u": u_arr,
    }
    for name, arr in fields.items():
        _write_pgm(args.out / f"sample{args.index:05d}_{name}.pgm", arr)
        np.savetxt(args.out / f"sample{args.index:05d}_{name}.csv", arr, delimiter=",")
    print(f"wrote {', '.join(fields)} for sample {args.index} to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else
        logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(parser, args)
    except CondiffError as exc:
        print(f"condiff {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"condiff {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
