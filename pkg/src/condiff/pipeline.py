"""Dataset generation pipeline, binary persistence, and the error metric.

A dataset is one binary array file plus a JSON manifest:

* ``data.bin``, little-endian: magic ``CNDF``, format_version u32, grid_n
  u32, sample_count u32, then per sample in index order the arrays k, f, u
  (each n^2 float64, row-major).
* ``manifest.json``: format version, the full generation config, the
  train/test split, one record per sample (contrast, field ranges,
  rejection attempts, seed stream, solver residual, SHA-256 of the
  sample's byte range), and aggregate contrast statistics.

Sample i is a pure function of (config, i), so generation is
order-independent and embarrassingly parallel.
"""
from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__ as _pkg_version
from .errors import (
    ChecksumMismatch,
    CondiffError,
    DatasetIOError,
    DegenerateTruth,
    DimensionMismatch,
    DomainError,
    RejectionExhausted,
)
from .fields import (
    CoefficientField,
    ContrastBounds,
    check_bounds,
    compute_contrast,
    exponentiate,
    sample_forcing,
)
from .fvm import assemble, solve
from .grf import (
    RNG_SCHEME,
    CovarianceFamily,
    CovarianceModel,
    GridSpec,
    RngSeed,
    ScalarField,
    build_embedding,
    derive_stream,
)
from .sparse import spmv

MAGIC = b"CNDF"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIII")
DATA_FILE = "data.bin"
MANIFEST_FILE = "manifest.json"

# Residual slack factor allowed when re-verifying persisted samples.
RESIDUAL_SLACK = 10.0


@dataclass(frozen=True)
class DatasetConfig:
    """Everything that determines a dataset, bit for bit."""

    family: CovarianceFamily
    variance: float
    grid_n: int
    n_train: int = 1000
    n_test: int = 200
    bounds: Optional[ContrastBounds] = None
    correlation_length: float = 0.05
    master_seed: int = 0
    solver_tol: float = 1e-8
    max_rejection_attempts: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "family", CovarianceFamily(self.family))
        if self.n_train < 1 or self.n_test < 1:
            raise DomainError("n_train and n_test must both be >= 1")
        if not 0.0 < self.solver_tol < 1.0:
            raise DomainError(f"solver_tol must lie in (0, 1), got {self.solver_tol}")
        if self.max_rejection_attempts < 1:
            raise DomainError("max_rejection_attempts must be >= 1")
        if self.bounds is None:
            object.__setattr__(self, "bounds", ContrastBounds.for_variance(self.variance))

    @property
    def n_samples(self) -> int:
        return self.n_train + self.n_test

    def model(self) -> CovarianceModel:
        return CovarianceModel(self.family, self.variance, self.correlation_length)

    def grid(self) -> GridSpec:
        return GridSpec(self.grid_n)

    def to_json_dict(self) -> dict:
        return {
            "family": self.family.value,
            "variance": self.variance,
            "correlation_length": self.correlation_length,
            "grid_n": self.grid_n,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "contrast_lower": self.bounds.lower,
            "contrast_upper": self.bounds.upper,
            "master_seed": self.master_seed,
            "solver_tol": self.solver_tol,
            "max_rejection_attempts": self.max_rejection_attempts,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DatasetConfig":
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # allow replaying a manifest directly
        bounds = None
        if "contrast_lower" in data:
            bounds = ContrastBounds(data["contrast_lower"], data["contrast_upper"])
        return cls(
            family=data["family"],
            variance=data["variance"],
            grid_n=data["grid_n"],
            n_train=data.get("n_train", 1000),
            n_test=data.get("n_test", 200),
            bounds=bounds,
            correlation_length=data.get("correlation_length", 0.05),
            master_seed=data.get("master_seed", 0),
            solver_tol=data.get("solver_tol", 1e-8),
            max_rejection_attempts=data.get("max_rejection_attempts", 10_000),
        )


@dataclass(eq=False)
class Sample:
    """One (k, f, u) triplet with its provenance."""

    index: int
    k: CoefficientField
    f: ScalarField
    u: ScalarField
    contrast: float
    seed_stream: int
    rejection_attempts: int
    solver_residual: float


def generate_sample(config: DatasetConfig, index: int) -> Sample:
    """Generate sample ``index``: rejection loop, exponential, forcing, solve.

    Candidate fields are redrawn (never rescaled) with streams derived from
    ("phi", index, attempt) until the contrast lands inside the bounds; the
    forcing stream depends only on the index, so it is unaffected by how
    many candidates were rejected. Deterministic in (config, index).
    """
    model = config.model()
    grid = config.grid()
    embedding = build_embedding(model, grid)
    phi = None
    stream = 0
    for attempt in range(config.max_rejection_attempts):
        stream = derive_stream("phi", index, attempt)
        candidate = embedding.sample(RngSeed(config.master_seed, stream))
        report = compute_contrast(candidate)
        if check_bounds(report, config.bounds):
            phi = candidate
            break
    if phi is None:
        raise RejectionExhausted(
            f"sample {index}: no draw hit contrast bounds "
            f"[{config.bounds.lower:g}, {config.bounds.upper:g}] in "
            f"{config.max_rejection_attempts} attempts; variance "
            f"{config.variance:g} does not reach these bounds",
            index=index,
            attempts=config.max_rejection_attempts,
        )
    k = exponentiate(phi)
    f = sample_forcing(grid, RngSeed(config.master_seed, derive_stream("f", index)))
    problem = assemble(k, f)
    u = solve(problem, tol=config.solver_tol)
    residual = float(
        np.linalg.norm(spmv(problem.matrix, u.values) - problem.rhs)
        / np.linalg.norm(problem.rhs)
    )
    return Sample(
        index=index,
        k=k,
        f=f,
        u=u,
        contrast=report.contrast,
        seed_stream=stream,
        rejection_attempts=attempt + 1,
        solver_residual=residual,
    )


@dataclass(frozen=True)
class SampleRecord:
    """Per-sample manifest entry; array data lives in the binary file."""

    index: int
    contrast: float
    phi_min: float
    phi_max: float
    u_min: float
    u_max: float
    rejection_attempts: int
    seed_stream: int
    solver_residual: float
    checksum: str

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json_dict(cls, data: dict) -> "SampleRecord":
        return cls(**data)


@dataclass(eq=False)
class Manifest:
    """Self-describing dataset metadata, serialized as JSON."""

    config: DatasetConfig
    train_indices: list
    test_indices: list
    samples: list
    created_at: str
    format_version: int = FORMAT_VERSION
    data_file: str = DATA_FILE
    rng_scheme: str = RNG_SCHEME
    generator_version: str = _pkg_version

    def stats_dict(self) -> dict:
        by_split = {
            "train": [self.samples[i].contrast for i in self.train_indices],
            "test": [self.samples[i].contrast for i in self.test_indices],
        }
        by_split["all"] = by_split["train"] + by_split["test"]
        return {
            split: {
                "count": len(vals),
                "min": min(vals),
                "mean": float(np.mean(vals)),
                "max": max(vals),
            }
            for split, vals in by_split.items()
        }

    def to_json_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "data_file": self.data_file,
            "rng_scheme": self.rng_scheme,
            "generator_version": self.generator_version,
            "created_at": self.created_at,
            "config": self.config.to_json_dict(),
            "split": {"train": self.train_indices, "test": self.test_indices},
            "samples": [s.to_json_dict() for s in self.samples],
            "contrast_stats": self.stats_dict(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Manifest":
        if data.get("format_version") != FORMAT_VERSION:
            raise DatasetIOError(
                f"manifest format_version {data.get('format_version')!r} is not "
                f"the supported {FORMAT_VERSION}"
            )
        return cls(
            config=DatasetConfig.from_json_dict(data["config"]),
            train_indices=list(data["split"]["train"]),
            test_indices=list(data["split"]["test"]),
            samples=[SampleRecord.from_json_dict(s) for s in data["samples"]],
            created_at=data.get("created_at", ""),
            format_version=data["format_version"],
            data_file=data.get("data_file", DATA_FILE),
            rng_scheme=data.get("rng_scheme", ""),
            generator_version=data.get("generator_version", ""),
        )


def _sample_payload(sample: Sample) -> bytes:
    parts = [
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for a in (sample.k.k_values, sample.f.values, sample.u.values)
    ]
    return b"".join(parts)


def sample_byte_range(grid_n: int, index: int) -> tuple[int, int]:
    """(offset, length) of sample ``index`` inside the binary file."""
    length = 3 * grid_n * grid_n * 8
    return HEADER.size + index * length, length


def _record_for(sample: Sample, checksum: str) -> SampleRecord:
    phi = sample.k.source_phi.values
    return SampleRecord(
        index=sample.index,
        contrast=sample.contrast,
        phi_min=float(phi.min()),
        phi_max=float(phi.max()),
        u_min=float(sample.u.values.min()),
        u_max=float(sample.u.values.max()),
        rejection_attempts=sample.rejection_attempts,
        seed_stream=sample.seed_stream,
        solver_residual=sample.solver_residual,
        checksum=checksum,
    )


def write_manifest(manifest: Manifest, path: Path) -> None:
    path.write_text(
        json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def read_manifest(dataset_dir) -> Manifest:
    path = Path(dataset_dir) / MANIFEST_FILE
    if not path.is_file():
        raise DatasetIOError(f"no manifest at {path}")
    return Manifest.from_json_dict(json.loads(path.read_text(encoding="utf-8")))


def generate_dataset(
    config: DatasetConfig, out_dir, workers: int = 1, log=None
) -> Manifest:
    """Generate and persist a full dataset; returns the manifest.

    Train samples occupy indices [0, n_train), test the following n_test.
    With ``workers`` > 1 samples are generated in a process pool; the
    writer persists them in index order, so the output bytes do not depend
    on the worker count. On any failure the partial output files are
    removed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / DATA_FILE
    manifest_path = out / MANIFEST_FILE
    tmp_path = out / (DATA_FILE + ".tmp")
    total = config.n_samples
    records = []
    try:
        with open(tmp_path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, config.grid_n, total))
            for sample in _iter_samples(config, workers):
                payload = _sample_payload(sample)
                checksum = hashlib.sha256(payload).hexdigest()
                fh.write(payload)
                records.append(_record_for(sample, checksum))
                if log is not None:
                    log(sample)
        manifest = Manifest(
            config=config,
            train_indices=list(range(config.n_train)),
            test_indices=list(range(config.n_train, total)),
            samples=records,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        write_manifest(manifest, manifest_path)
        tmp_path.replace(data_path)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        manifest_path.unlink(missing_ok=True)
        data_path.unlink(missing_ok=True)
        raise
    return manifest


def _iter_samples(config: DatasetConfig, workers: int):
    indices = range(config.n_samples)
    if workers <= 1:
        for i in indices:
            yield generate_sample(config, i)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(generate_sample, [config] * config.n_samples, indices)


def read_sample_arrays(
    dataset_dir, manifest: Manifest, index: int, verify: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read one sample's (k, f, u) as (n, n) float64 arrays."""
    if not 0 <= index < len(manifest.samples):
        raise DomainError(f"sample index {index} out of range [0, {len(manifest.samples)})")
    n = manifest.config.grid_n
    offset, length = sample_byte_range(n, index)
    path = Path(dataset_dir) / manifest.data_file
    with open(path, "rb") as fh:
        _check_header(fh.read(HEADER.size), manifest, path)
        fh.seek(offset)
        payload = fh.read(length)
    if len(payload) != length:
        raise DatasetIOError(f"{path} is truncated at sample {index}")
    if verify:
        digest = hashlib.sha256(payload).hexdigest()
        if digest != manifest.samples[index].checksum:
            raise ChecksumMismatch(
                f"sample {index}: stored bytes hash to {digest[:12]}..., manifest "
                f"says {manifest.samples[index].checksum[:12]}...",
                index=index,
            )
    flat = np.frombuffer(payload, dtype="<f8")
    return tuple(part.reshape(n, n) for part in np.split(flat, 3))


def _check_header(header: bytes, manifest: Manifest, path) -> None:
    if len(header) != HEADER.size:
        raise DatasetIOError(f"{path} is too short to hold a header")
    magic, version, grid_n, count = HEADER.unpack(header)
    if magic != MAGIC:
        raise DatasetIOError(f"{path} has magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DatasetIOError(f"{path} has format version {version}, expected {FORMAT_VERSION}")
    if grid_n != manifest.config.grid_n or count != len(manifest.samples):
        raise DatasetIOError(
            f"{path} header (grid {grid_n}, {count} samples) disagrees with the "
            f"manifest (grid {manifest.config.grid_n}, {len(manifest.samples)} samples)"
        )


@dataclass(frozen=True)
class ValidationIssue:
    kind: str  # "checksum" | "bounds" | "residual" | "file"
    index: Optional[int]
    message: str


def validate_dataset(dataset_dir) -> list:
    """Re-check checksums, contrast bounds, and solver residuals.

    Returns a list of ValidationIssue; empty means the dataset is sound.
    The residual check re-assembles each system from the stored k and f,
    so it catches corrupted solutions as well as bookkeeping errors.
    """
    issues = []
    try:
        manifest = read_manifest(dataset_dir)
    except (DatasetIOError, json.JSONDecodeError, KeyError) as exc:
        return [ValidationIssue("file", None, str(exc))]
    expected = set(range(len(manifest.samples)))
    split = set(manifest.train_indices) | set(manifest.test_indices)
    if split != expected or len(manifest.train_indices) + len(manifest.test_indices) != len(expected):
        issues.append(ValidationIssue("file", None, "split does not partition the sample indices"))
    grid = manifest.config.grid()
    bounds = manifest.config.bounds
    tol = manifest.config.solver_tol * RESIDUAL_SLACK
    for record in manifest.samples:
        i = record.index
        if not bounds.lower <= record.contrast <= bounds.upper:
            issues.append(ValidationIssue(
                "bounds", i,
                f"sample {i}: contrast {record.contrast:.6g} outside "
                f"[{bounds.lower:g}, {bounds.upper:g}]",
            ))
        try:
            k_arr, f_arr, u_arr = read_sample_arrays(dataset_dir, manifest, i, verify=True)
        except ChecksumMismatch as exc:
            issues.append(ValidationIssue("checksum", i, str(exc)))
            continue
        except DatasetIOError as exc:
            issues.append(ValidationIssue("file", i, str(exc)))
            continue
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                log_k = np.log(k_arr)
            phi = ScalarField(grid, log_k)
            k = CoefficientField(grid, k_arr.ravel().astype(np.float64), phi)
            problem = assemble(k, ScalarField(grid, f_arr))
            residual = float(
                np.linalg.norm(spmv(problem.matrix, u_arr.ravel()) - problem.rhs)
                / np.linalg.norm(problem.rhs)
            )
        except CondiffError as exc:
            issues.append(ValidationIssue(
                "residual", i, f"sample {i}: cannot re-verify stored arrays ({exc})"
            ))
            continue
        if residual > tol:
            issues.append(ValidationIssue(
                "residual", i,
                f"sample {i}: re-verified residual {residual:.3e} exceeds "
                f"{tol:.3e} ({RESIDUAL_SLACK:g} x solver_tol)",
            ))
        recomputed = float(np.exp(log_k.max() - log_k.min()))
        if not np.isclose(recomputed, record.contrast, rtol=1e-9):
            issues.append(ValidationIssue(
                "bounds", i,
                f"sample {i}: stored contrast {record.contrast:.6g} does not match "
                f"the stored field ({recomputed:.6g})",
            ))
    return issues


@dataclass(frozen=True)
class StatsReport:
    """Contrast summary per split plus a histogram over all samples."""

    per_split: dict
    bin_edges: np.ndarray
    counts: np.ndarray


def dataset_stats(manifest: Manifest, bins: int = 30) -> StatsReport:
    """Exact scan statistics and a contrast histogram (bin_edges, counts)."""
    stats = manifest.stats_dict()
    contrasts = [s.contrast for s in manifest.samples]
    counts, edges = np.histogram(contrasts, bins=bins)
    return StatsReport(per_split=stats, bin_edges=edges, counts=counts)


def relative_l2(prediction, truth) -> float:
    """Mean over the batch of ||prediction_i - truth_i|| / ||truth_i||.

    A 1D input is one sample; otherwise the first axis indexes the batch
    and the remaining axes are flattened per sample.
    """
    pred = np.asarray(prediction, dtype=np.float64)
    true = np.asarray(truth, dtype=np.float64)
    if pred.shape != true.shape:
        raise DimensionMismatch(f"shape {pred.shape} does not match truth {true.shape}")
    if pred.ndim == 1:
        pred = pred[None, :]
        true = true[None, :]
    pred = pred.reshape(pred.shape[0], -1)
    true = true.reshape(true.shape[0], -1)
    truth_norms = np.linalg.norm(true, axis=1)
    if np.any(truth_norms == 0.0):
        bad = int(np.flatnonzero(truth_norms == 0.0)[0])
        raise DegenerateTruth(f"truth sample {bad} has zero norm")
    return float(np.mean(np.linalg.norm(pred - true, axis=1) / truth_norms))
