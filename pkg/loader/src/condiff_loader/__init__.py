"""Read-only client for CNDF diffusion datasets.

Loads the binary array file plus JSON manifest written by the generator
into in-memory train/test collections of (k, f, u) arrays, verifying
SHA-256 checksums on the way in. This package only reads the documented
file format; all generation lives in the generator package.

Binary layout, little-endian: magic ``CNDF``, format_version u32, grid_n
u32, sample_count u32, then per sample in index order the arrays k, f, u
(each grid_n^2 float64, row-major).
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__version__ = "0.1.0"

MAGIC = b"CNDF"
SUPPORTED_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class LoaderError(Exception):
    """Base class for loader failures."""


class FormatError(LoaderError):
    """Missing file, bad magic, or an unsupported format version."""


class IntegrityError(LoaderError):
    """Stored bytes disagree with a manifest checksum."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


@dataclass
class LoadedDataset:
    """In-memory dataset: per-split lists of (k, f, u) arrays shaped (n, n)."""

    config: dict
    grid_n: int
    train: list
    test: list
    train_contrast: list
    test_contrast: list

    def __len__(self) -> int:
        return len(self.train) + len(self.test)


def _read_manifest(dataset_dir: Path) -> dict:
    path = dataset_dir / "manifest.json"
    if not path.is_file():
        raise FormatError(f"no manifest at {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    version = manifest.get("format_version")
    if version != SUPPORTED_FORMAT_VERSION:
        raise FormatError(
            f"manifest format version {version!r} unsupported "
            f"(reader supports {SUPPORTED_FORMAT_VERSION})"
        )
    return manifest


def load(path, verify: bool = True, dtype=np.float64) -> LoadedDataset:
    """Load a dataset directory into memory.

    Parameters
    ----------
    path : dataset directory containing ``manifest.json`` and the data file.
    verify : re-hash every sample's byte range against the manifest.
    dtype : output dtype; float32 halves memory for training loops.

    Raises FormatError on missing/malformed files or version mismatch and
    IntegrityError (carrying the sample index) on checksum failure.
    """
    dataset_dir = Path(path)
    manifest = _read_manifest(dataset_dir)
    data_path = dataset_dir / manifest.get("data_file", "data.bin")
    if not data_path.is_file():
        raise FormatError(f"no data file at {data_path}")
    blob = data_path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{data_path} is too short to hold a header")
    magic, version, grid_n, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{data_path} has magic {magic!r}, expected {MAGIC!r}")
    if version != SUPPORTED_FORMAT_VERSION:
        raise FormatError(
            f"{data_path} has format version {version}, reader supports "
            f"{SUPPORTED_FORMAT_VERSION}"
        )
    records = manifest["samples"]
    if count != len(records) or grid_n != manifest["config"]["grid_n"]:
        raise FormatError(f"{data_path} header disagrees with the manifest")
    sample_bytes = 3 * grid_n * grid_n * 8
    if len(blob) != _HEADER.size + count * sample_bytes:
        raise FormatError(
            f"{data_path} holds {len(blob)} bytes, expected "
            f"{_HEADER.size + count * sample_bytes}"
        )

    triplets = []
    for record in records:
        index = record["index"]
        offset = _HEADER.size + index * sample_bytes
        payload = blob[offset:offset + sample_bytes]
        if verify:
            digest = hashlib.sha256(payload).hexdigest()
            if digest != record["checksum"]:
                raise IntegrityError(
                    f"sample {index}: bytes hash to {digest[:12]}..., manifest "
                    f"says {record['checksum'][:12]}...",
                    index=index,
                )
        flat = np.frombuffer(payload, dtype="<f8")
        k, f, u = (part.reshape(grid_n, grid_n).astype(dtype, copy=False)
                   for part in np.split(flat, 3))
        triplets.append((k, f, u))

    split = manifest["split"]
    contrast = {r["index"]: r["contrast"] for r in records}
    return LoadedDataset(
        config=dict(manifest["config"]),
        grid_n=grid_n,
        train=[triplets[i] for i in split["train"]],
        test=[triplets[i] for i in split["test"]],
        train_contrast=[contrast[i] for i in split["train"]],
        test_contrast=[contrast[i] for i in split["test"]],
    )


def relative_l2(prediction, truth) -> float:
    """Mean over the batch of ||prediction_i - truth_i|| / ||truth_i||.

    Client-side copy of the generator's evaluation metric so training code
    needs no extra dependency. A 1D input is a single sample; otherwise the
    first axis indexes the batch.
    """
    pred = np.asarray(prediction, dtype=np.float64)
    true = np.asarray(truth, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"shape {pred.shape} does not match truth {true.shape}")
    if pred.ndim == 1:
        pred = pred[None, :]
        true = true[None, :]
    pred = pred.reshape(pred.shape[0], -1)
    true = true.reshape(true.shape[0], -1)
    norms = np.linalg.norm(true, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("a truth sample has zero norm")
    return float(np.mean(np.linalg.norm(pred - true, axis=1) / norms))
