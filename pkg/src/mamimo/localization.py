"""CSI fingerprint localization with a k-nearest-neighbour matcher.

A fingerprint database maps deterministic CSI feature vectors to the
positions they were recorded at; a query CSI is located by averaging the
labels of its nearest fingerprints in feature space. The localizer
interface is deliberately minimal (CSI in, position out) so a learned
model can replace the kNN matcher without touching the callers.
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import BadMagicError, TruncatedFileError, VersionMismatchError
from .model import CsiSample, Position3


class FeatureMode(enum.Enum):
    RAW_UNIT_NORM = "raw_unit_norm"
    MAGNITUDE_ONLY = "magnitude_only"
    PHASE_RELATIVE = "phase_relative_to_first_antenna"


class Weighting(enum.Enum):
    UNIFORM = "uniform"
    INVERSE_DISTANCE = "inverse_distance"


@dataclass(frozen=True, slots=True)
class FeatureConfig:
    mode: FeatureMode = FeatureMode.RAW_UNIT_NORM


def extract_features(csi: CsiSample, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Turn a CSI matrix into a real feature vector.

    raw_unit_norm: real and imaginary parts of all entries stacked and
    divided by the Frobenius norm (length 2*M*F, unit norm, invariant to
    positive scaling). magnitude_only: entry magnitudes, unit-normalized.
    phase_relative_to_first_antenna: per subcarrier, entry phases minus the
    antenna-0 phase, wrapped to (-pi, pi]; invariant to a global phase
    rotation.
    """
    h = csi.h
    if cfg.mode is FeatureMode.RAW_UNIT_NORM:
        norm = np.linalg.norm(h)
        if norm == 0.0:
            raise ValueError("cannot extract features from an all-zero CSI matrix")
        return np.concatenate([h.real.ravel(), h.imag.ravel()]) / norm
    if cfg.mode is FeatureMode.MAGNITUDE_ONLY:
        mags = np.abs(h).ravel()
        norm = np.linalg.norm(mags)
        if norm == 0.0:
            raise ValueError("cannot extract features from an all-zero CSI matrix")
        return mags / norm
    if cfg.mode is FeatureMode.PHASE_RELATIVE:
        if np.any(np.abs(h) == 0.0):
            raise ValueError("phase features need nonzero entries")
        return np.angle(h * np.conj(h[0:1, :])).ravel()
    raise ValueError(f"unknown feature mode {cfg.mode!r}")


class FingerprintDb:
    """Feature vectors with their recording positions, in insertion order."""

    def __init__(self, features, labels_mm, config: FeatureConfig, topology: str = ""):
        features = np.array(features, dtype=np.float64, order="C")
        labels_mm = np.array(labels_mm, dtype=np.float64, order="C")
        if features.ndim != 2 or labels_mm.ndim != 2 or labels_mm.shape[1] != 3:
            raise ValueError("features must be (N, D) and labels (N, 3)")
        if features.shape[0] != labels_mm.shape[0]:
            raise ValueError("features and labels must have equal length")
        features.flags.writeable = False
        labels_mm.flags.writeable = False
        self.features = features
        self.labels_mm = labels_mm
        self.config = config
        self.topology = topology

    def __len__(self):
        return self.features.shape[0]


def build_fingerprints(samples, cfg: FeatureConfig = FeatureConfig(),
                       topology: str = "") -> FingerprintDb:
    """Build a database from labelled samples, streaming one at a time."""
    rows = []
    labels = []
    for sample in samples:
        if sample.label is None:
            raise ValueError(f"sample {sample.sample_id!r} has no position label")
        rows.append(extract_features(sample, cfg))
        labels.append(sample.label.as_array())
    dim = rows[0].shape[0] if rows else 0
    features = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    labels_mm = np.array(labels, dtype=np.float64).reshape(len(rows), 3)
    return FingerprintDb(features, labels_mm, cfg, topology)


def _weighted_label_mean(labels: np.ndarray, dists: np.ndarray,
                         weighting: Weighting) -> np.ndarray:
    if weighting is Weighting.UNIFORM:
        return labels.mean(axis=0)
    weights = 1.0 / (dists + 1e-12)
    return (labels * weights[:, None]).sum(axis=0) / weights.sum()


def knn_locate(db: FingerprintDb, query: CsiSample, k: int = 5,
               weighting: Weighting = Weighting.INVERSE_DISTANCE) -> Position3:
    """Estimate the query position from its k nearest fingerprints.

    Distances are Euclidean in feature space; the estimate is the
    (inverse-distance) weighted mean of the neighbours' positions. Equal
    distances are resolved by database order.
    """
    if len(db) == 0:
        raise ValueError("fingerprint database is empty")
    if not 1 <= k <= len(db):
        raise ValueError(f"k must be in [1, {len(db)}], got {k}")
    f = extract_features(query, db.config)
    if f.shape[0] != db.features.shape[1]:
        raise ValueError("query feature length does not match the database")
    dists = np.linalg.norm(db.features - f[None, :], axis=1)
    nearest = np.argsort(dists, kind="stable")[:k]
    est = _weighted_label_mean(db.labels_mm[nearest], dists[nearest], weighting)
    return Position3(float(est[0]), float(est[1]), float(est[2]))


@dataclass(frozen=True)
class LocalizationReport:
    errors_mm: np.ndarray
    sample_ids: tuple[str, ...]
    mean_mm: float
    median_mm: float
    p95_mm: float

    @classmethod
    def from_errors(cls, errors_mm, sample_ids=None) -> "LocalizationReport":
        errors_mm = np.asarray(errors_mm, dtype=np.float64)
        if errors_mm.size == 0:
            raise ValueError("no errors to report")
        if np.any(errors_mm < 0):
            raise ValueError("errors must be nonnegative")
        if sample_ids is None:
            sample_ids = tuple(f"{i:06d}" for i in range(errors_mm.size))
        return cls(errors_mm=errors_mm, sample_ids=tuple(sample_ids),
                   mean_mm=float(np.mean(errors_mm)),
                   median_mm=float(np.median(errors_mm)),
                   p95_mm=float(np.percentile(errors_mm, 95)))


def evaluate_localizer(db: FingerprintDb, test_samples, k: int = 5,
                       weighting: Weighting = Weighting.INVERSE_DISTANCE) -> LocalizationReport:
    """Locate every labelled test sample and aggregate the position errors."""
    errors = []
    ids = []
    for sample in test_samples:
        if sample.label is None:
            raise ValueError(f"test sample {sample.sample_id!r} has no position label")
        est = knn_locate(db, sample, k=k, weighting=weighting)
        errors.append(est.distance_mm(sample.label))
        ids.append(sample.sample_id)
    if not errors:
        raise ValueError("test set is empty")
    return LocalizationReport.from_errors(np.array(errors), ids)


def leave_one_out_report(db: FingerprintDb, k: int = 4,
                         weighting: Weighting = Weighting.INVERSE_DISTANCE) -> LocalizationReport:
    """Locate every fingerprint against the rest of its own database.

    Equivalent to querying each sample on a database with that sample
    removed, computed from one pairwise-distance pass. The self-match is
    excluded; neighbour ranking still resolves ties by database order.
    """
    n = len(db)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}] for leave-one-out, got {k}")
    x = db.features
    sq = np.einsum("nd,nd->n", x, x)
    gram = x @ x.T
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * gram, 0.0)
    np.fill_diagonal(d2, np.inf)
    dists = np.sqrt(d2)
    errors = np.empty(n)
    for i in range(n):
        nearest = np.argsort(dists[i], kind="stable")[:k]
        est = _weighted_label_mean(db.labels_mm[nearest], dists[i][nearest], weighting)
        errors[i] = float(np.linalg.norm(est - db.labels_mm[i]))
    return LocalizationReport.from_errors(errors)


def report_to_csv(report: LocalizationReport, path) -> None:
    """Export ``sample_id,err_mm`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "err_mm"])
        for sid, err in zip(report.sample_ids, report.errors_mm):
            writer.writerow([sid, repr(float(err))])


# ---------------------------------------------------------------------------
# persistence: same container discipline as the sample files, FPDB magic
# ---------------------------------------------------------------------------

FPDB_MAGIC = b"FPDB"
FPDB_VERSION = 1
_FPDB_HEADER = struct.Struct("<4sBBHII")  # magic, version, mode, tag length, N, D


def save_fingerprints(db: FingerprintDb, path) -> None:
    tag = db.topology.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise ValueError("topology tag too long")
    mode_index = list(FeatureMode).index(db.config.mode)
    header = _FPDB_HEADER.pack(FPDB_MAGIC, FPDB_VERSION, mode_index, len(tag),
                               len(db), db.features.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(tag)
        fh.write(db.features.astype("<f8").tobytes())
        fh.write(db.labels_mm.astype("<f8").tobytes())


def load_fingerprints(path) -> FingerprintDb:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_FPDB_HEADER.size)
        if len(header) < _FPDB_HEADER.size:
            raise TruncatedFileError(f"{path}: file shorter than the header")
        magic, version, mode_index, tag_len, n, d = _FPDB_HEADER.unpack(header)
        if magic != FPDB_MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}, expected {FPDB_MAGIC!r}")
        if version != FPDB_VERSION:
            raise VersionMismatchError(f"{path}: version {version}, expected {FPDB_VERSION}")
        tag = fh.read(tag_len)
        body = fh.read(8 * n * d + 8 * n * 3)
        if len(tag) < tag_len or len(body) < 8 * n * d + 8 * n * 3:
            raise TruncatedFileError(f"{path}: body shorter than the header declares")
        if fh.read(1):
            raise TruncatedFileError(f"{path}: trailing bytes after declared body")
    features = np.frombuffer(body[: 8 * n * d], dtype="<f8").reshape(n, d)
    labels = np.frombuffer(body[8 * n * d:], dtype="<f8").reshape(n, 3)
    mode = list(FeatureMode)[mode_index]
    return FingerprintDb(features, labels, FeatureConfig(mode), tag.decode("utf-8"))
