"""Angular-error statistics, the gray-world baseline, and manifest evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import DatasetManifest, read_pfm
from .errors import DomainError, EstimationError
from .estimator import Model, angular_error, camera_fingerprint, estimate_illuminant
from .histogram import RawImage, valid_pixel_mask


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    median: float
    trimean: float
    best25_mean: float
    worst25_mean: float

    def __post_init__(self):
        vals = (self.mean, self.median, self.trimean,
                self.best25_mean, self.worst25_mean)
        if any(v < 0 or not np.isfinite(v) for v in vals):
            raise DomainError("error statistics must be finite and non-negative")
        if not (self.best25_mean <= self.mean + 1e-12
                and self.mean <= self.worst25_mean + 1e-12):
            raise DomainError("statistics ordering violated")


def compute_stats(errors) -> ErrorStats:
    """Mean, median, trimean, and best/worst-quarter means of angular errors.

    Trimean is (Q1 + 2*Q2 + Q3)/4 with linearly interpolated quantiles; the
    best/worst quarters take the lowest/highest ceil(n/4) values.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.ndim != 1 or len(errors) == 0:
        raise DomainError("need a non-empty 1-D list of errors")
    q1, q2, q3 = np.percentile(errors, [25.0, 50.0, 75.0])
    k = math.ceil(len(errors) / 4)
    ordered = np.sort(errors)
    return ErrorStats(
        mean=float(errors.mean()),
        median=float(q2),
        trimean=float((q1 + 2.0 * q2 + q3) / 4.0),
        best25_mean=float(ordered[:k].mean()),
        worst25_mean=float(ordered[-k:].mean()))


def gray_world(image: RawImage) -> np.ndarray:
    """Unit-norm per-channel mean of the usable pixels."""
    mask = valid_pixel_mask(image)
    if not mask.any():
        raise EstimationError("gray-world found no usable pixels")
    mean = image.pixels[mask].mean(axis=0)
    return mean / np.linalg.norm(mean)


def evaluate_manifest(manifest: DatasetManifest, model: Model | None = None,
                      baseline: str | None = None,
                      zero_fingerprint: bool = False) -> tuple[list[float], ErrorStats]:
    """Angular errors over a manifest, in manifest order, plus their stats.

    Exactly one of `model` / `baseline` selects the estimator.  Fingerprints
    are computed once per camera and reused.
    """
    if (model is None) == (baseline is None):
        raise DomainError("choose exactly one of model or baseline")
    if baseline is not None and baseline != "gray-world":
        raise DomainError(f"unknown baseline {baseline!r}")
    fingerprints: dict[str, np.ndarray] = {}
    errors: list[float] = []
    for entry in manifest.entries:
        image = read_pfm(entry.image_path)
        if baseline is not None:
            est = gray_world(image)
        else:
            cid = entry.camera_id
            if cid not in fingerprints:
                fingerprints[cid] = camera_fingerprint(
                    manifest.calibrations[cid], model)
            est = estimate_illuminant(
                image, manifest.calibrations[cid], model,
                zero_fingerprint=zero_fingerprint,
                fingerprint=None if zero_fingerprint else fingerprints[cid]).rgb
        errors.append(angular_error(est, entry.gt_illuminant))
    return errors, compute_stats(errors)
