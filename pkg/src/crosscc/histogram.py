"""Log-chroma (uv) conversion and weighted 2-D histograms.

A histogram is a bins x bins array over log-chroma space with axis 0 indexing
u = ln(G/R) and axis 1 indexing v = ln(G/B).  Bin i covers the half-open
interval [min + i*eps, min + (i+1)*eps); values outside the range clamp to
the edge bins.  Query-image histograms span [-2.85, 2.85] per axis, locus
histograms [-0.5, 1.5].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

SATURATION_FRACTION = 0.98


@dataclass(frozen=True)
class HistogramSpec:
    bins: int = 64
    u_min: float = -2.85
    u_max: float = 2.85
    v_min: float = -2.85
    v_max: float = 2.85

    def __post_init__(self):
        if self.bins <= 0:
            raise DomainError("bins must be positive")
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise DomainError("histogram range is empty")

    @property
    def eps_u(self) -> float:
        return (self.u_max - self.u_min) / self.bins

    @property
    def eps_v(self) -> float:
        return (self.v_max - self.v_min) / self.bins

    def u_centers(self) -> np.ndarray:
        return self.u_min + (np.arange(self.bins) + 0.5) * self.eps_u

    def v_centers(self) -> np.ndarray:
        return self.v_min + (np.arange(self.bins) + 0.5) * self.eps_v

    def bin_index(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        """Floor binning with clamping to the edge bins."""
        iu = np.floor((np.asarray(u) - self.u_min) / self.eps_u).astype(np.int64)
        iv = np.floor((np.asarray(v) - self.v_min) / self.eps_v).astype(np.int64)
        return (np.clip(iu, 0, self.bins - 1), np.clip(iv, 0, self.bins - 1))


QUERY_SPEC = HistogramSpec(64, -2.85, 2.85, -2.85, 2.85)
CFE_SPEC = HistogramSpec(64, -0.5, 1.5, -0.5, 1.5)


@dataclass
class UvHistogram:
    spec: HistogramSpec
    data: np.ndarray
    empty: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.spec.bins, self.spec.bins):
            raise DomainError(
                f"histogram shape {data.shape} does not match spec bins {self.spec.bins}")
        if np.any(data < 0):
            raise DomainError("histogram entries must be non-negative")
        self.data = data


@dataclass
class RawImage:
    """Raw-linear image, H x W x 3, with the sensor saturation level."""

    pixels: np.ndarray
    saturation_level: float = 1.0

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DomainError(f"expected HxWx3 pixels, got shape {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise DomainError("image has non-finite pixels")
        if np.any(pixels < 0):
            raise DomainError("raw-linear pixels must be non-negative")
        if not (np.isfinite(self.saturation_level) and self.saturation_level > 0):
            raise DomainError("saturation_level must be positive and finite")
        self.pixels = pixels

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def rgb_to_uv(c) -> tuple[float, float]:
    """(u, v) = (ln(g/r), ln(g/b)) of a single RGB triplet."""
    r, g, b = (float(v) for v in np.asarray(c, dtype=np.float64))
    if r <= 0 or g <= 0 or b <= 0:
        raise DomainError("log-chroma requires strictly positive channels")
    return float(np.log(g / r)), float(np.log(g / b))


def uv_to_rgb(uv) -> np.ndarray:
    """Inverse of rgb_to_uv with the green channel pinned to 1."""
    u, v = (float(x) for x in uv)
    if not (np.isfinite(u) and np.isfinite(v)):
        raise DomainError("uv must be finite")
    return np.array([np.exp(-u), 1.0, np.exp(-v)], dtype=np.float64)


def valid_pixel_mask(image: RawImage) -> np.ndarray:
    """Pixels usable as illuminant evidence: strictly positive, unsaturated."""
    px = image.pixels
    ceiling = SATURATION_FRACTION * image.saturation_level
    return np.all(px > 0, axis=2) & np.all(px < ceiling, axis=2)


def uv_of_pixels(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = np.log(pixels[..., 1] / pixels[..., 0])
    v = np.log(pixels[..., 1] / pixels[..., 2])
    return u, v


def build_histogram(image: RawImage, spec: HistogramSpec) -> UvHistogram:
    """Norm-weighted uv histogram of an image, normalized to unit sum.

    Each valid pixel adds its L2 norm to the bin containing its (u, v);
    excluded pixels are those with any channel <= 0 or at/above 98% of the
    saturation level.  An image with no valid pixels yields an all-zero
    histogram flagged empty rather than an exception.
    """
    mask = valid_pixel_mask(image)
    data = np.zeros((spec.bins, spec.bins), dtype=np.float64)
    if not mask.any():
        return UvHistogram(spec=spec, data=data, empty=True)
    px = image.pixels[mask]
    u, v = uv_of_pixels(px)
    w = np.sqrt(np.sum(px * px, axis=1))
    iu, iv = spec.bin_index(u, v)
    np.add.at(data, (iu, iv), w)
    total = data.sum()
    if total <= 0:
        return UvHistogram(spec=spec, data=data, empty=True)
    return UvHistogram(spec=spec, data=data / total, empty=False)


def edge_image(image: RawImage) -> RawImage:
    """Per-channel L1 gradient magnitude via forward differences.

    The border is replicated, so the last row/column difference is zero.
    The result keeps the source saturation level.
    """
    if image.height < 2 or image.width < 2:
        raise DomainError("edge image requires at least a 2x2 input")
    px = image.pixels
    dx = np.zeros_like(px)
    dy = np.zeros_like(px)
    dx[:, :-1, :] = px[:, 1:, :] - px[:, :-1, :]
    dy[:-1, :, :] = px[1:, :, :] - px[:-1, :, :]
    return RawImage(pixels=np.abs(dx) + np.abs(dy),
                    saturation_level=image.saturation_level)
