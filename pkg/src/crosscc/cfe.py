"""Camera fingerprint: encode a camera's illuminant-locus trajectory.

Every camera "sees" the reference illuminant locus as a different curve in
its own raw color space, fully determined by its calibrated color matrices.
This module maps locus samples through the calibration, histograms the
resulting trajectory in log-chroma space, and encodes the histogram into an
8-dimensional vector that downstream networks consume as side information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .colorimetry import (
    CameraCalibration,
    PlanckianSampleSet,
    interpolate_ccm,
    planckian_xyz_samples,
)
from .errors import DomainError, ShapeError
from .histogram import CFE_SPEC, HistogramSpec, UvHistogram
from .nn.autograd import Tensor, leaky_relu, reshape
from .nn.blocks import (
    down_block,
    init_double_conv,
    init_linear,
    init_norm,
    linear_apply,
)
from .nn.params import ParameterStore


@dataclass(frozen=True)
class GuidanceIlluminants:
    """Camera-native RGB of each locus sample, aligned with its CCTs."""

    ccts: np.ndarray
    rgb: np.ndarray  # shape (n, 3), all channels positive

    def __post_init__(self):
        if len(self.ccts) != len(self.rgb):
            raise DomainError("guidance illuminant count mismatch")
        if np.any(self.rgb <= 0) or not np.all(np.isfinite(self.rgb)):
            raise DomainError(
                "guidance illuminants must have positive finite channels; "
                "the calibration maps part of the locus out of gamut")

    def __len__(self) -> int:
        return len(self.ccts)


@dataclass(frozen=True)
class CfeEncoderConfig:
    bins: int = 64
    widths: tuple[int, ...] = (8, 16, 32, 64)
    mlp_hidden: int = 64
    embed_dim: int = 8

    def __post_init__(self):
        if len(self.widths) != 4:
            raise DomainError("encoder needs exactly four block widths")
        if self.bins % 16 != 0:
            raise DomainError("bins must be divisible by 16 (four 2x2 pools)")

    @property
    def flat_features(self) -> int:
        side = self.bins // 16
        return self.widths[-1] * side * side


def guidance_illuminants(
    cal: CameraCalibration,
    samples: PlanckianSampleSet | None = None,
) -> GuidanceIlluminants:
    """Map locus XYZ samples into the camera's raw space via its CCMs."""
    if samples is None:
        samples = planckian_xyz_samples()
    rgb = np.stack([interpolate_ccm(t, cal, "color_matrix") @ xyz
                    for t, xyz in samples])
    return GuidanceIlluminants(ccts=samples.ccts.copy(), rgb=rgb)


def cfe_histogram(g: GuidanceIlluminants,
                  spec: HistogramSpec = CFE_SPEC) -> UvHistogram:
    """Unit-weight histogram of the guidance trajectory, unit sum.

    Locus samples are unit-scale colors, so each contributes weight 1 rather
    than its pixel norm; out-of-range chroma clamps to the edge bins.
    """
    u = np.log(g.rgb[:, 1] / g.rgb[:, 0])
    v = np.log(g.rgb[:, 1] / g.rgb[:, 2])
    iu, iv = spec.bin_index(u, v)
    data = np.zeros((spec.bins, spec.bins), dtype=np.float64)
    np.add.at(data, (iu, iv), 1.0)
    return UvHistogram(spec=spec, data=data / data.sum(), empty=False)


def init_cfe_params(cfg: CfeEncoderConfig, rng: np.random.Generator,
                    store: ParameterStore | None = None, prefix: str = "cfe",
                    dtype=np.float64) -> ParameterStore:
    if store is None:
        store = ParameterStore()
    c_prev = 1
    for i, c in enumerate(cfg.widths):
        init_double_conv(store, f"{prefix}.block{i}", c_prev, c, rng, dtype)
        init_norm(store, f"{prefix}.block{i}.norm", c, dtype)
        c_prev = c
    init_linear(store, f"{prefix}.fc1", cfg.flat_features, cfg.mlp_hidden, rng, dtype)
    init_linear(store, f"{prefix}.fc2", cfg.mlp_hidden, cfg.embed_dim, rng, dtype)
    return store


def cfe_apply(hist: Tensor, store: ParameterStore, cfg: CfeEncoderConfig,
              prefix: str = "cfe") -> Tensor:
    """Encoder forward on (N, 1, bins, bins) histograms -> (N, embed_dim)."""
    if hist.data.ndim != 4 or hist.data.shape[1] != 1 \
            or hist.data.shape[2:] != (cfg.bins, cfg.bins):
        raise ShapeError(
            f"expected (N, 1, {cfg.bins}, {cfg.bins}) input, got {hist.data.shape}")
    x = hist
    for i in range(4):
        x = down_block(x, store, f"{prefix}.block{i}")
    x = reshape(x, (x.data.shape[0], cfg.flat_features))
    x = leaky_relu(linear_apply(x, store, f"{prefix}.fc1"))
    return linear_apply(x, store, f"{prefix}.fc2")


def encode_fingerprint(h: UvHistogram, store: ParameterStore,
                       cfg: CfeEncoderConfig, prefix: str = "cfe") -> np.ndarray:
    """Fingerprint of one locus histogram as a plain (embed_dim,) array."""
    if h.spec.bins != cfg.bins:
        raise ShapeError(
            f"histogram bins {h.spec.bins} != encoder bins {cfg.bins}")
    dtype = next(iter(store.tensors())).data.dtype if len(store) else np.float64
    x = Tensor(h.data.astype(dtype)[None, None])
    out = cfe_apply(x, store, cfg, prefix)
    return out.data[0].copy()


def tile_fingerprint(f: np.ndarray, bins: int) -> np.ndarray:
    """Repeat a fingerprint into constant (embed_dim, bins, bins) maps."""
    f = np.asarray(f)
    if f.ndim != 1:
        raise ShapeError(f"fingerprint must be 1-D, got shape {f.shape}")
    if bins <= 0:
        raise DomainError("bins must be positive")
    return np.broadcast_to(f[:, None, None], (f.shape[0], bins, bins)).copy()
