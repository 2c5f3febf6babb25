"""The illuminant estimator: a U-Net hypernetwork emits per-image CCC
filters and bias, which are convolved against the query histograms to form a
confidence heatmap whose centroid is the illuminant's log-chroma.

The network input is 10 channels: the image histogram, the edge-image
histogram, and the 8 fingerprint channels tiled to histogram resolution.
Output channels are the two filters and the bias map.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .cfe import (
    CfeEncoderConfig,
    cfe_histogram,
    encode_fingerprint,
    guidance_illuminants,
    init_cfe_params,
    tile_fingerprint,
)
from .colorimetry import CameraCalibration
from .errors import DomainError, EstimationError, FormatError, ShapeError
from .histogram import (
    CFE_SPEC,
    QUERY_SPEC,
    HistogramSpec,
    RawImage,
    UvHistogram,
    build_histogram,
    edge_image,
    uv_to_rgb,
)
from .nn.autograd import (
    Tape,
    Tensor,
    add,
    circular_conv_fft,
    concat_channels,
    maxpool2x2,
    nearest_upsample2x,
    select_channel,
    softmax2d,
)
from .nn.blocks import (
    conv_apply,
    double_conv,
    init_conv3x3,
    init_double_conv,
    init_norm,
    norm_apply,
)
from .nn.params import ParameterStore, deserialize_params, serialize_params


@dataclass(frozen=True)
class BackboneConfig:
    widths: tuple[int, ...] = (16, 32, 64, 128)
    in_channels: int = 10
    out_channels: int = 3
    bins: int = 64

    def __post_init__(self):
        if len(self.widths) != 4:
            raise DomainError("backbone needs exactly four stage widths")
        if self.bins % 16 != 0:
            raise DomainError("bins must be divisible by 16 (four 2x2 pools)")


@dataclass
class CccKernel:
    """Per-image filters and bias emitted by the hypernetwork."""

    f0: np.ndarray
    f1: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        shapes = {self.f0.shape, self.f1.shape, self.bias.shape}
        if len(shapes) != 1 or self.f0.ndim != 2:
            raise ShapeError(f"kernel maps must share a 2-D shape, got {shapes}")


@dataclass
class IlluminantEstimate:
    uv: tuple[float, float]
    rgb: np.ndarray  # unit L2 norm
    heatmap: np.ndarray


def init_backbone_params(cfg: BackboneConfig, rng: np.random.Generator,
                         store: ParameterStore | None = None,
                         prefix: str = "bb", dtype=np.float64) -> ParameterStore:
    if store is None:
        store = ParameterStore()
    w1, w2, w3, w4 = cfg.widths
    enc_io = [(cfg.in_channels, w1), (w1, w2), (w2, w3), (w3, w4)]
    for i, (ci, co) in enumerate(enc_io):
        init_double_conv(store, f"{prefix}.enc{i}", ci, co, rng, dtype)
        init_norm(store, f"{prefix}.enc{i}.norm", co, dtype)
    dec_io = [(2 * w4, w3), (2 * w3, w2), (2 * w2, w1), (2 * w1, w1)]
    for i, (ci, co) in enumerate(dec_io):
        init_double_conv(store, f"{prefix}.dec{i}", ci, co, rng, dtype)
        init_norm(store, f"{prefix}.dec{i}.norm", co, dtype)
    init_conv3x3(store, f"{prefix}.head", w1, cfg.out_channels, rng, dtype)
    return store


def backbone_apply(x: Tensor, store: ParameterStore, cfg: BackboneConfig,
                   prefix: str = "bb") -> Tensor:
    """U-Net forward on (N, in_channels, bins, bins); no output activation."""
    if x.data.shape[-3:] != (cfg.in_channels, cfg.bins, cfg.bins):
        raise ShapeError(
            f"expected (..., {cfg.in_channels}, {cfg.bins}, {cfg.bins}) input, "
            f"got {x.data.shape}")
    skips = []
    for i in range(4):
        x = double_conv(x, store, f"{prefix}.enc{i}")
        skips.append(x)
        x = norm_apply(maxpool2x2(x), store, f"{prefix}.enc{i}.norm")
    for i in range(4):
        x = nearest_upsample2x(x)
        x = concat_channels(x, skips[3 - i])
        x = double_conv(x, store, f"{prefix}.dec{i}")
        x = norm_apply(x, store, f"{prefix}.dec{i}.norm")
    return conv_apply(x, store, f"{prefix}.head")


def ccc_heatmap(n0: Tensor, n1: Tensor, f0: Tensor, f1: Tensor,
                bias: Tensor) -> Tensor:
    """Differentiable heatmap: softmax(bias + n0 * f0 + n1 * f1)."""
    acc = add(add(circular_conv_fft(n0, f0), circular_conv_fft(n1, f1)), bias)
    return softmax2d(acc)


def _check_hist(h: UvHistogram, bins: int, name: str):
    if h.spec.bins != bins:
        raise ShapeError(f"{name} has {h.spec.bins} bins, model expects {bins}")


def backbone_forward(n0: UvHistogram, n1: UvHistogram, fingerprint: np.ndarray,
                     store: ParameterStore, cfg: BackboneConfig,
                     prefix: str = "bb") -> CccKernel:
    """Emit the CCC kernel for one image given its camera fingerprint."""
    _check_hist(n0, cfg.bins, "n0")
    _check_hist(n1, cfg.bins, "n1")
    fingerprint = np.asarray(fingerprint)
    if fingerprint.shape != (cfg.in_channels - 2,):
        raise ShapeError(
            f"fingerprint shape {fingerprint.shape} != ({cfg.in_channels - 2},)")
    dtype = next(iter(store.tensors())).data.dtype if len(store) else np.float64
    stackd = np.concatenate([
        n0.data[None].astype(dtype),
        n1.data[None].astype(dtype),
        tile_fingerprint(fingerprint, cfg.bins).astype(dtype),
    ])
    out = backbone_apply(Tensor(stackd[None]), store, cfg, prefix).data[0]
    return CccKernel(f0=out[0].copy(), f1=out[1].copy(), bias=out[2].copy())


def apply_ccc(n0: UvHistogram, n1: UvHistogram, k: CccKernel) -> np.ndarray:
    """Heatmap over uv bins; rows of the result index u, columns index v."""
    if n0.data.shape != k.f0.shape or n1.data.shape != k.f1.shape:
        raise ShapeError("histogram and kernel shapes differ")
    p = ccc_heatmap(Tensor(n0.data.astype(k.f0.dtype)),
                    Tensor(n1.data.astype(k.f1.dtype)),
                    Tensor(k.f0), Tensor(k.f1), Tensor(k.bias))
    return p.data


def heatmap_centroid(p: np.ndarray, spec: HistogramSpec) -> tuple[float, float]:
    """Probability-weighted mean of the bin-center coordinates."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (spec.bins, spec.bins):
        raise ShapeError(f"heatmap shape {p.shape} != ({spec.bins}, {spec.bins})")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise DomainError("heatmap must be normalized to unit sum")
    u = float((p.sum(axis=1) * spec.u_centers()).sum())
    v = float((p.sum(axis=0) * spec.v_centers()).sum())
    return u, v


def angular_error(a, b) -> float:
    """Angle between two RGB vectors in degrees."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0 or not (np.isfinite(na) and np.isfinite(nb)):
        raise DomainError("angular error of a zero or non-finite vector")
    cosv = np.clip(float(a @ b) / (na * nb), -1.0, 1.0)
    return float(np.degrees(np.arccos(cosv)))


@dataclass
class Model:
    """A trained (or freshly initialized) estimator with its configuration."""

    store: ParameterStore
    backbone_cfg: BackboneConfig
    cfe_cfg: CfeEncoderConfig
    query_spec: HistogramSpec = QUERY_SPEC
    cfe_spec: HistogramSpec = CFE_SPEC


def init_model(backbone_cfg: BackboneConfig | None = None,
               cfe_cfg: CfeEncoderConfig | None = None,
               query_spec: HistogramSpec = QUERY_SPEC,
               cfe_spec: HistogramSpec = CFE_SPEC,
               seed: int = 0, dtype=np.float64) -> Model:
    backbone_cfg = backbone_cfg or BackboneConfig()
    cfe_cfg = cfe_cfg or CfeEncoderConfig(bins=cfe_spec.bins)
    if backbone_cfg.bins != query_spec.bins:
        raise DomainError("backbone bins must match the query histogram spec")
    if cfe_cfg.bins != cfe_spec.bins:
        raise DomainError("encoder bins must match the locus histogram spec")
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    init_backbone_params(backbone_cfg, rng, store, dtype=dtype)
    init_cfe_params(cfe_cfg, rng, store, dtype=dtype)
    return Model(store=store, backbone_cfg=backbone_cfg, cfe_cfg=cfe_cfg,
                 query_spec=query_spec, cfe_spec=cfe_spec)


def camera_fingerprint(cal: CameraCalibration, model: Model) -> np.ndarray:
    """Fingerprint of a camera under this model's encoder."""
    g = guidance_illuminants(cal)
    h = cfe_histogram(g, model.cfe_spec)
    return encode_fingerprint(h, model.store, model.cfe_cfg)


def estimate_illuminant(image: RawImage, cal: CameraCalibration, model: Model,
                        zero_fingerprint: bool = False,
                        fingerprint: np.ndarray | None = None) -> IlluminantEstimate:
    """Full estimation pipeline for one raw image.

    Raises EstimationError when the image histogram is empty (no usable
    pixels).  An empty edge histogram is fine; the edge channel is then an
    all-zero map.  `fingerprint` short-circuits the encoder for callers that
    cache per-camera fingerprints; `zero_fingerprint` replaces it with zeros
    to measure how much the estimate relies on camera identity.
    """
    n0 = build_histogram(image, model.query_spec)
    if n0.empty:
        raise EstimationError("no usable pixels in image histogram")
    n1 = build_histogram(edge_image(image), model.query_spec)
    if zero_fingerprint:
        f = np.zeros(model.cfe_cfg.embed_dim)
    elif fingerprint is not None:
        f = np.asarray(fingerprint)
    else:
        f = camera_fingerprint(cal, model)
    kernel = backbone_forward(n0, n1, f, model.store, model.backbone_cfg)
    heatmap = apply_ccc(n0, n1, kernel)
    uv = heatmap_centroid(heatmap, model.query_spec)
    rgb = uv_to_rgb(uv)
    rgb = rgb / np.linalg.norm(rgb)
    return IlluminantEstimate(uv=uv, rgb=rgb, heatmap=heatmap)


# ---------------------------------------------------------------------------
# checkpoint format: u32 JSON header length, JSON config record, then the
# parameter stream documented in nn.params.

def _spec_dict(spec: HistogramSpec) -> dict:
    return {"bins": spec.bins, "u_min": spec.u_min, "u_max": spec.u_max,
            "v_min": spec.v_min, "v_max": spec.v_max}


def save_model(model: Model, path: str):
    header = {
        "backbone": {**asdict(model.backbone_cfg),
                     "widths": list(model.backbone_cfg.widths)},
        "cfe": {**asdict(model.cfe_cfg), "widths": list(model.cfe_cfg.widths)},
        "query_spec": _spec_dict(model.query_spec),
        "cfe_spec": _spec_dict(model.cfe_spec),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        f.write(serialize_params(model.store))


def load_model(path: str) -> Model:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4:
        raise FormatError("checkpoint too short for a header")
    (hlen,) = struct.unpack("<I", blob[:4])
    if 4 + hlen > len(blob):
        raise FormatError("checkpoint header overruns the file")
    try:
        header = json.loads(blob[4:4 + hlen].decode("utf-8"))
        backbone_cfg = BackboneConfig(
            widths=tuple(header["backbone"]["widths"]),
            in_channels=header["backbone"]["in_channels"],
            out_channels=header["backbone"]["out_channels"],
            bins=header["backbone"]["bins"])
        cfe_cfg = CfeEncoderConfig(
            bins=header["cfe"]["bins"], widths=tuple(header["cfe"]["widths"]),
            mlp_hidden=header["cfe"]["mlp_hidden"],
            embed_dim=header["cfe"]["embed_dim"])
        query_spec = HistogramSpec(**header["query_spec"])
        cfe_spec = HistogramSpec(**header["cfe_spec"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"malformed checkpoint header: {exc}") from exc
    store = deserialize_params(blob[4 + hlen:])
    return Model(store=store, backbone_cfg=backbone_cfg, cfe_cfg=cfe_cfg,
                 query_spec=query_spec, cfe_spec=cfe_spec)
